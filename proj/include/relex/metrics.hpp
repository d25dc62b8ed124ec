#pragma once

// Matching and ranking metrics for detected triplets.

#include <array>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "relex/prior.hpp"
#include "relex/scene_graph.hpp"

namespace relex {

enum class MatchVariant { Relationship, Phrase, Predicate, SubjectOnly };

const char* to_string(MatchVariant variant);
MatchVariant match_variant_from_string(std::string_view name);

struct MatchMode {
  MatchVariant variant = MatchVariant::Relationship;
  // Boxes match when IoU is strictly greater than this.
  double iou_threshold = 0.5;

  void validate() const;
};

// A detected (with score) or ground-truth triplet.
struct Triplet {
  BBox subject_box;
  int subject_class = 0;
  int predicate = 0;
  BBox object_box;
  int object_class = 0;
  double score = 0.0;

  TripletClass classes() const { return {subject_class, predicate, object_class}; }
};

struct ImageEval {
  std::string image_id;
  std::vector<Triplet> detections;
  std::vector<Triplet> ground_truth;
};

// Greedy matching of score-sorted detections. A detection is a true
// positive when some still-unmatched ground truth has equal categories and
// overlapping boxes under `mode`; among eligible ground truths the one with
// the highest relevant IoU (relationship/predicate: the smaller of the two
// box IoUs) is consumed, earliest on ties.
std::vector<bool> match_detections(std::span<const Triplet> detections,
                                   std::span<const Triplet> ground_truth,
                                   const MatchMode& mode);

// Stable descending sort by score.
std::vector<Triplet> sorted_by_score(std::span<const Triplet> detections);

// Matched ground truths over all ground truths, keeping the x best
// detections per image. Throws ValidationError when there is no ground truth.
double recall_at_x(std::span<const ImageEval> images, std::size_t x, const MatchMode& mode);

enum class ClassKey { Hoi, Triplet };

const char* to_string(ClassKey key);
ClassKey class_key_from_string(std::string_view name);

// Class identity under a key; unused slots are -1.
std::array<int, 3> class_of(const Triplet& t, ClassKey key);

struct ClassAp {
  std::array<int, 3> key{};
  double ap = 0.0;
  std::size_t num_ground_truth = 0;
  std::size_t num_detections = 0;
};

struct EvalReport {
  MatchMode mode;
  ClassKey class_key = ClassKey::Triplet;
  std::vector<ClassAp> per_class;  // only classes with ground truth
  double mean_ap = 0.0;
  std::map<std::size_t, double> recall_at;
  std::size_t num_ground_truth = 0;
  std::size_t num_detections = 0;
  std::size_t num_images = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// 11-point interpolated AP: mean over r in {0, 0.1, ..., 1} of the best
// precision achieved at recall >= r. `true_positive` is in rank order.
double eleven_point_ap(const std::vector<bool>& true_positive, std::size_t num_ground_truth);

// Per-class AP pooled over images, and their mean over classes with at
// least one ground truth. Detections are capped per image when
// `max_per_image` is non-zero.
EvalReport interpolated_map(std::span<const ImageEval> images, const MatchMode& mode,
                            ClassKey key, std::size_t max_per_image = 0);

// interpolated_map plus recall at each requested x.
EvalReport evaluate(std::span<const ImageEval> images, const MatchMode& mode, ClassKey key,
                    std::span<const std::size_t> recall_xs, std::size_t max_per_image = 0);

// Ground truths whose class triplet never occurs in `seen`.
std::vector<Triplet> zero_shot_filter(std::span<const Triplet> ground_truth,
                                      const std::set<TripletClass>& seen);

}  // namespace relex
