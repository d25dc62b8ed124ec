#pragma once

// End-to-end stages shared by the command line tool and the tests:
// explanation over a whole dataset, the detection file format, and
// assembly of evaluation inputs.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "relex/dataset.hpp"
#include "relex/explainer.hpp"
#include "relex/metrics.hpp"
#include "relex/model.hpp"
#include "relex/prior.hpp"

namespace relex {

enum class ObjectSource { Detected, GroundTruth };

const char* to_string(ObjectSource source);
ObjectSource object_source_from_string(std::string_view name);

struct DetectOptions {
  ObjectSource objects = ObjectSource::Detected;
  double score_threshold = 0.3;
  ExplainConfig explain;
  EdgeStructure structure;
};

struct ImageDetections {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<RelationshipDetection> detections;
};

// Graph nodes for one image. Ground-truth objects get a detection score of 1.
std::vector<DetectedObject> graph_objects(const ImageRecord& image, const DetectOptions& options);

// Runs explanation-based detection on every image of `dataset`. Throws
// before any compute if the checkpoint or prior does not fit the dataset.
std::vector<ImageDetections> run_detection(const ModelParams& params, const Dataset& dataset,
                                           const PriorTable* prior,
                                           const DetectOptions& options);

inline constexpr int kDetectionFormatVersion = 1;

nlohmann::json detections_to_json(const std::vector<ImageDetections>& images,
                                  const DatasetHeader& header, const DetectOptions& options,
                                  const std::string& prior_description);

// Scored triplets per image id, exactly as stored.
std::map<std::string, std::vector<Triplet>> triplets_from_detection_json(
    const nlohmann::json& doc);

// Overlay description for plotting tools: boxes plus the top triplets.
nlohmann::json visualization_report(const std::vector<ImageDetections>& images,
                                    const Dataset& dataset, const DetectOptions& options,
                                    std::size_t top = 10);

// Ground-truth triplets of an image as scored-free Triplets.
std::vector<Triplet> ground_truth_triplets(const ImageRecord& image);

// One ImageEval per dataset image, plus one ground-truth-free entry per
// distractor image. `seen`, when given, restricts ground truth to unseen
// class triplets.
std::vector<ImageEval> build_eval_set(
    const Dataset& dataset, const std::map<std::string, std::vector<Triplet>>& detections,
    const std::map<std::string, std::vector<Triplet>>* distractors = nullptr,
    const std::set<TripletClass>* seen = nullptr);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace relex
