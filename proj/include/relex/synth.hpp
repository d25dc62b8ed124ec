#pragma once

// Planted-relation generator: every ground-truth triplet is a pair of
// objects whose classes and geometry satisfy one of the configured rules,
// and image labels are exactly the predicates of those triplets.

#include <cstdint>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "relex/dataset.hpp"

namespace relex {

// Spatial templates are defined on the subject -> object edge features.
enum class SpatialTemplate {
  LeftOf,      // cos(angle) > 0.9: object lies to the right of the subject
  Above,       // sin(angle) > 0.9: object lies below the subject (y down)
  Containing,  // object box inside subject box, area ratio <= 0.5
  Near,        // center distance / sqrt(W*H) < 0.15
};

const char* to_string(SpatialTemplate t);
SpatialTemplate spatial_template_from_string(std::string_view name);

bool satisfies(SpatialTemplate t, const BBox& subject, const BBox& object, double image_width,
               double image_height);

struct SynthRule {
  int subject_class = 0;
  int object_class = 0;
  SpatialTemplate relation = SpatialTemplate::LeftOf;
  int predicate = 0;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t num_classes = 10;
  std::size_t num_predicates = 6;
  std::size_t train_images = 2000;
  std::size_t test_images = 400;
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  // Rules planted per image (at least 1).
  std::size_t max_planted = 2;
  std::vector<SynthRule> rules = default_rules();
  double visual_noise = 0.1;
  std::size_t visual_dim = 16;
  // Emit c x 7 x 7 maps (c = visual_dim) through a sidecar instead of flat vectors.
  bool visual_maps = false;
  double image_width = 640.0;
  double image_height = 480.0;
  // Detector simulation: per-coordinate box jitter as a fraction of box
  // size, and the chance of one spurious low-score detection per image.
  double detection_jitter = 0.04;
  double false_positive_rate = 0.3;

  static std::vector<SynthRule> default_rules();

  // Throws ValidationError for an unsatisfiable configuration.
  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static SynthConfig from_json(const nlohmann::json& doc);
};

struct SynthSplits {
  Dataset train;
  Dataset test;
};

SynthSplits generate_synthetic(const SynthConfig& config);

}  // namespace relex
