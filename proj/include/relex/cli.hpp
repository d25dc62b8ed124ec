#pragma once

// Subcommands of the `relex` tool. Each throws relex::Error (or a
// std::exception) on failure; the executable turns that into a one-line
// diagnostic and a nonzero exit code.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "relex/pipeline.hpp"

namespace relex::cli {

namespace fs = std::filesystem;

struct SynthArgs {
  std::optional<fs::path> config;
  fs::path out;  // directory receiving train.json and test.json
};
void synth(const SynthArgs& args);

struct TrainArgs {
  fs::path data;
  fs::path out;  // checkpoint; the log goes next to it unless `log` is set
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> log;
  bool quiet = false;
};
// Default log path for a checkpoint path: "<stem>.log.jsonl".
fs::path default_log_path(const fs::path& checkpoint);
void train(const TrainArgs& args);

struct DetectArgs {
  fs::path data;
  fs::path checkpoint;
  std::optional<fs::path> prior;  // uniform when absent
  std::string objects = "detected";
  double score_threshold = 0.3;
  std::size_t top_n = 10;
  std::string norm = "l1";
  std::size_t cap = 100;
  bool logit = false;
  std::vector<int> subject_classes;  // restricts edges when non-empty
  fs::path out;
  std::optional<fs::path> viz;
  std::size_t viz_top = 10;
};
void detect(const DetectArgs& args);

struct EvaluateArgs {
  fs::path detections;
  fs::path data;
  std::string mode = "relationship";
  double iou = 0.5;
  std::vector<std::size_t> recall_at = {50, 100};
  std::string map_class_key = "triplet";
  std::optional<fs::path> zero_shot_against;
  std::optional<fs::path> distractors;
  std::size_t max_per_image = 0;
  std::optional<fs::path> out;
};
// Returns the report; also writes it to `out` when set.
EvalReport evaluate(const EvaluateArgs& args);

struct PriorBuildArgs {
  fs::path data;
  double fraction = 0.15;
  std::uint64_t seed = 0;
  fs::path out;
};
void prior_build(const PriorBuildArgs& args);

}  // namespace relex::cli
