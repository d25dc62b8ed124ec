#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "relex/model.hpp"
#include "relex/random.hpp"
#include "relex/scene_graph.hpp"

namespace relex {

// Defaults are the full-scale values; desk-scale runs override the widths.
struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  std::size_t epochs = 18;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  double validation_fraction = 0.15;
  std::size_t hidden = 1024;
  std::size_t conv_kernels = 256;
  std::size_t conv_layers = 2;
  ad::PoolMode pooling = ad::PoolMode::Max;
  bool readout_bias = true;

  void validate() const;
  ModelDims model_dims(const TaskShape& task) const;

  // Keys mirror the field names; absent keys keep their defaults and
  // unknown keys are rejected.
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  // Absent when the validation split is empty.
  std::optional<double> validation_recall_at_5;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

// One line of the line-delimited training log.
std::string to_log_line(const EpochRecord& record);

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> log;
  Split split;  // indices into the training records
};

// Fits the classifier on image-level labels, using each record's
// ground-truth objects as a fully-connected graph. Per-batch objective is
// the mean of per-image summed BCE. A learning rate of 0 leaves the
// initial parameters untouched.
TrainResult train(std::span<const ImageRecord> records, const TaskShape& task,
                  const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Versioned JSON checkpoint.
inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Throws ShapeError when a checkpoint cannot run on data of `task`.
void check_compatible(const ModelParams& params, const TaskShape& task);

}  // namespace relex
