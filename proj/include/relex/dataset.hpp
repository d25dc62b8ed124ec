#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relex/model.hpp"
#include "relex/prior.hpp"
#include "relex/scene_graph.hpp"

namespace relex {

inline constexpr int kDatasetSchemaVersion = 1;

struct DatasetHeader {
  int schema_version = kDatasetSchemaVersion;
  std::size_t num_classes = 0;
  std::size_t num_predicates = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> predicate_names;
  VisualSpec visual;
  // Sidecar holding map-mode features, relative to the dataset file.
  std::string feature_file;

  TaskShape task() const { return {num_classes, num_predicates, visual}; }
};

struct Dataset {
  DatasetHeader header;
  std::vector<ImageRecord> images;
};

// Checks every invariant of a dataset; errors name the image and field.
void validate_dataset(const Dataset& dataset);

// Reads and validates a dataset file (and its sidecar, if any). Throws
// VersionError, BoundsError, MissingFeatureError, ValidationError or
// FormatError.
Dataset load_dataset(const std::filesystem::path& path);

// Writes the JSON file and, for map-mode features, the sidecar named by
// header.feature_file (defaults to "<stem>.features.bin").
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// (subject class, predicate, object class) of every ground-truth triplet.
std::vector<TripletClass> triplet_classes(std::span<const ImageRecord> images);

// Records selected by index.
std::vector<ImageRecord> select(std::span<const ImageRecord> images,
                                std::span<const std::size_t> indices);

}  // namespace relex
