#pragma once

// Graph-based predicate classifier.
//
//   node:     n'_i  = [relu(visual path(n^v_i)) ; relu(W_s n^s_i + b_s)]
//   edge:     e'_ij = relu(W_e e_ij + b_e)
//   relation: e''_ij = relu(W_r [n'_i ; e'_ij ; n'_j] + b_r)
//   readout:  y = sigmoid(W_p pool{e''_ij} + b_p)
//
// The visual path is a single Linear+ReLU for flat features, or
// conv_layers x (Conv3x3+ReLU) followed by a flattening Linear+ReLU for
// feature maps. Pooling over an empty edge set yields the zero vector.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relex/array.hpp"
#include "relex/autodiff.hpp"
#include "relex/scene_graph.hpp"

namespace relex {

// Sizes fixed by the dataset rather than by the model.
struct TaskShape {
  std::size_t num_classes = 0;
  std::size_t num_predicates = 0;
  VisualSpec visual;

  friend bool operator==(const TaskShape&, const TaskShape&) = default;
};

struct ModelDims {
  TaskShape task;
  std::size_t hidden = 1024;
  std::size_t conv_kernels = 256;
  std::size_t conv_layers = 2;
  ad::PoolMode pooling = ad::PoolMode::Max;
  bool readout_bias = true;

  // Length of a projected node vector.
  std::size_t node_width() const;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Names and shapes of every learnable tensor, in canonical order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelDims& dims);

class ModelParams {
 public:
  ModelParams() = default;
  // Throws ShapeError unless `values` matches parameter_layout(dims).
  ModelParams(ModelDims dims, std::vector<Array> values);

  // Glorot-uniform weights and kernels, zero biases.
  static ModelParams initialize(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const noexcept { return dims_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::span<const Array> values() const noexcept { return values_; }
  std::span<Array> values() noexcept { return values_; }
  const Array& get(std::string_view name) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  ModelDims dims_;
  std::vector<std::string> names_;
  std::vector<Array> values_;
};

// Handles into the tape for one forward pass.
struct ForwardPass {
  ad::Var logits;
  ad::Var probabilities;
  // Parallel to ModelParams::values().
  std::vector<ad::Var> parameters;
  // Raw differentiable inputs, per node and per edge of the graph.
  std::vector<ad::Var> node_spatial;
  std::vector<ad::Var> node_visual;  // invalid Vars when visual mode is None
  std::vector<ad::Var> edge_attributes;
};

// Throws ShapeError if a node's visual feature does not match the model.
ForwardPass forward(const ModelParams& params, const ImageGraph& graph, ad::Tape& tape);

// Forward without keeping the tape; returns y.
std::vector<double> predict(const ModelParams& params, const ImageGraph& graph);

Array labels_to_array(std::span<const std::uint8_t> labels);

// Summed binary cross entropy of a forward pass against image-level labels.
ad::Var loss(const ForwardPass& pass, std::span<const std::uint8_t> labels);

// Fraction of positive labels found among the k highest scores (ties broken
// toward the lower index). 1 when there are no positives.
double recall_at_k(std::span<const double> scores, std::span<const std::uint8_t> labels,
                   std::size_t k);

}  // namespace relex
