#include "relex/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relex/errors.hpp"
#include "relex/random.hpp"

namespace relex {

std::size_t ModelDims::node_width() const {
  return task.visual.mode == VisualSpec::Mode::None ? hidden : 2 * hidden;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelDims& dims) {
  if (dims.hidden == 0) throw ShapeError("hidden width must be positive");
  if (dims.task.num_predicates == 0) throw ShapeError("number of predicates must be positive");
  std::vector<std::pair<std::string, Shape>> layout;
  const std::size_t h = dims.hidden;
  const VisualSpec& visual = dims.task.visual;
  switch (visual.mode) {
    case VisualSpec::Mode::None:
      break;
    case VisualSpec::Mode::Flat:
      if (visual.dim == 0) throw ShapeError("flat visual dimension must be positive");
      layout.emplace_back("node.visual.weight", Shape{h, visual.dim});
      layout.emplace_back("node.visual.bias", Shape{h});
      break;
    case VisualSpec::Mode::Map: {
      if (visual.channels == 0 || visual.height == 0 || visual.width == 0) {
        throw ShapeError("visual map dimensions must be positive");
      }
      std::size_t channels = visual.channels;
      for (std::size_t l = 0; l < dims.conv_layers; ++l) {
        if (dims.conv_kernels == 0) throw ShapeError("conv kernel count must be positive");
        const std::string prefix = "node.visual.conv" + std::to_string(l);
        layout.emplace_back(prefix + ".kernels", Shape{dims.conv_kernels, channels, 3, 3});
        layout.emplace_back(prefix + ".bias", Shape{dims.conv_kernels});
        channels = dims.conv_kernels;
      }
      layout.emplace_back("node.visual.weight",
                          Shape{h, channels * visual.height * visual.width});
      layout.emplace_back("node.visual.bias", Shape{h});
      break;
    }
  }
  layout.emplace_back("node.spatial.weight", Shape{h, 3});
  layout.emplace_back("node.spatial.bias", Shape{h});
  layout.emplace_back("edge.weight", Shape{h, 5});
  layout.emplace_back("edge.bias", Shape{h});
  layout.emplace_back("relation.weight", Shape{h, 2 * dims.node_width() + h});
  layout.emplace_back("relation.bias", Shape{h});
  layout.emplace_back("readout.weight", Shape{dims.task.num_predicates, h});
  if (dims.readout_bias) layout.emplace_back("readout.bias", Shape{dims.task.num_predicates});
  return layout;
}

ModelParams::ModelParams(ModelDims dims, std::vector<Array> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  const auto layout = parameter_layout(dims_);
  if (layout.size() != values_.size()) {
    throw ShapeError("model expects " + std::to_string(layout.size()) + " tensors, got " +
                     std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (values_[i].shape() != layout[i].second) {
      throw ShapeError("parameter " + layout[i].first + " has shape " +
                       shape_to_string(values_[i].shape()) + ", expected " +
                       shape_to_string(layout[i].second));
    }
    names_.push_back(layout[i].first);
  }
}

ModelParams ModelParams::initialize(const ModelDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Array> values;
  for (const auto& [name, shape] : parameter_layout(dims)) {
    Array a(shape);
    if (shape.size() >= 2) {
      std::size_t receptive = 1;
      for (std::size_t d = 2; d < shape.size(); ++d) receptive *= shape[d];
      const double fan_out = static_cast<double>(shape[0] * receptive);
      const double fan_in = static_cast<double>(shape[1] * receptive);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : a.data()) v = rng.uniform(-limit, limit);
    }
    values.push_back(std::move(a));
  }
  return ModelParams(dims, std::move(values));
}

const Array& ModelParams::get(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return values_[i];
  }
  throw Error("no parameter named '" + std::string(name) + "'");
}

ForwardPass forward(const ModelParams& params, const ImageGraph& graph, ad::Tape& tape) {
  const ModelDims& dims = params.dims();
  const VisualSpec& visual = dims.task.visual;
  const Shape visual_shape = visual.shape();

  ForwardPass pass;
  for (std::size_t i = 0; i < params.names().size(); ++i) {
    pass.parameters.push_back(tape.parameter(params.names()[i], params.values()[i]));
  }
  auto param = [&](std::string_view name) {
    for (std::size_t i = 0; i < params.names().size(); ++i) {
      if (params.names()[i] == name) return pass.parameters[i];
    }
    throw Error("no parameter named '" + std::string(name) + "'");
  };

  const ad::Var spatial_w = param("node.spatial.weight");
  const ad::Var spatial_b = param("node.spatial.bias");
  const ad::Var edge_w = param("edge.weight");
  const ad::Var edge_b = param("edge.bias");
  const ad::Var rel_w = param("relation.weight");
  const ad::Var rel_b = param("relation.bias");

  std::vector<ad::Var> node_vectors;
  node_vectors.reserve(graph.nodes.size());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const GraphNode& node = graph.nodes[i];
    const std::string prefix = "node/" + std::to_string(i);
    ad::Var spatial = tape.input(prefix + "/spatial", node.spatial);
    pass.node_spatial.push_back(spatial);
    ad::Var spatial_h = ad::relu(ad::linear(spatial, spatial_w, spatial_b));

    if (visual.mode == VisualSpec::Mode::None) {
      pass.node_visual.emplace_back();
      node_vectors.push_back(spatial_h);
      continue;
    }
    if (node.visual.shape() != visual_shape) {
      throw ShapeError("node " + std::to_string(i) + " visual feature has shape " +
                       shape_to_string(node.visual.shape()) + ", model expects " +
                       shape_to_string(visual_shape));
    }
    ad::Var v = tape.input(prefix + "/visual", node.visual);
    pass.node_visual.push_back(v);
    if (visual.mode == VisualSpec::Mode::Map) {
      for (std::size_t l = 0; l < dims.conv_layers; ++l) {
        const std::string conv = "node.visual.conv" + std::to_string(l);
        v = ad::relu(ad::conv3x3(v, param(conv + ".kernels"), param(conv + ".bias")));
      }
      v = ad::flatten(v);
    }
    ad::Var visual_h =
        ad::relu(ad::linear(v, param("node.visual.weight"), param("node.visual.bias")));
    const ad::Var parts[] = {visual_h, spatial_h};
    node_vectors.push_back(ad::concat(parts));
  }

  std::vector<ad::Var> relations;
  relations.reserve(graph.edges.size());
  for (const GraphEdge& edge : graph.edges) {
    if (edge.from >= graph.nodes.size() || edge.to >= graph.nodes.size()) {
      throw BoundsError("edge references a missing node");
    }
    ad::Var e = tape.input(
        "edge/" + std::to_string(edge.from) + "->" + std::to_string(edge.to), edge.attributes);
    pass.edge_attributes.push_back(e);
    ad::Var edge_h = ad::relu(ad::linear(e, edge_w, edge_b));
    const ad::Var parts[] = {node_vectors[edge.from], edge_h, node_vectors[edge.to]};
    relations.push_back(ad::relu(ad::linear(ad::concat(parts), rel_w, rel_b)));
  }

  ad::Var pooled = relations.empty() ? tape.constant(Array({dims.hidden}))
                                     : ad::pool_set(relations, dims.pooling);
  pass.logits = dims.readout_bias
                    ? ad::linear(pooled, param("readout.weight"), param("readout.bias"))
                    : ad::linear(pooled, param("readout.weight"));
  pass.probabilities = ad::sigmoid(pass.logits);
  return pass;
}

std::vector<double> predict(const ModelParams& params, const ImageGraph& graph) {
  ad::Tape tape;
  const ForwardPass pass = forward(params, graph, tape);
  return pass.probabilities.value().values();
}

Array labels_to_array(std::span<const std::uint8_t> labels) {
  std::vector<double> values(labels.begin(), labels.end());
  return Array::vector(std::move(values));
}

ad::Var loss(const ForwardPass& pass, std::span<const std::uint8_t> labels) {
  return ad::bce_loss(pass.probabilities, labels_to_array(labels));
}

double recall_at_k(std::span<const double> scores, std::span<const std::uint8_t> labels,
                   std::size_t k) {
  if (k == 0) throw ValidationError("recall_at_k: k must be at least 1");
  if (scores.size() != labels.size()) {
    throw ShapeError("recall_at_k: " + std::to_string(scores.size()) + " scores but " +
                     std::to_string(labels.size()) + " labels");
  }
  const auto positives = std::count(labels.begin(), labels.end(), std::uint8_t{1});
  if (positives == 0) return 1.0;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    if (labels[order[r]] == 1) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(positives);
}

}  // namespace relex
