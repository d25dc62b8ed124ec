#pragma once

// Fixtures shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "relex/autodiff.hpp"
#include "relex/model.hpp"
#include "relex/random.hpp"
#include "relex/scene_graph.hpp"

namespace relex::testing {

inline constexpr double kImageWidth = 640.0;
inline constexpr double kImageHeight = 480.0;

inline Array random_array(Rng& rng, Shape shape, double scale = 1.0) {
  Array a(std::move(shape));
  for (double& v : a.data()) v = scale * rng.normal();
  return a;
}

// Boxes well inside the image with side lengths of at least 20 pixels.
inline BBox random_box(Rng& rng) {
  const double w = rng.uniform(20.0, 300.0);
  const double h = rng.uniform(20.0, 240.0);
  const double x = rng.uniform(0.0, kImageWidth - w);
  const double y = rng.uniform(0.0, kImageHeight - h);
  return {x, y, x + w, y + h};
}

inline std::vector<DetectedObject> random_objects(Rng& rng, std::size_t n,
                                                  const VisualSpec& visual,
                                                  std::size_t num_classes = 5) {
  std::vector<DetectedObject> out;
  for (std::size_t i = 0; i < n; ++i) {
    DetectedObject o;
    o.box = random_box(rng);
    o.class_id = static_cast<int>(rng.index(num_classes));
    o.score = rng.uniform(0.3, 1.0);
    if (visual.mode != VisualSpec::Mode::None) o.visual = random_array(rng, visual.shape());
    out.push_back(std::move(o));
  }
  return out;
}

inline ImageGraph random_graph(std::uint64_t seed, std::size_t n, const VisualSpec& visual,
                               std::size_t num_classes = 5) {
  Rng rng(seed);
  return build_graph(random_objects(rng, n, visual, num_classes), kImageWidth, kImageHeight);
}

inline ModelDims small_dims(const VisualSpec& visual, std::size_t num_predicates,
                            std::size_t hidden, ad::PoolMode pooling = ad::PoolMode::Max) {
  ModelDims d;
  d.task = {5, num_predicates, visual};
  d.hidden = hidden;
  d.conv_kernels = 2;
  d.conv_layers = 2;
  d.pooling = pooling;
  return d;
}

inline std::vector<std::uint8_t> random_labels(Rng& rng, std::size_t k) {
  std::vector<std::uint8_t> labels(k);
  for (auto& l : labels) l = rng.bernoulli(0.5) ? 1 : 0;
  return labels;
}

inline std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  rng.shuffle(p);
  return p;
}

// objects'[i] = objects[perm[i]]
inline std::vector<DetectedObject> permuted(const std::vector<DetectedObject>& objects,
                                            const std::vector<std::size_t>& perm) {
  std::vector<DetectedObject> out;
  for (std::size_t i : perm) out.push_back(objects[i]);
  return out;
}

// Relative error with a small absolute floor so exact zeros compare sanely.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kGradientTolerance = 1e-4;

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;
};

// Compares the reverse-mode gradient of a scalar-valued function of
// `inputs` against central finite differences, coordinate by coordinate.
// `build` records the function on a fresh tape from leaves of the inputs.
using ScalarBuilder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

inline GradientCheck check_gradients(std::vector<Array> inputs, const ScalarBuilder& build) {
  auto evaluate = [&](std::vector<Array>& values, bool want_grads,
                      std::vector<Array>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (std::size_t i = 0; i < values.size(); ++i) {
      leaves.push_back(tape.parameter("x" + std::to_string(i), values[i]));
    }
    const ad::Var out = build(tape, leaves);
    if (want_grads) {
      const ad::Gradients g = tape.backward(out);
      for (const ad::Var& l : leaves) grads->push_back(g.of(l));
    }
    return out.value()[0];
  };
  std::vector<Array> analytic;
  evaluate(inputs, true, &analytic);

  GradientCheck result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t c = 0; c < inputs[i].size(); ++c) {
      const double saved = inputs[i][c];
      inputs[i][c] = saved + kFiniteDifferenceStep;
      const double up = evaluate(inputs, false, nullptr);
      inputs[i][c] = saved - kFiniteDifferenceStep;
      const double down = evaluate(inputs, false, nullptr);
      inputs[i][c] = saved;
      const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
      const double err = relative_error(analytic[i][c], numeric);
      ++result.coordinates;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst = "input " + std::to_string(i) + "[" + std::to_string(c) +
                       "] analytic " + std::to_string(analytic[i][c]) + " numeric " +
                       std::to_string(numeric);
      }
    }
  }
  return result;
}

// Reduces any output to a scalar through a fixed random projection so the
// check covers the full Jacobian.
inline ad::Var project(ad::Var out, std::uint64_t seed) {
  Rng rng(seed);
  Array w = random_array(rng, {out.value().size()});
  ad::Tape& tape = out.tape();
  const ad::Var flat = out.value().rank() == 1 ? out : ad::flatten(out);
  const ad::Var weights = tape.constant(Array({1, w.size()}, w.values()));
  return ad::linear(flat, weights);
}

inline double loss_value(const ModelParams& params, const ImageGraph& graph,
                         const std::vector<std::uint8_t>& labels) {
  ad::Tape tape;
  return loss(forward(params, graph, tape), labels).value()[0];
}

// Full model + loss gradient check over every parameter and every raw
// input leaf (node spatial, node visual, edge attributes) of one graph.
inline GradientCheck check_model_gradients(const ModelParams& params, const ImageGraph& graph,
                                           const std::vector<std::uint8_t>& labels) {
  ad::Tape tape;
  const ForwardPass pass = forward(params, graph, tape);
  const ad::Gradients grads = tape.backward(loss(pass, labels));

  GradientCheck result;
  auto compare = [&](const Array& analytic, const std::string& what, auto&& perturb) {
    for (std::size_t c = 0; c < analytic.size(); ++c) {
      const double up = perturb(c, kFiniteDifferenceStep);
      const double down = perturb(c, -kFiniteDifferenceStep);
      const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
      const double err = relative_error(analytic[c], numeric);
      ++result.coordinates;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst = what + "[" + std::to_string(c) + "] analytic " +
                       std::to_string(analytic[c]) + " numeric " + std::to_string(numeric);
      }
    }
  };

  for (std::size_t p = 0; p < params.values().size(); ++p) {
    compare(grads.of(pass.parameters[p]), params.names()[p], [&](std::size_t c, double h) {
      ModelParams shifted = params;
      shifted.values()[p][c] += h;
      return loss_value(shifted, graph, labels);
    });
  }
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    compare(grads.of(pass.node_spatial[i]), "node spatial", [&](std::size_t c, double h) {
      ImageGraph g = graph;
      g.nodes[i].spatial[c] += h;
      return loss_value(params, g, labels);
    });
    if (pass.node_visual[i].valid()) {
      compare(grads.of(pass.node_visual[i]), "node visual", [&](std::size_t c, double h) {
        ImageGraph g = graph;
        g.nodes[i].visual[c] += h;
        return loss_value(params, g, labels);
      });
    }
  }
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    compare(grads.of(pass.edge_attributes[e]), "edge", [&](std::size_t c, double h) {
      ImageGraph g = graph;
      g.edges[e].attributes[c] += h;
      return loss_value(params, g, labels);
    });
  }
  return result;
}

}  // namespace relex::testing
