#include "relex/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "relex/errors.hpp"

namespace relex::ad {

namespace {

constexpr std::size_t kNoLeaf = static_cast<std::size_t>(-1);

Tape& common_tape(std::span<const Var> vars, const char* op) {
  if (vars.empty() || !vars.front().valid()) {
    throw Error(std::string(op) + ": operand is not attached to a tape");
  }
  Tape& tape = vars.front().tape();
  for (const Var& v : vars) {
    if (!v.valid() || &v.tape() != &tape) {
      throw Error(std::string(op) + ": operands live on different tapes");
    }
  }
  return tape;
}

void require_shape(const char* op, const char* operand, const Array& a,
                   const Shape& expected) {
  if (a.shape() != expected) {
    throw ShapeError(std::string(op) + ": " + operand + " has shape " +
                     shape_to_string(a.shape()) + ", expected " +
                     shape_to_string(expected));
  }
}

void require_rank(const char* op, const char* operand, const Array& a,
                  std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + operand + " has shape " +
                     shape_to_string(a.shape()) + ", expected rank " +
                     std::to_string(rank));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var linear_impl(Var x, Var weight, const Var* bias) {
  std::vector<Var> operands{x, weight};
  if (bias) operands.push_back(*bias);
  Tape& tape = common_tape(operands, "linear");

  const Array& xv = x.value();
  const Array& wv = weight.value();
  require_rank("linear", "x", xv, 1);
  require_rank("linear", "W", wv, 2);
  const std::size_t m = wv.shape()[0];
  const std::size_t n = wv.shape()[1];
  if (n != xv.size()) {
    throw ShapeError("linear: W has shape " + shape_to_string(wv.shape()) +
                     ", expected [" + std::to_string(m) + ", " +
                     std::to_string(xv.size()) + "] to match x");
  }
  if (bias) require_shape("linear", "b", bias->value(), {m});

  Array out({m});
  const auto xd = xv.data();
  const auto wd = wv.data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = wd.data() + r * n;
    double acc = bias ? bias->value()[r] : 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += row[c] * xd[c];
    out[r] = acc;
  }

  const bool has_bias = bias != nullptr;
  return tape.record(std::move(out), std::move(operands),
                     [m, n, has_bias](const BackwardContext& ctx) {
                       const auto g = ctx.grad_output().data();
                       const auto xd = ctx.input(0).data();
                       const auto wd = ctx.input(1).data();
                       if (Array* gx = ctx.grad_input(0)) {
                         auto gxd = gx->data();
                         for (std::size_t r = 0; r < m; ++r) {
                           const double gr = g[r];
                           if (gr == 0.0) continue;
                           const double* row = wd.data() + r * n;
                           for (std::size_t c = 0; c < n; ++c) gxd[c] += row[c] * gr;
                         }
                       }
                       if (Array* gw = ctx.grad_input(1)) {
                         auto gwd = gw->data();
                         for (std::size_t r = 0; r < m; ++r) {
                           const double gr = g[r];
                           if (gr == 0.0) continue;
                           double* row = gwd.data() + r * n;
                           for (std::size_t c = 0; c < n; ++c) row[c] += gr * xd[c];
                         }
                       }
                       if (has_bias) {
                         if (Array* gb = ctx.grad_input(2)) {
                           auto gbd = gb->data();
                           for (std::size_t r = 0; r < m; ++r) gbd[r] += g[r];
                         }
                       }
                     });
}

}  // namespace

const Array& Var::value() const {
  if (!tape_) throw Error("value of a detached variable");
  return tape_->value(*this);
}

const Array& Gradients::of(Var leaf) const {
  if (!tape_ || !leaf.valid() || &leaf.tape() != tape_) {
    throw Error("gradient requested for a variable of another tape");
  }
  const std::size_t slot = tape_->nodes_[leaf.id()].leaf_slot;
  if (slot == kNoLeaf) throw Error("gradient requested for a non-leaf variable");
  return leaf_grads_[slot];
}

const Array& Gradients::of(std::string_view leaf_name) const {
  auto it = tape_->leaf_by_name_.find(leaf_name);
  if (it == tape_->leaf_by_name_.end()) {
    throw Error("no leaf named '" + std::string(leaf_name) + "'");
  }
  return leaf_grads_[it->second];
}

std::map<std::string, Array> Gradients::by_name() const {
  std::map<std::string, Array> out;
  for (std::size_t i = 0; i < tape_->leaves_.size(); ++i) {
    out.emplace(tape_->leaves_[i].name, leaf_grads_[i]);
  }
  return out;
}

Var Tape::parameter(std::string name, const Array& value) {
  if (leaf_by_name_.contains(name)) throw Error("duplicate leaf name '" + name + "'");
  Node node;
  node.borrowed = &value;
  node.requires_grad = true;
  node.leaf_slot = leaves_.size();
  nodes_.push_back(std::move(node));
  leaf_by_name_.emplace(name, leaves_.size());
  leaves_.push_back({std::move(name), nodes_.size() - 1});
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(std::string name, Array value) {
  if (leaf_by_name_.contains(name)) throw Error("duplicate leaf name '" + name + "'");
  Node node;
  node.owned = std::move(value);
  node.requires_grad = true;
  node.leaf_slot = leaves_.size();
  nodes_.push_back(std::move(node));
  leaf_by_name_.emplace(name, leaves_.size());
  leaves_.push_back({std::move(name), nodes_.size() - 1});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Array value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Array value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in, "record");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v, const char* what) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
    throw Error(std::string(what) + ": variable is not on this tape");
  }
}

const Array& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id()].value();
}

bool Tape::requires_grad(Var v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id()].requires_grad;
}

Gradients Tape::backward(Var output) const {
  check_owned(output, "backward");
  const Array& out = nodes_[output.id()].value();
  if (out.size() != 1) {
    throw ShapeError("backward: output has shape " + shape_to_string(out.shape()) +
                     ", expected a single element (select a component)");
  }
  return backward(output, Array::full(out.shape(), 1.0));
}

Gradients Tape::backward(Var output, std::size_t component) const {
  check_owned(output, "backward");
  const Array& out = nodes_[output.id()].value();
  if (component >= out.size()) {
    throw ShapeError("backward: component " + std::to_string(component) +
                     " out of range for output of shape " +
                     shape_to_string(out.shape()));
  }
  Array seed(out.shape());
  seed[component] = 1.0;
  return backward(output, seed);
}

Gradients Tape::backward(Var output, const Array& seed) const {
  check_owned(output, "backward");
  require_shape("backward", "seed", seed, nodes_[output.id()].value().shape());

  std::vector<Array> grads(output.id() + 1);
  grads[output.id()] = seed;

  std::vector<const Array*> input_values;
  std::vector<Array*> input_grads;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward || grads[id].empty()) continue;
    input_values.clear();
    input_grads.clear();
    for (std::size_t in : node.inputs) {
      const Node& src = nodes_[in];
      input_values.push_back(&src.value());
      if (src.requires_grad) {
        if (grads[in].empty()) grads[in] = Array(src.value().shape());
        input_grads.push_back(&grads[in]);
      } else {
        input_grads.push_back(nullptr);
      }
    }
    BackwardContext ctx;
    ctx.output_ = &node.value();
    ctx.grad_output_ = &grads[id];
    ctx.inputs_ = input_values;
    ctx.grad_inputs_ = input_grads;
    node.backward(ctx);
  }

  Gradients result;
  result.tape_ = this;
  result.leaf_grads_.reserve(leaves_.size());
  for (const Leaf& leaf : leaves_) {
    if (leaf.node < grads.size() && !grads[leaf.node].empty()) {
      result.leaf_grads_.push_back(std::move(grads[leaf.node]));
    } else {
      result.leaf_grads_.emplace_back(nodes_[leaf.node].value().shape());
    }
  }
  return result;
}

const char* to_string(PoolMode mode) {
  switch (mode) {
    case PoolMode::Max: return "max";
    case PoolMode::Mean: return "mean";
    case PoolMode::Sum: return "sum";
  }
  return "max";
}

PoolMode pool_mode_from_string(std::string_view name) {
  if (name == "max") return PoolMode::Max;
  if (name == "mean") return PoolMode::Mean;
  if (name == "sum" || name == "add") return PoolMode::Sum;
  throw ValidationError("unknown pooling mode '" + std::string(name) + "'");
}

Var linear(Var x, Var weight, Var bias) { return linear_impl(x, weight, &bias); }

Var linear(Var x, Var weight) { return linear_impl(x, weight, nullptr); }

Var relu(Var x) {
  const Array& xv = x.value();
  Array out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    Array* gx = ctx.grad_input(0);
    if (!gx) return;
    const Array& xv = ctx.input(0);
    const Array& g = ctx.grad_output();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > 0.0) (*gx)[i] += g[i];
    }
  });
}

Var sigmoid(Var x) {
  const Array& xv = x.value();
  Array out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    Array* gx = ctx.grad_input(0);
    if (!gx) return;
    const Array& s = ctx.output();
    const Array& g = ctx.grad_output();
    for (std::size_t i = 0; i < s.size(); ++i) (*gx)[i] += g[i] * s[i] * (1.0 - s[i]);
  });
}

Var conv3x3(Var x, Var kernels, Var bias) {
  const Var operands[] = {x, kernels, bias};
  Tape& tape = common_tape(operands, "conv3x3");
  const Array& xv = x.value();
  const Array& kv = kernels.value();
  require_rank("conv3x3", "x", xv, 3);
  require_rank("conv3x3", "kernels", kv, 4);
  const std::size_t c_in = xv.shape()[0];
  const std::size_t h = xv.shape()[1];
  const std::size_t w = xv.shape()[2];
  const std::size_t c_out = kv.shape()[0];
  if (h == 0 || w == 0) throw ShapeError("conv3x3: empty spatial extent");
  require_shape("conv3x3", "kernels", kv, {c_out, c_in, 3, 3});
  require_shape("conv3x3", "bias", bias.value(), {c_out});

  // Calls fn(o, ci, y, x, ky, kx, iy, ix) for every in-bounds tap.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t ci = 0; ci < c_in; ++ci)
        for (std::size_t oy = 0; oy < h; ++oy)
          for (std::size_t ox = 0; ox < w; ++ox)
            for (std::size_t ky = 0; ky < 3; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - 1;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - 1;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                fn((o * h + oy) * w + ox, ((o * c_in + ci) * 3 + ky) * 3 + kx,
                   (ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix));
              }
            }
  };

  Array out({c_out, h, w});
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t p = 0; p < h * w; ++p) out[o * h * w + p] = bias.value()[o];
  for_each_tap([&](std::size_t out_i, std::size_t k_i, std::size_t in_i) {
    out[out_i] += kv[k_i] * xv[in_i];
  });

  return tape.record(std::move(out), {x, kernels, bias},
                     [for_each_tap, c_out, h, w](const BackwardContext& ctx) {
                       const Array& g = ctx.grad_output();
                       const Array& xv = ctx.input(0);
                       const Array& kv = ctx.input(1);
                       Array* gx = ctx.grad_input(0);
                       Array* gk = ctx.grad_input(1);
                       if (gx || gk) {
                         for_each_tap([&](std::size_t out_i, std::size_t k_i,
                                          std::size_t in_i) {
                           if (gx) (*gx)[in_i] += kv[k_i] * g[out_i];
                           if (gk) (*gk)[k_i] += xv[in_i] * g[out_i];
                         });
                       }
                       if (Array* gb = ctx.grad_input(2)) {
                         for (std::size_t o = 0; o < c_out; ++o)
                           for (std::size_t p = 0; p < h * w; ++p)
                             (*gb)[o] += g[o * h * w + p];
                       }
                     });
}

Var flatten(Var x) {
  const Array& xv = x.value();
  Array out({xv.size()}, xv.values());
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    Array* gx = ctx.grad_input(0);
    if (!gx) return;
    const Array& g = ctx.grad_output();
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat: empty list of parts");
  Tape& tape = common_tape(parts, "concat");
  std::vector<double> data;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    require_rank("concat", "part", p.value(), 1);
    offsets.push_back(data.size());
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  }
  const std::size_t n = data.size();
  return tape.record(Array({n}, std::move(data)),
                     std::vector<Var>(parts.begin(), parts.end()),
                     [offsets](const BackwardContext& ctx) {
                       const Array& g = ctx.grad_output();
                       for (std::size_t p = 0; p < offsets.size(); ++p) {
                         Array* gp = ctx.grad_input(p);
                         if (!gp) continue;
                         for (std::size_t i = 0; i < gp->size(); ++i) {
                           (*gp)[i] += g[offsets[p] + i];
                         }
                       }
                     });
}

Var pool_set(std::span<const Var> vectors, PoolMode mode) {
  if (vectors.empty()) throw Error("pool_set: empty set");
  Tape& tape = common_tape(vectors, "pool_set");
  const Array& first = vectors.front().value();
  require_rank("pool_set", "element", first, 1);
  const std::size_t d = first.size();
  for (const Var& v : vectors) require_shape("pool_set", "element", v.value(), {d});

  Array out = first;
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t e = 1; e < vectors.size(); ++e) {
    const Array& v = vectors[e].value();
    for (std::size_t i = 0; i < d; ++i) {
      if (mode == PoolMode::Max) {
        if (v[i] > out[i]) {
          out[i] = v[i];
          argmax[i] = e;
        }
      } else {
        out[i] += v[i];
      }
    }
  }
  const double count = static_cast<double>(vectors.size());
  if (mode == PoolMode::Mean) {
    for (std::size_t i = 0; i < d; ++i) out[i] /= count;
  }

  return tape.record(std::move(out), std::vector<Var>(vectors.begin(), vectors.end()),
                     [mode, argmax = std::move(argmax), count](const BackwardContext& ctx) {
                       const Array& g = ctx.grad_output();
                       const std::size_t d = g.size();
                       if (mode == PoolMode::Max) {
                         for (std::size_t i = 0; i < d; ++i) {
                           if (Array* ge = ctx.grad_input(argmax[i])) (*ge)[i] += g[i];
                         }
                         return;
                       }
                       const double scale = mode == PoolMode::Mean ? 1.0 / count : 1.0;
                       for (std::size_t e = 0; e < static_cast<std::size_t>(count); ++e) {
                         Array* ge = ctx.grad_input(e);
                         if (!ge) continue;
                         for (std::size_t i = 0; i < d; ++i) (*ge)[i] += g[i] * scale;
                       }
                     });
}

Var bce_loss(Var predictions, const Array& labels) {
  const Array& y = predictions.value();
  require_rank("bce_loss", "predictions", y, 1);
  require_shape("bce_loss", "labels", labels, y.shape());
  for (double p : labels.values()) {
    if (p != 0.0 && p != 1.0) throw ValidationError("bce_loss: labels must be 0 or 1");
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double yk = std::clamp(y[k], kBceClamp, 1.0 - kBceClamp);
    loss -= labels[k] == 1.0 ? std::log(yk) : std::log(1.0 - yk);
  }
  return predictions.tape().record(
      Array({1}, {loss}), {predictions}, [labels](const BackwardContext& ctx) {
        Array* gy = ctx.grad_input(0);
        if (!gy) return;
        const Array& y = ctx.input(0);
        const double g = ctx.grad_output()[0];
        for (std::size_t k = 0; k < y.size(); ++k) {
          if (y[k] < kBceClamp || y[k] > 1.0 - kBceClamp) continue;
          (*gy)[k] += g * (labels[k] == 1.0 ? -1.0 / y[k] : 1.0 / (1.0 - y[k]));
        }
      });
}

}  // namespace relex::ad
