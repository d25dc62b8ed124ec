#pragma once

// Reverse-mode differentiation over dense arrays.
//
// A Tape records every primitive applied during one forward pass. Leaves
// are either parameters (borrowed, must outlive the tape), differentiable
// inputs (owned), or constants. Tape::backward walks the record in reverse
// and returns the gradient of one output with respect to every leaf.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relex/array.hpp"

namespace relex::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const noexcept { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Array& value() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// View handed to an operation's backward rule.
class BackwardContext {
 public:
  const Array& output() const { return *output_; }
  const Array& grad_output() const { return *grad_output_; }
  const Array& input(std::size_t i) const { return *inputs_[i]; }
  // Accumulator for input i, or nullptr when that input needs no gradient.
  Array* grad_input(std::size_t i) const { return grad_inputs_[i]; }

 private:
  friend class Tape;
  const Array* output_ = nullptr;
  const Array* grad_output_ = nullptr;
  std::span<const Array* const> inputs_;
  std::span<Array* const> grad_inputs_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Gradients of one output with respect to all leaves of a tape.
class Gradients {
 public:
  // Zero array of the leaf's shape when the output does not depend on it.
  const Array& of(Var leaf) const;
  const Array& of(std::string_view leaf_name) const;
  std::map<std::string, Array> by_name() const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Array> leaf_grads_;
};

class Tape {
 public:
  struct Leaf {
    std::string name;
    std::size_t node;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Borrowed differentiable leaf; `value` must outlive the tape.
  Var parameter(std::string name, const Array& value);
  // Owned differentiable leaf.
  Var input(std::string name, Array value);
  // Owned leaf that never receives a gradient.
  Var constant(Array value);

  // Appends an operation. Used by the primitives below.
  Var record(Array value, std::vector<Var> inputs, BackwardFn backward);

  const Array& value(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Leaf>& leaves() const noexcept { return leaves_; }
  bool requires_grad(Var v) const;

  // Gradient of a single-element output.
  Gradients backward(Var output) const;
  // Gradient of one component of `output`.
  Gradients backward(Var output, std::size_t component) const;
  // Vector-Jacobian product with an arbitrary seed of the output's shape.
  Gradients backward(Var output, const Array& seed) const;

 private:
  struct Node {
    Array owned;
    const Array* borrowed = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::size_t leaf_slot = static_cast<std::size_t>(-1);

    const Array& value() const { return borrowed ? *borrowed : owned; }
  };

  void check_owned(Var v, const char* what) const;

  std::deque<Node> nodes_;
  std::vector<Leaf> leaves_;
  std::map<std::string, std::size_t, std::less<>> leaf_by_name_;

  friend class Gradients;
};

enum class PoolMode { Max, Mean, Sum };

const char* to_string(PoolMode mode);
PoolMode pool_mode_from_string(std::string_view name);

// y = W x + b with x of length n, W of shape [m, n], b of length m.
Var linear(Var x, Var weight, Var bias);
// y = W x, no bias term.
Var linear(Var x, Var weight);
Var relu(Var x);
Var sigmoid(Var x);
// Same-size 3x3 cross-correlation, zero padding 1, stride 1.
// x: [c_in, h, w], kernels: [c_out, c_in, 3, 3], bias: [c_out].
Var conv3x3(Var x, Var kernels, Var bias);
Var flatten(Var x);
// Concatenation of 1-D parts in order.
Var concat(std::span<const Var> parts);
// Elementwise reduction over a non-empty set of equal-length vectors. Max
// routes the gradient to the first maximal element per coordinate.
Var pool_set(std::span<const Var> vectors, PoolMode mode);
// Summed binary cross entropy; predictions are clamped to [1e-12, 1 - 1e-12].
Var bce_loss(Var predictions, const Array& labels);

inline constexpr double kBceClamp = 1e-12;

}  // namespace relex::ad
