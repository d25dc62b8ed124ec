#include "relex/adam.hpp"

#include <cmath>
#include <string>

#include "relex/errors.hpp"

namespace relex::ad {

AdamState make_adam_state(std::span<const Array> params) {
  AdamState state;
  for (const Array& p : params) {
    state.first_moment.emplace_back(p.shape());
    state.second_moment.emplace_back(p.shape());
  }
  return state;
}

void adam_step(std::span<Array> params, std::span<const Array> grads,
               AdamState& state, double learning_rate, double weight_decay) {
  if (!(learning_rate > 0.0)) throw ValidationError("adam_step: learning rate must be > 0");
  if (weight_decay < 0.0) throw ValidationError("adam_step: weight decay must be >= 0");
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients and " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() ||
        state.first_moment[i].shape() != params[i].shape() ||
        state.second_moment[i].shape() != params[i].shape()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " has shape " +
                       shape_to_string(params[i].shape()) +
                       " but its gradient or moments do not");
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(kAdamBeta1, t);
  const double correction2 = 1.0 - std::pow(kAdamBeta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    const auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j] + weight_decay * p[j];
      m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * gj;
      v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * gj * gj;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
    }
  }
}

}  // namespace relex::ad
