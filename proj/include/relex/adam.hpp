#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "relex/array.hpp"

namespace relex::ad {

struct AdamState {
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
  std::int64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

// Zero moments shaped like `params`.
AdamState make_adam_state(std::span<const Array> params);

// One bias-corrected Adam update in place. Weight decay is coupled: the L2
// term `weight_decay * param` is added to the gradient before the moments.
void adam_step(std::span<Array> params, std::span<const Array> grads,
               AdamState& state, double learning_rate, double weight_decay);

}  // namespace relex::ad
