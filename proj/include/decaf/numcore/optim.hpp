#pragma once

#include "decaf/numcore/tensor.hpp"

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace decaf::nc {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Moment buffers are allocated on the first call.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

struct StaticRate {
  double rate = 1e-3;
};

/// factor * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
struct NoamRate {
  double d_model = 256;
  double warmup_steps = 4000;
  double factor = 1.0;
};

using LrSchedule = std::variant<StaticRate, NoamRate>;

double schedule_rate(const LrSchedule& schedule, std::int64_t step);

}  // namespace decaf::nc
