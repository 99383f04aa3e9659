#include "decaf/numcore/optim.hpp"

#include "decaf/error.hpp"

#include <cmath>

namespace decaf::nc {

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.value().rows(), p.value().cols()));
      state.v.push_back(Matrix::Zero(p.value().rows(), p.value().cols()));
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: parameter list changed size between steps");
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.has_grad()) continue;
    const Matrix& g = p.node()->grad;
    if (g.rows() != p.value().rows() || g.cols() != p.value().cols() ||
        state.m[i].rows() != g.rows() || state.m[i].cols() != g.cols()) {
      throw ContractError("adam_step: gradient/moment shape mismatch for parameter " +
                          std::to_string(i) + " " + to_string(p.shape()));
    }
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseAbs2();
    p.mutable_value().array() -=
        lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + state.eps);
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.has_grad()) sq += p.node()->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      if (p.has_grad()) p.node()->grad *= s;
    }
  }
  return norm;
}

double schedule_rate(const LrSchedule& schedule, std::int64_t step) {
  if (step < 1) throw ContractError("schedule_rate: step must be >= 1");
  return std::visit(
      [step](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, StaticRate>) {
          return s.rate;
        } else {
          const double st = static_cast<double>(step);
          return s.factor * std::pow(s.d_model, -0.5) *
                 std::min(std::pow(st, -0.5), st * std::pow(s.warmup_steps, -1.5));
        }
      },
      schedule);
}

}  // namespace decaf::nc
