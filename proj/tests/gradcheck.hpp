#pragma once

// Central finite-difference oracle for reverse-mode gradients. Lives in test
// code only; it evaluates the loss through plain forward passes and never
// touches the tape machinery it checks.

#include "decaf/numcore/rng.hpp"
#include "decaf/numcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace decaf::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  long checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps exactly-zero
/// gradients (e.g. attention key biases) from dividing roundoff by zero.
inline double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares d(loss)/d(leaf) from the tape with central differences.
/// `per_tensor` > 0 checks that many randomly chosen entries per leaf.
inline GradCheck grad_check(const std::function<nc::Tensor()>& loss_fn,
                            std::vector<nc::Tensor> leaves, double h = 1e-5,
                            double floor = 1e-4, long per_tensor = -1,
                            std::uint64_t seed = 1) {
  for (auto& leaf : leaves) leaf.zero_grad();
  {
    nc::Tape tape;
    nc::TapeScope scope(tape);
    nc::Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<nc::Matrix> analytic;
  for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

  nc::NoGradScope no_grad;
  nc::Rng rng(seed);
  GradCheck out;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    nc::Matrix& value = leaves[li].mutable_value();
    const long n = static_cast<long>(value.size());
    std::vector<long> idx;
    if (per_tensor > 0 && per_tensor < n) {
      for (long k = 0; k < per_tensor; ++k) idx.push_back(static_cast<long>(rng.below(n)));
    } else {
      for (long k = 0; k < n; ++k) idx.push_back(k);
    }
    for (long k : idx) {
      double& x = value.data()[k];
      const double saved = x;
      x = saved + h;
      const double fp = loss_fn().item();
      x = saved - h;
      const double fm = loss_fn().item();
      x = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = rel_error(analytic[li].data()[k], numeric, floor);
      ++out.checked;
      if (err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst = "leaf " + std::to_string(li) + " entry " + std::to_string(k) +
                    ": analytic " + std::to_string(analytic[li].data()[k]) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

inline nc::Tensor random_param(nc::Shape shape, nc::Rng& rng, double scale = 1.0) {
  nc::Matrix m(nc::storage_rows(shape), nc::storage_cols(shape));
  for (nc::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return nc::Tensor::parameter(std::move(shape), std::move(m));
}

inline nc::Tensor random_const(nc::Shape shape, nc::Rng& rng, double scale = 1.0) {
  return random_param(std::move(shape), rng, scale).detach();
}

}  // namespace decaf::testing
