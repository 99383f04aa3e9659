#pragma once

#include "decaf/error.hpp"
#include "decaf/numcore/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace decaf::dsp {

using Eigen::Index;
using Eigen::VectorXd;
/// Multichannel signal, one column per channel (time-major rows).
using Signal = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Pearson correlation with the eps-regularized denominator
///   sum(xc * yc) / (n (std_x + eps)(std_y + eps)),
/// so a constant input yields exactly 0.
template <typename DerivedX, typename DerivedY>
double pearson(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
               double eps = 1e-8) {
  if (x.size() != y.size()) {
    throw ContractError("pearson: length mismatch " + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()));
  }
  if (x.size() < 2) throw ContractError("pearson: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  const auto xa = x.reshaped().array();
  const auto ya = y.reshaped().array();
  const Eigen::ArrayXd xc = xa - xa.mean();
  const Eigen::ArrayXd yc = ya - ya.mean();
  const double sx = std::sqrt(xc.square().sum() / n);
  const double sy = std::sqrt(yc.square().sum() / n);
  return (xc * yc).sum() / (n * (sx + eps) * (sy + eps));
}

struct PsdEstimate {
  VectorXd freqs_hz;
  VectorXd power;  // one-sided density, linear units
  double fs = 64.0;
  Index nperseg = 128;
  Index noverlap = 64;
  std::string window = "hann";

  VectorXd power_db() const;
  /// Sum of power over bins with lo <= f < hi.
  double band_power(double lo_hz, double hi_hz) const;
};

/// Welch estimate: mean of periodic-Hann-windowed periodograms, one-sided,
/// density scaling 1 / (fs * sum(w^2)). Each segment's mean is windowed
/// separately and booked entirely to bin 0 (value mean^2 sum(w)^2 / (fs
/// sum(w^2))), so the Hann main lobe does not smear DC into the 0.5 Hz bin.
/// The Nyquist bin is not doubled.
PsdEstimate welch_psd(const Eigen::Ref<const VectorXd>& x, double fs = 64.0, Index nperseg = 128,
                      Index noverlap = 64);

/// Zero-phase (forward-backward) Butterworth band-pass designed by the
/// bilinear transform with prewarped edges, applied as second-order sections.
VectorXd butterworth_bandpass(const Eigen::Ref<const VectorXd>& x, double lo_hz, double hi_hz,
                              int order, double fs);

/// Adds i.i.d. Gaussian noise whose mean-square power over the whole array is
/// exactly P_signal / 10^(snr_db / 10).
Signal add_noise_at_snr(const Eigen::Ref<const Signal>& x, double snr_db, nc::Rng& rng);

struct WindowPlan {
  Index window_len = 0;
  Index hop = 0;
  std::vector<Index> starts;
};

/// Starts 0, hop, 2 hop, ... while start + window_len <= total_len.
WindowPlan window_slices(Index total_len, Index window_len, Index hop);

/// 1/f noise by spectral shaping of white Gaussian noise, normalized to zero
/// mean and unit variance.
VectorXd pink_noise(Index n, nc::Rng& rng);

}  // namespace decaf::dsp
