#pragma once

#include "decaf/data/recording.hpp"

#include <Eigen/Dense>

#include <vector>

namespace decaf::models {

using data::Index;
using Eigen::VectorXd;

/// 1e-2, 1e-1, ..., 1e6.
std::vector<double> default_lambda_grid();

struct MtrfConfig {
  Index lags = 33;  // 0..500 ms at 64 Hz
  Index delay = data::kDelay;
  std::vector<double> lambdas = default_lambda_grid();
};

/// Backward model: y(t) = bias + sum_{lag, c} w[lag, c] eeg(t + delay + lag, c).
struct MtrfModel {
  Index lags = 33;
  Index channels = 64;
  Index delay = data::kDelay;
  double lambda = 0.0;
  Eigen::MatrixXd weights;  // lags x channels
  double bias = 0.0;

  Index param_count() const { return weights.size() + 1; }
  /// Prediction over the whole recording; EEG past the end reads as zero.
  VectorXd predict(const data::Recording& r) const;
  VectorXd predict_window(const data::WindowPair& w) const;
};

/// Sufficient statistics of the centred lagged design over a set of
/// recordings: rows t with every lag in bounds.
struct LaggedMoments {
  Index lags = 0;
  Index channels = 0;
  Index delay = 0;
  double rows = 0.0;
  Eigen::MatrixXd xtx;  // centred X'X
  VectorXd xty;         // centred X'y
  VectorXd x_mean;
  double y_mean = 0.0;
};

LaggedMoments lagged_moments(const std::vector<data::RecordingPtr>& recs, Index lags, Index delay);

/// Ridge solution for one lambda; the bias is unpenalized. Throws
/// NumericalError when the system is singular (lambda = 0 on rank-deficient
/// data).
MtrfModel mtrf_solve(const LaggedMoments& m, double lambda);

struct MtrfFit {
  MtrfModel model;
  std::vector<double> lambdas;
  std::vector<double> validation_rho;  // one per lambda
  Index chosen = 0;
};

/// Fits every lambda on `train` and keeps the one with the best mean
/// per-window correlation over `validation` eval windows.
MtrfFit mtrf_fit(const std::vector<data::RecordingPtr>& train,
                 const std::vector<data::RecordingPtr>& validation, const MtrfConfig& cfg = {});

/// Mean per-window Pearson correlation over the eval sequences of `recs`.
double mtrf_mean_rho(const MtrfModel& m, const std::vector<data::RecordingPtr>& recs);

}  // namespace decaf::models
