#include "decaf/models/mtrf.hpp"

#include "decaf/error.hpp"

#include <cmath>

namespace decaf::models {

std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int e = -2; e <= 6; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

namespace {

VectorXd predict_range(const MtrfModel& m, const data::Recording& r, Index start, Index len) {
  if (r.channels() != m.channels) {
    throw DimensionError("mtrf: model has " + std::to_string(m.channels) + " channels, recording " +
                         std::to_string(r.channels()));
  }
  const Index total = r.length();
  VectorXd y = VectorXd::Constant(len, m.bias);
  for (Index l = 0; l < m.lags; ++l) {
    const Index first = start + m.delay + l;  // eeg row feeding y(start)
    const Index avail = std::min(len, total - first);
    if (avail <= 0) continue;
    y.head(avail).noalias() += r.eeg.middleRows(first, avail) * m.weights.row(l).transpose();
  }
  return y;
}

}  // namespace

VectorXd MtrfModel::predict(const data::Recording& r) const { return predict_range(*this, r, 0, r.length()); }

VectorXd MtrfModel::predict_window(const data::WindowPair& w) const {
  return predict_range(*this, *w.recording, w.start, w.window_len);
}

LaggedMoments lagged_moments(const std::vector<data::RecordingPtr>& recs, Index lags, Index delay) {
  if (recs.empty()) throw ContractError("mtrf: no training recordings");
  if (lags < 1 || delay < 0) throw ContractError("mtrf: need lags >= 1 and delay >= 0");
  const Index c = recs.front()->channels();
  const Index p = lags * c;
  Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(p, p);
  VectorXd sx = VectorXd::Zero(p);
  VectorXd sxy = VectorXd::Zero(p);
  double sy = 0.0;
  double rows = 0.0;

  for (const auto& rp : recs) {
    const auto& r = *rp;
    if (r.channels() != c) throw DimensionError("mtrf: recordings differ in channel count");
    const Index n = r.length() - delay - (lags - 1);
    if (n < 1) throw ContractError("mtrf: recording " + r.subject_id + "/" + r.stimulus_id + " too short");
    const Eigen::MatrixXd e = r.eeg;  // column-major copy for the products below
    const auto y = r.envelope.head(n);
    for (Index l = 0; l < lags; ++l) {
      const auto block = e.middleRows(delay + l, n);
      sx.segment(l * c, c) += block.colwise().sum().transpose();
      sxy.segment(l * c, c).noalias() += block.transpose() * y;
    }
    // Block (l, l + k) of X'X sums e(v)' e(v + k) over v in [delay + l, delay + l + n);
    // slide the window along l with rank-one corrections.
    for (Index k = 0; k < lags; ++k) {
      Eigen::MatrixXd acc = e.middleRows(delay, n).transpose() * e.middleRows(delay + k, n);
      for (Index l = 0; l + k < lags; ++l) {
        if (l > 0) {
          const Index out = delay + l - 1;
          const Index in = delay + l - 1 + n;
          acc.noalias() -= e.row(out).transpose() * e.row(out + k);
          acc.noalias() += e.row(in).transpose() * e.row(in + k);
        }
        sxx.block(l * c, (l + k) * c, c, c) += acc;
        if (k > 0) sxx.block((l + k) * c, l * c, c, c) += acc.transpose();
      }
    }
    sy += y.sum();
    rows += static_cast<double>(n);
  }

  LaggedMoments m;
  m.lags = lags;
  m.channels = c;
  m.delay = delay;
  m.rows = rows;
  m.x_mean = sx / rows;
  m.y_mean = sy / rows;
  m.xtx = sxx - rows * m.x_mean * m.x_mean.transpose();
  m.xty = sxy - rows * m.x_mean * m.y_mean;
  return m;
}

MtrfModel mtrf_solve(const LaggedMoments& m, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("mtrf: lambda must be finite and >= 0, got " + std::to_string(lambda));
  }
  Eigen::MatrixXd a = m.xtx;
  a.diagonal().array() += lambda;
  VectorXd w;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  const VectorXd d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * std::max(dmax, 1e-300))) {
    throw NumericalError("mtrf: singular normal equations at lambda=" + std::to_string(lambda) +
                         "; use a ridge lambda > 0");
  }
  w = ldlt.solve(m.xty);
  if (!w.allFinite()) throw NumericalError("mtrf: non-finite weights at lambda=" + std::to_string(lambda));

  MtrfModel out;
  out.lags = m.lags;
  out.channels = m.channels;
  out.delay = m.delay;
  out.lambda = lambda;
  out.weights.resize(m.lags, m.channels);
  for (Index l = 0; l < m.lags; ++l) out.weights.row(l) = w.segment(l * m.channels, m.channels).transpose();
  out.bias = m.y_mean - m.x_mean.dot(w);
  return out;
}

double mtrf_mean_rho(const MtrfModel& m, const std::vector<data::RecordingPtr>& recs) {
  double total = 0.0;
  Index count = 0;
  for (const auto& r : recs) {
    const VectorXd y = m.predict(*r);
    for (const auto& w : data::make_eval_sequence(r, data::kWindow, m.delay)) {
      total += dsp::pearson(y.segment(w.start, w.window_len), w.target());
      ++count;
    }
  }
  if (count == 0) throw ContractError("mtrf: no evaluation windows");
  return total / static_cast<double>(count);
}

MtrfFit mtrf_fit(const std::vector<data::RecordingPtr>& train,
                 const std::vector<data::RecordingPtr>& validation, const MtrfConfig& cfg) {
  if (validation.empty()) throw ContractError("mtrf: empty validation split");
  if (cfg.lambdas.empty()) throw ConfigError("mtrf: empty lambda grid");
  const LaggedMoments m = lagged_moments(train, cfg.lags, cfg.delay);
  MtrfFit fit;
  fit.lambdas = cfg.lambdas;
  double best = -2.0;
  for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) {
    MtrfModel model = mtrf_solve(m, cfg.lambdas[i]);
    const double rho = mtrf_mean_rho(model, validation);
    fit.validation_rho.push_back(rho);
    if (rho > best) {
      best = rho;
      fit.chosen = static_cast<Index>(i);
      fit.model = std::move(model);
    }
  }
  return fit;
}

}  // namespace decaf::models
