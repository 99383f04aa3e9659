#include "decaf/data/generator.hpp"
#include "decaf/error.hpp"
#include "decaf/models/checkpoint.hpp"
#include "decaf/models/decaf.hpp"
#include "decaf/models/mtrf.hpp"
#include "decaf/numcore/ops.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cstring>

using namespace decaf;
using namespace decaf::models;
using decaf::nc::Matrix;
using decaf::nc::Rng;
using decaf::testing::grad_check;
using decaf::testing::random_const;

namespace {

data::RecordingPtr white_recording(Index t, Index c, Rng& rng) {
  auto r = std::make_shared<data::Recording>();
  r->subject_id = "s";
  r->stimulus_id = "x";
  r->eeg.resize(t, c);
  for (Index i = 0; i < r->eeg.size(); ++i) r->eeg.data()[i] = rng.normal();
  r->envelope = Eigen::VectorXd::Zero(t);
  return r;
}

// Direct lagged design, no Toeplitz shortcuts: rows t with all lags in bounds.
Eigen::MatrixXd direct_design(const data::Recording& r, Index lags, Index delay) {
  const Index n = r.length() - delay - (lags - 1);
  Eigen::MatrixXd x(n, lags * r.channels());
  for (Index t = 0; t < n; ++t) {
    for (Index l = 0; l < lags; ++l) {
      for (Index c = 0; c < r.channels(); ++c) x(t, l * r.channels() + c) = r.eeg(t + delay + l, c);
    }
  }
  return x;
}

// Plants y = X w* + b* on white EEG.
data::RecordingPtr planted(Index t, Index c, Index lags, Rng& rng, Eigen::VectorXd* w_star, double* b_star) {
  auto r = white_recording(t, c, rng);
  Eigen::MatrixXd x = direct_design(*r, lags, data::kDelay);
  w_star->resize(lags * c);
  for (Index i = 0; i < w_star->size(); ++i) (*w_star)(i) = rng.normal();
  *b_star = 2.5;
  auto mut = std::const_pointer_cast<data::Recording>(r);
  mut->envelope.head(x.rows()) = x * *w_star;
  mut->envelope.head(x.rows()).array() += *b_star;
  return r;
}

Eigen::VectorXd flat(const MtrfModel& m) {
  Eigen::VectorXd w(m.weights.size());
  for (Index l = 0; l < m.lags; ++l) w.segment(l * m.channels, m.channels) = m.weights.row(l).transpose();
  return w;
}

DecafConfig tiny_config() {
  DecafConfig c;
  c.window = 12;
  c.encoder = {3, 8, 1, 2, 8, 0.0};
  c.forecaster = {4, 3, 4, 2, 2, 6, 12};
  return c;
}

nc::Tensor random_eeg(const DecafConfig& c, Index batch, Rng& rng) {
  return random_const({batch, c.window, c.encoder.channels}, rng);
}

nc::Tensor random_context(const DecafConfig& c, Index batch, Rng& rng) {
  nc::Matrix m(batch, c.window);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return nc::Tensor::constant({batch, c.window}, m);
}

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 ||
          std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
}

}  // namespace

// ------------------------------------------------------------------- mTRF --

TEST(Mtrf, ParamCountIs2113) {
  MtrfModel m;
  m.weights = Eigen::MatrixXd::Zero(33, 64);
  EXPECT_EQ(m.param_count(), 2113);
}

TEST(Mtrf, MomentsMatchDirectDesign) {
  Rng rng(1);
  std::vector<data::RecordingPtr> recs{white_recording(400, 5, rng), white_recording(350, 5, rng)};
  for (auto& r : recs) {
    auto mut = std::const_pointer_cast<data::Recording>(r);
    for (Index i = 0; i < r->length(); ++i) mut->envelope(i) = rng.normal();
  }
  const Index lags = 7;
  auto m = lagged_moments(recs, lags, 4);
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(35, 35);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(35);
  Eigen::VectorXd sx = Eigen::VectorXd::Zero(35);
  double sy = 0.0;
  double n = 0.0;
  for (const auto& r : recs) {
    Eigen::MatrixXd x = direct_design(*r, lags, 4);
    auto y = r->envelope.head(x.rows());
    xtx += x.transpose() * x;
    xty += x.transpose() * y;
    sx += x.colwise().sum().transpose();
    sy += y.sum();
    n += static_cast<double>(x.rows());
  }
  Eigen::VectorXd mu = sx / n;
  EXPECT_EQ(m.rows, n);
  EXPECT_LT((m.xtx - (xtx - n * mu * mu.transpose())).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((m.xty - (xty - n * mu * (sy / n))).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mtrf, RecoversPlantedWeights) {
  Rng rng(2);
  Eigen::VectorXd w_star;
  double b_star = 0.0;
  auto r = planted(6000, 8, 33, rng, &w_star, &b_star);
  MtrfModel m = mtrf_solve(lagged_moments({r}, 33, data::kDelay), 1e-6);
  const Eigen::VectorXd w = flat(m);
  EXPECT_LT((w - w_star).norm() / w_star.norm(), 1e-4);
  EXPECT_LT((w - w_star).cwiseAbs().maxCoeff() / w_star.cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_NEAR(m.bias, b_star, 1e-4);
}

TEST(Mtrf, HugeLambdaShrinksToZero) {
  Rng rng(3);
  Eigen::VectorXd w_star;
  double b_star = 0.0;
  auto r = planted(3000, 4, 33, rng, &w_star, &b_star);
  MtrfModel m = mtrf_solve(lagged_moments({r}, 33, data::kDelay), 1e12);
  EXPECT_LT(m.weights.cwiseAbs().maxCoeff(), 1e-6);
  // The unpenalized bias absorbs the mean.
  EXPECT_NEAR(m.bias, r->envelope.head(3000 - 64).mean(), 1e-3);
}

TEST(Mtrf, ClosedFormMatchesGradientDescent) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    auto r = white_recording(300, 3, rng);
    auto mut = std::const_pointer_cast<data::Recording>(r);
    for (Index i = 0; i < r->length(); ++i) mut->envelope(i) = rng.normal() + 1.0;
    const Index lags = 4;
    const double lambda = 5.0;
    MtrfModel m = mtrf_solve(lagged_moments({r}, lags, 2), lambda);

    // Gradient descent on 0.5 |y - Xw - b|^2 + 0.5 lambda |w|^2.
    Eigen::MatrixXd x = direct_design(*r, lags, 2);
    Eigen::VectorXd y = r->envelope.head(x.rows());
    Eigen::MatrixXd xa(x.rows(), x.cols() + 1);
    xa << x, Eigen::VectorXd::Ones(x.rows());
    Eigen::MatrixXd h = xa.transpose() * xa;
    h.topLeftCorner(x.cols(), x.cols()).diagonal().array() += lambda;
    const double step = 1.0 / Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().maxCoeff();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(x.cols() + 1);
    const Eigen::VectorXd xty = xa.transpose() * y;
    for (int it = 0; it < 200000; ++it) {
      Eigen::VectorXd g = h * theta - xty;
      if (g.norm() < 1e-12) break;
      theta -= step * g;
    }
    EXPECT_LT((flat(m) - theta.head(x.cols())).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(m.bias, theta(x.cols()), 1e-6);
  }
}

TEST(Mtrf, SingularAtZeroLambda) {
  Rng rng(4);
  auto r = white_recording(500, 4, rng);
  auto mut = std::const_pointer_cast<data::Recording>(r);
  mut->eeg.col(3) = r->eeg.col(2);  // duplicated channel
  mut->envelope = Eigen::VectorXd::LinSpaced(500, 0, 1);
  auto m = lagged_moments({r}, 3, 2);
  EXPECT_THROW(mtrf_solve(m, 0.0), NumericalError);
  EXPECT_NO_THROW(mtrf_solve(m, 1.0));
  EXPECT_THROW(mtrf_solve(m, -1.0), ConfigError);
}

TEST(Mtrf, PredictWindowMatchesFullPrediction) {
  Rng rng(5);
  Eigen::VectorXd w_star;
  double b_star = 0.0;
  auto r = planted(1000, 4, 33, rng, &w_star, &b_star);
  MtrfModel m = mtrf_solve(lagged_moments({r}, 33, data::kDelay), 1e-3);
  const Eigen::VectorXd full = m.predict(*r);
  for (const auto& w : data::make_eval_sequence(r)) {
    EXPECT_LT((m.predict_window(w) - full.segment(w.start, w.window_len)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Mtrf, LinearSyntheticDataAndLambdaSelection) {
  data::GeneratorConfig cfg;
  cfg.n_subjects = 2;
  cfg.recordings_per_subject = 4;
  cfg.duration_s = 60.0;
  cfg.nonlinear_exponent = 1.0;
  cfg.eeg_noise = false;
  cfg.seed = 6;
  auto d = data::generate_synthetic_dataset(cfg);
  auto fit = mtrf_fit(d.train, d.validation);
  ASSERT_EQ(fit.validation_rho.size(), 9u);
  EXPECT_EQ(fit.model.lambda, fit.lambdas[static_cast<std::size_t>(fit.chosen)]);
  for (double rho : fit.validation_rho) EXPECT_GE(fit.validation_rho[static_cast<std::size_t>(fit.chosen)], rho);
  EXPECT_GT(mtrf_mean_rho(fit.model, d.test), 0.9);
  EXPECT_EQ(fit.model.param_count(), 2113);
}

// ------------------------------------------------------------------ DECAF --

TEST(Decaf, ForecasterAndGateHandCount) {
  DecafModel m(default_config(), 1);
  Index fc = 0;
  Index gate = 0;
  for (const auto& [name, t] : m.parameters()) {
    if (name.rfind("forecaster.", 0) == 0) fc += t.numel();
    if (name.rfind("gate.", 0) == 0) gate += t.numel();
  }
  // conv 1->128 k7: 7*128+128; GRU layer: 2*128*384 + 2*384, two layers;
  // attention: 4 * (128*128 + 128); head: 128*256+256 + 256*192+192.
  const Index hand_fc = (7 * 128 + 128) + 2 * (2 * 128 * 384 + 2 * 384) + 4 * (128 * 128 + 128) +
                        (128 * 256 + 256) + (256 * 192 + 192);
  // 2->16 k5, 16->8 k3, 8->1 k1
  const Index hand_gate = (2 * 16 * 5 + 16) + (16 * 8 * 3 + 8) + (8 * 1 * 1 + 1);
  EXPECT_EQ(fc, hand_fc);
  EXPECT_EQ(gate, hand_gate);
  EXPECT_EQ(fc + gate, 348161);  // frozen regression constant
}

TEST(Decaf, FullSizeWithinQuarterOfPaperCount) {
  DecafModel m(default_config(), 1);
  const double n = static_cast<double>(m.param_count());
  EXPECT_GE(n, 0.75 * 11.4e6);
  EXPECT_LE(n, 1.25 * 11.4e6);
  EXPECT_EQ(m.param_count(), 10886146);
}

TEST(Decaf, OutputShapesAndInputContract) {
  auto cfg = toy_config();
  DecafModel m(cfg, 2);
  Rng rng(2);
  auto out = m.forward(random_eeg(cfg, 3, rng), random_context(cfg, 3, rng));
  EXPECT_EQ(out.fused.shape(), (nc::Shape{3, 192}));
  EXPECT_EQ(out.alpha.shape(), (nc::Shape{3, 192}));
  EXPECT_EQ(out.eeg_estimate.shape(), (nc::Shape{3, 192}));
  EXPECT_EQ(out.prior.shape(), (nc::Shape{3, 192}));
  EXPECT_THROW(m.forward(random_const({3, 191, 64}, rng), random_context(cfg, 3, rng)), ContractError);
  EXPECT_THROW(m.forward(random_const({3, 192, 63}, rng), random_context(cfg, 3, rng)), ContractError);
  EXPECT_THROW(m.forward(random_eeg(cfg, 3, rng), random_const({3, 100}, rng)), ContractError);
  EXPECT_THROW(m.forward(random_eeg(cfg, 3, rng), random_context(cfg, 2, rng)), ContractError);
}

TEST(Decaf, BranchIndependenceIsExact) {
  auto cfg = tiny_config();
  DecafModel m(cfg, 3);
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    auto eeg = random_eeg(cfg, 2, rng);
    auto ctx = random_context(cfg, 2, rng);
    auto base = m.forward(eeg, ctx);
    auto new_ctx = m.forward(eeg, random_context(cfg, 2, rng));
    auto new_eeg = m.forward(random_eeg(cfg, 2, rng), ctx);
    EXPECT_TRUE(same_bits(base.eeg_estimate.value(), new_ctx.eeg_estimate.value()));
    EXPECT_TRUE(same_bits(base.prior.value(), new_eeg.prior.value()));
  }
}

TEST(Decaf, FusionIsConvexAndGateInRange) {
  auto cfg = tiny_config();
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    DecafModel m(cfg, seed);
    Rng rng(seed + 1000);
    auto out = m.forward(random_eeg(cfg, 2, rng), random_context(cfg, 2, rng));
    const Matrix& a = out.alpha.value();
    EXPECT_GT(a.minCoeff(), 0.0);
    EXPECT_LT(a.maxCoeff(), 1.0);
    const Matrix lo = out.eeg_estimate.value().cwiseMin(out.prior.value());
    const Matrix hi = out.eeg_estimate.value().cwiseMax(out.prior.value());
    EXPECT_TRUE((out.fused.value().array() >= lo.array()).all());
    EXPECT_TRUE((out.fused.value().array() <= hi.array()).all());
  }
}

TEST(Decaf, EqualBranchesFuseToThatValue) {
  Rng rng(7);
  auto alpha = nc::sigmoid(random_const({2, 12}, rng, 3.0));
  auto v = random_const({2, 12}, rng);
  EXPECT_EQ(nc::convex_mix(alpha, v, v).value(), v.value());
}

TEST(Decaf, SaturatedGateSelectsBranch) {
  auto cfg = toy_config();
  DecafModel m(cfg, 8);
  Rng rng(8);
  auto eeg = random_eeg(cfg, 2, rng);
  auto ctx = random_context(cfg, 2, rng);
  m.gate().output_bias().mutable_value().setConstant(20.0);
  auto hi = m.forward(eeg, ctx);
  EXPECT_LT((hi.fused.value() - hi.eeg_estimate.value()).cwiseAbs().maxCoeff(), 1e-6);
  m.gate().output_bias().mutable_value().setConstant(-20.0);
  auto lo = m.forward(eeg, ctx);
  EXPECT_LT((lo.fused.value() - lo.prior.value()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Decaf, SameSeedSameOutputs) {
  auto cfg = toy_config();
  DecafModel a(cfg, 9);
  DecafModel b(cfg, 9);
  DecafModel c(cfg, 10);
  Rng rng(9);
  auto eeg = random_eeg(cfg, 2, rng);
  auto ctx = random_context(cfg, 2, rng);
  EXPECT_TRUE(same_bits(a.forward(eeg, ctx).fused.value(), b.forward(eeg, ctx).fused.value()));
  EXPECT_FALSE(same_bits(a.forward(eeg, ctx).fused.value(), c.forward(eeg, ctx).fused.value()));
}

TEST(Decaf, EegOnlyModelHasOnlyEncoder) {
  auto cfg = toy_config();
  cfg.kind = ModelKind::eeg_only;
  DecafModel m(cfg, 11);
  DecafModel full(toy_config(), 11);
  Rng rng(11);
  auto eeg = random_eeg(cfg, 2, rng);
  auto out = m.forward(eeg, nc::Tensor());
  EXPECT_FALSE(out.alpha.defined());
  // Same seed, same encoder initialization.
  EXPECT_TRUE(same_bits(out.fused.value(), full.forward(eeg, random_context(cfg, 2, rng)).eeg_estimate.value()));
  for (const auto& [name, t] : m.parameters()) EXPECT_EQ(name.rfind("encoder.", 0), 0u);
}

TEST(Decaf, GradientCheckTinyModel) {
  auto cfg = tiny_config();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    DecafModel m(cfg, seed);
    Rng rng(seed + 50);
    auto eeg = random_eeg(cfg, 2, rng);
    auto ctx = random_context(cfg, 2, rng);
    auto weights = random_const({2, cfg.window}, rng);
    auto loss = [&] { return nc::sum(nc::mul(m.forward(eeg, ctx).fused, weights)); };
    auto r = grad_check(loss, m.parameter_tensors(), 1e-5, 1e-4, 6, seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(Decaf, ConfigValidation) {
  auto cfg = toy_config();
  cfg.encoder.n_heads = 5;
  EXPECT_THROW(DecafModel(cfg, 1), ConfigError);
  cfg = toy_config();
  cfg.forecaster.t_out = 100;
  EXPECT_THROW(DecafModel(cfg, 1), ConfigError);
  cfg = toy_config();
  cfg.gate.kernels = {5, 4, 1};
  EXPECT_THROW(DecafModel(cfg, 1), ConfigError);
}

// ------------------------------------------------------------- checkpoint --

TEST(Checkpoint, DecafRoundTripIsBitExact) {
  auto cfg = toy_config();
  DecafModel m(cfg, 12);
  auto ck = make_checkpoint(m, 3, Json{{"val_rho", 0.25}});
  const std::string bytes = encode_checkpoint(ck.header, ck.params);
  auto back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back.header, back.params), bytes);
  DecafModel m2 = decaf_from_checkpoint(back);
  auto p1 = m.parameters();
  auto p2 = m2.parameters();
  ASSERT_EQ(p1.size(), p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_EQ(p1[i].first, p2[i].first);
    EXPECT_TRUE(same_bits(p1[i].second.value(), p2[i].second.value()));
  }
  EXPECT_EQ(back.header["epoch"], 3);
  EXPECT_EQ(checkpoint_param_count(back), m.param_count());
}

TEST(Checkpoint, MtrfRoundTrip) {
  MtrfModel m;
  Rng rng(13);
  m.weights.resize(33, 64);
  for (Index i = 0; i < m.weights.size(); ++i) m.weights.data()[i] = rng.normal();
  m.bias = 0.1;
  m.lambda = 100.0;
  auto ck = make_checkpoint(m, Json::object());
  auto back = mtrf_from_checkpoint(decode_checkpoint(encode_checkpoint(ck.header, ck.params)));
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.bias, m.bias);
  EXPECT_EQ(back.lambda, m.lambda);
  EXPECT_EQ(checkpoint_param_count(ck), 2113);
}

TEST(Checkpoint, CorruptionIsFormatError) {
  DecafModel m(tiny_config(), 14);
  auto ck = make_checkpoint(m, 0, Json::object());
  const std::string bytes = encode_checkpoint(ck.header, ck.params);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), FormatError);
  std::string bad = bytes;
  bad.replace(bad.find("DCK1"), 4, "XXXX");
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(decode_checkpoint("abc"), FormatError);
}
