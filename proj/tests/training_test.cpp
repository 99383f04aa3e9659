#include "decaf/data/generator.hpp"
#include "decaf/dsp/dsp.hpp"
#include "decaf/error.hpp"
#include "decaf/models/checkpoint.hpp"
#include "decaf/numcore/ops.hpp"
#include "decaf/training/train.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

using namespace decaf;
using namespace decaf::training;
using decaf::nc::Matrix;
using decaf::nc::Rng;
using decaf::nc::Tensor;

namespace {

Tensor rows(std::initializer_list<std::initializer_list<double>> v) {
  const Index b = static_cast<Index>(v.size());
  const Index t = static_cast<Index>(v.begin()->size());
  Matrix m(b, t);
  Index i = 0;
  for (const auto& r : v) {
    Index j = 0;
    for (double x : r) m(i, j++) = x;
    ++i;
  }
  return Tensor::constant({b, t}, m);
}

double loss_of(const Tensor& p, const Tensor& y, LossWeights w = {}) {
  nc::NoGradScope ng;
  return hybrid_loss(p, y, w).item();
}

data::GeneratorConfig small_data(std::uint64_t seed) {
  data::GeneratorConfig g;
  g.n_subjects = 2;
  g.recordings_per_subject = 3;
  g.duration_s = 40.0;
  g.channels = 8;
  g.eeg_snr_db = 10.0;
  g.seed = seed;
  return g;
}

models::DecafConfig small_model() {
  auto c = models::toy_config();
  c.encoder.channels = 8;
  c.encoder.d_model = 32;
  c.encoder.n_layers = 1;
  c.encoder.n_heads = 2;
  c.encoder.ffn_dim = 64;
  c.encoder.dropout = 0.0;
  c.forecaster.embed = 16;
  c.forecaster.hidden = 16;
  c.forecaster.heads = 2;
  c.forecaster.head_hidden = 32;
  return c;
}

double oracle_fit_rho(const models::DecafModel& m, const std::vector<data::WindowPair>& windows) {
  nc::NoGradScope ng;
  double total = 0.0;
  for (const auto& w : windows) {
    Matrix eeg = w.eeg_window();
    Matrix ctx = w.context().transpose();
    auto out = m.forward(Tensor::constant({1, w.window_len, eeg.cols()}, eeg),
                         Tensor::constant({1, w.window_len}, ctx));
    total += dsp::pearson(out.fused.value().row(0).transpose(), w.target());
  }
  return total / static_cast<double>(windows.size());
}

}  // namespace

TEST(Loss, HandComputedCases) {
  // 1e-7: the correlation carries an epsilon in its denominator
  auto y = rows({{0.0, 1.0, 2.0, 3.0}});
  // perfect prediction: only the correlation term remains
  EXPECT_NEAR(loss_of(y, y), -0.2, 1e-7);
  // mirrored: |d| = {3, 1, 1, 3} -> 2, rho = -1
  EXPECT_NEAR(loss_of(rows({{3.0, 2.0, 1.0, 0.0}}), y), 2.2, 1e-7);
  // constant offset keeps rho = 1
  EXPECT_NEAR(loss_of(rows({{0.5, 1.5, 2.5, 3.5}}), y), 0.3, 1e-7);
  EXPECT_NEAR(loss_of(rows({{0.5, 1.5, 2.5, 3.5}}), y, {1.0, 0.0}), 0.5, 1e-7);
  EXPECT_NEAR(loss_of(rows({{1.0, -1.0}}), rows({{-1.0, 1.0}})), 2.2, 1e-7);
}

TEST(Loss, PearsonWeightZeroIsMae) {
  Rng rng(3);
  auto p = decaf::testing::random_const({3, 17}, rng);
  auto y = decaf::testing::random_const({3, 17}, rng);
  EXPECT_NEAR(loss_of(p, y, {1.0, 0.0}), (p.value() - y.value()).cwiseAbs().mean(), 1e-14);
}

TEST(Loss, BatchMeanOverRows) {
  auto y = rows({{0.0, 1.0, 2.0, 3.0}, {0.0, 1.0, 2.0, 3.0}});
  auto p = rows({{0.0, 1.0, 2.0, 3.0}, {3.0, 2.0, 1.0, 0.0}});
  EXPECT_NEAR(loss_of(p, y), (0.0 + 2.0) / 2.0 - 0.2 * (1.0 - 1.0) / 2.0, 1e-7);
}

TEST(Loss, ShapeMismatchIsContractError) {
  EXPECT_THROW(loss_of(rows({{1.0, 2.0}}), rows({{1.0, 2.0, 3.0}})), ContractError);
  EXPECT_THROW(loss_of(Tensor(), rows({{1.0}})), ContractError);
}

// The correlation term is shift invariant, so its gradient is orthogonal to
// the all-ones direction in every row.
TEST(Loss, PearsonGradientOrthogonalToOnes) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Matrix pv(2, 9);
    for (Index i = 0; i < pv.size(); ++i) pv.data()[i] = rng.normal();
    Tensor p = Tensor::parameter({2, 9}, pv);
    auto y = decaf::testing::random_const({2, 9}, rng);
    {
      nc::Tape tape;
      nc::TapeScope scope(tape);
      tape.backward(hybrid_loss(p, y, {0.0, 1.0}));
    }
    const Matrix g = p.grad();
    for (Index r = 0; r < 2; ++r) EXPECT_NEAR(g.row(r).sum(), 0.0, 1e-12);
  }
}

TEST(Loss, GradientCheck) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Matrix pv(3, 11);
    for (Index i = 0; i < pv.size(); ++i) pv.data()[i] = rng.normal();
    Tensor p = Tensor::parameter({3, 11}, pv);
    auto y = decaf::testing::random_const({3, 11}, rng);
    auto r = decaf::testing::grad_check([&] { return hybrid_loss(p, y); }, {p});
    EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
  }
}

TEST(EarlyStopping, StopsAfterPatience) {
  EarlyStopping es(3);
  const double seq[] = {0.10, 0.12, 0.11, 0.11, 0.11};
  int stopped_at = 0;
  for (int e = 1; e <= 5; ++e) {
    es.observe(e, seq[e - 1]);
    if (es.should_stop()) {
      stopped_at = e;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 5);
  EXPECT_EQ(es.best_epoch(), 2);
  EXPECT_DOUBLE_EQ(es.best(), 0.12);
}

TEST(EarlyStopping, TieIsNotImprovement) {
  EarlyStopping es(1);
  EXPECT_TRUE(es.observe(1, 0.5));
  EXPECT_FALSE(es.observe(2, 0.5));
  EXPECT_TRUE(es.should_stop());
  EXPECT_EQ(es.best_epoch(), 1);
}

TEST(EarlyStopping, FirstEpochAlwaysCountsEvenIfNegative) {
  EarlyStopping es(2);
  EXPECT_TRUE(es.observe(1, -0.3));
  EXPECT_EQ(es.best_epoch(), 1);
  EXPECT_DOUBLE_EQ(es.best(), -0.3);
}

TEST(ScheduledSampling, ProbabilityRamp) {
  EXPECT_DOUBLE_EQ(sampling_probability(1, 10, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(sampling_probability(10, 10, 0.5), 0.5);
  EXPECT_NEAR(sampling_probability(4, 10, 0.5), 0.5 * 3.0 / 9.0, 1e-15);
  EXPECT_DOUBLE_EQ(sampling_probability(1, 1, 0.5), 0.0);
  for (int e = 2; e <= 10; ++e) {
    EXPECT_GT(sampling_probability(e, 10, 0.5), sampling_probability(e - 1, 10, 0.5));
  }
  EXPECT_THROW(sampling_probability(0, 10, 0.5), ContractError);
}

TEST(TrainConfig, Validation) {
  TrainConfig ok;
  EXPECT_NO_THROW(validate(ok));
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(validate(c), ConfigError);
  };
  bad([](TrainConfig& c) { c.epochs = 0; });
  bad([](TrainConfig& c) { c.batch = 0; });
  bad([](TrainConfig& c) { c.patience = 10; });
  bad([](TrainConfig& c) { c.p_end = 1.5; });
  bad([](TrainConfig& c) { c.clip_norm = 0.0; });
  bad([](TrainConfig& c) { c.loss.pearson = -1.0; });
  bad([](TrainConfig& c) { c.schedule = nc::StaticRate{0.0}; });
  bad([](TrainConfig& c) { c.schedule = nc::NoamRate{256, 0}; });
  EXPECT_EQ(parse_regime("scheduled_sampling"), ContextRegime::scheduled_sampling);
  EXPECT_THROW(parse_regime("teacher"), ConfigError);
}

TEST(TrainHistory, CsvHeader) {
  TrainHistory h;
  h.epochs.push_back({1, 0.5, 0.25, 1e-3});
  EXPECT_EQ(h.to_csv(), "epoch,train_loss,val_rho,lr\n1,0.5,0.25,0.001\n");
}

TEST(Training, OverfitsFiftyWindows) {
  auto d = data::generate_synthetic_dataset(small_data(5));
  auto all = data::make_training_windows(d.train[0], data::kWindow, data::kHop, data::kDelay);
  ASSERT_GE(all.size(), 50u);
  std::vector<data::WindowPair> windows(all.begin(), all.begin() + 50);

  models::DecafModel m(small_model(), 9);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.patience = 9;
  cfg.batch = 5;
  cfg.schedule = nc::StaticRate{1e-2};
  cfg.seed = 1;
  TrainHooks hooks;
  hooks.validate = [&](const models::DecafModel& mm, int) { return oracle_fit_rho(mm, windows); };
  auto h = train_on_windows(m, windows, {}, cfg, hooks);
  ASSERT_EQ(h.epochs.size(), 10u);
  int decreases = 0;
  for (std::size_t i = 1; i < h.epochs.size(); ++i) decreases += h.epochs[i].train_loss < h.epochs[i - 1].train_loss;
  EXPECT_GE(decreases, 8);
  EXPECT_GT(h.best_val_rho, 0.8);
  // the model holds the best epoch's parameters afterwards
  EXPECT_NEAR(oracle_fit_rho(m, windows), h.best_val_rho, 1e-12);
}

TEST(Training, OneEpochIsBitReproducible) {
  auto d = data::generate_synthetic_dataset(small_data(6));
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.patience = 0;
  cfg.batch = 16;
  cfg.schedule = nc::NoamRate{32, 20, 0.5};
  cfg.regime = ContextRegime::scheduled_sampling;
  cfg.seed = 4;
  auto run = [&] {
    auto mc = small_model();
    mc.encoder.dropout = 0.1;
    models::DecafModel m(mc, 3);
    auto h = train(m, d, cfg);
    auto c = models::make_checkpoint(m, 1, {{"val_rho", h.best_val_rho}});
    return models::encode_checkpoint(c.header, c.params);
  };
  const std::string a = run();
  const std::string b = run();
  EXPECT_TRUE(a == b);
}

TEST(Training, ScheduledSamplingRunsAndDiffersFromTeacherForcing) {
  auto d = data::generate_synthetic_dataset(small_data(7));
  auto run = [&](ContextRegime regime) {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.patience = 1;
    cfg.batch = 32;
    cfg.p_end = 1.0;
    cfg.schedule = nc::StaticRate{1e-3};
    cfg.regime = regime;
    models::DecafModel m(small_model(), 1);
    auto h = train(m, d, cfg);
    EXPECT_EQ(h.epochs.size(), 2u);
    return h.epochs[1].train_loss;
  };
  const double tf = run(ContextRegime::teacher_forcing);
  const double ss = run(ContextRegime::scheduled_sampling);
  EXPECT_TRUE(std::isfinite(ss));
  EXPECT_NE(tf, ss);
}

TEST(Training, EegOnlyModelTrains) {
  auto d = data::generate_synthetic_dataset(small_data(8));
  auto mc = small_model();
  mc.kind = models::ModelKind::eeg_only;
  models::DecafModel m(mc, 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.patience = 1;
  cfg.batch = 32;
  cfg.schedule = nc::StaticRate{1e-3};
  auto h = train(m, d, cfg);
  EXPECT_EQ(h.epochs.size(), 2u);
  EXPECT_TRUE(std::isfinite(h.best_val_rho));
}

TEST(Training, EmptySplitsAreContractErrors) {
  models::DecafModel m(small_model(), 1);
  data::DatasetSplit empty;
  EXPECT_THROW(train(m, empty, TrainConfig{}), ContractError);
}

TEST(Training, MtrfBaselinePicksBestLambda) {
  auto g = small_data(9);
  g.nonlinear_exponent = 1.0;
  auto d = data::generate_synthetic_dataset(g);
  auto fit = train_baseline_mtrf(d);
  ASSERT_EQ(fit.validation_rho.size(), fit.lambdas.size());
  std::size_t best = 0;
  for (std::size_t i = 1; i < fit.validation_rho.size(); ++i) {
    if (fit.validation_rho[i] > fit.validation_rho[best]) best = i;
  }
  EXPECT_EQ(fit.chosen, best);
  EXPECT_DOUBLE_EQ(fit.model.lambda, fit.lambdas[best]);
  EXPECT_EQ(fit.model.param_count(), 33 * 8 + 1);
}

// Full model plus hybrid loss against finite differences.
TEST(Training, ForwardAndLossGradientCheck) {
  models::DecafConfig c;
  c.window = 12;
  c.encoder = {3, 8, 1, 2, 8, 0.0};
  c.forecaster = {4, 3, 4, 2, 2, 6, 12};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    models::DecafModel m(c, seed);
    Rng rng(seed + 100);
    auto eeg = decaf::testing::random_const({2, c.window, c.encoder.channels}, rng);
    auto ctx = decaf::testing::random_const({2, c.window}, rng);
    auto y = decaf::testing::random_const({2, c.window}, rng);
    auto loss = [&] { return hybrid_loss(m.forward(eeg, ctx).fused, y); };
    auto r = decaf::testing::grad_check(loss, m.parameter_tensors(), 1e-5, 1e-4, 4, seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " " << r.worst;
  }
}
