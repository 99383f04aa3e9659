#include "gradcheck.hpp"

#include "decaf/error.hpp"
#include "decaf/numcore/layers.hpp"
#include "decaf/numcore/ops.hpp"
#include "decaf/numcore/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace decaf;
using namespace decaf::nc;
using decaf::testing::grad_check;
using decaf::testing::random_const;
using decaf::testing::random_param;

namespace {

Tensor seq(std::initializer_list<double> values) {
  Matrix m(static_cast<Index>(values.size()), 1);
  Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return Tensor::constant({m.rows(), 1}, m);
}

// Weighted sum so that every output entry carries a distinct cotangent.
Tensor project(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

}  // namespace

// ------------------------------------------------------------------ conv1d --

TEST(Conv1d, IdentityKernel) {
  Matrix w(1, 1);
  w << 1.0;
  auto out = conv1d(seq({0, 1, 0}), Tensor::constant({1, 1, 1}, w), Tensor::zeros({1}), Padding::same);
  EXPECT_EQ(out.shape(), (Shape{3, 1}));
  EXPECT_DOUBLE_EQ(out.value()(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(out.value()(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(out.value()(2, 0), 0.0);
}

TEST(Conv1d, OnesKernelSamePadding) {
  auto out = conv1d(seq({0, 1, 0}), Tensor::constant({1, 1, 3}, Matrix::Ones(1, 3)),
                    Tensor::zeros({1}), Padding::same);
  for (Index t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(out.value()(t, 0), 1.0);
}

TEST(Conv1d, CausalPaddingLooksBackOnly) {
  auto out = conv1d(seq({0, 1, 0}), Tensor::constant({1, 1, 3}, Matrix::Ones(1, 3)),
                    Tensor::zeros({1}), Padding::causal);
  EXPECT_DOUBLE_EQ(out.value()(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(out.value()(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(out.value()(2, 0), 1.0);
}

TEST(Conv1d, ChannelMismatchNamesAxis) {
  Rng rng(1);
  auto x = random_const({8, 2}, rng);
  auto w = random_const({3, 4, 3}, rng);
  try {
    conv1d(x, w, Tensor::zeros({3}), Padding::same);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos);
  }
}

TEST(Conv1d, EvenKernelRejectedForSamePadding) {
  Rng rng(1);
  EXPECT_THROW(conv1d(random_const({8, 1}, rng), random_const({1, 1, 4}, rng), Tensor::zeros({1}),
                      Padding::same),
               ContractError);
}

TEST(Conv1d, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    auto x = random_param({8, 2}, rng);
    auto w = random_param({3, 2, 3}, rng);
    auto b = random_param({3}, rng);
    auto proj = random_const({8, 3}, rng);
    for (Padding pad : {Padding::same, Padding::causal}) {
      auto res = grad_check([&] { return project(conv1d(x, w, b, pad), proj); }, {x, w, b});
      EXPECT_LT(res.max_rel_error, 1e-6) << res.worst;
    }
  }
}

TEST(Conv1d, BatchedMatchesPerSequence) {
  Rng rng(3);
  auto x = random_const({2, 5, 3}, rng);
  auto w = random_const({4, 3, 3}, rng);
  auto b = random_const({4}, rng);
  auto full = conv1d(x, w, b, Padding::same);
  for (Index i = 0; i < 2; ++i) {
    auto one = conv1d(reshape(slice(x, 0, i, i + 1), {5, 3}), w, b, Padding::same);
    EXPECT_TRUE(full.value().middleRows(i * 5, 5).isApprox(one.value(), 1e-14));
  }
}

// --------------------------------------------------------------------- GRU --

TEST(Gru, ZeroWeightsHalveStateEachStep) {
  auto x = Tensor::zeros({2, 1});
  Matrix h0(1, 1);
  h0 << 1.0;
  auto out = gru_layer(x, Tensor::constant({1}, h0), Tensor::zeros({1, 3}), Tensor::zeros({1, 3}),
                       Tensor::zeros({3}), Tensor::zeros({3}));
  EXPECT_DOUBLE_EQ(out.value()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(out.value()(1, 0), 0.25);
}

TEST(Gru, ShapeContract) {
  Rng rng(2);
  Gru gru(128, 128, 2, rng);
  auto out = gru(random_const({192, 128}, rng, 0.1));
  EXPECT_EQ(out.sequence.shape(), (Shape{192, 128}));
  ASSERT_EQ(out.final_state.size(), 2u);
  EXPECT_EQ(out.final_state[1].shape(), (Shape{128}));
  EXPECT_TRUE(out.final_state[1].value().row(0).isApprox(out.sequence.value().row(191)));
}

TEST(Gru, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Gru gru(3, 4, 2, rng);
    auto x = random_param({2, 6, 3}, rng);
    auto h0a = random_param({2, 4}, rng, 0.5);
    auto h0b = random_param({2, 4}, rng, 0.5);
    auto proj = random_const({2, 6, 4}, rng);
    // Exercise biases too.
    for (auto& layer : gru.layers()) {
      layer.b_ih.mutable_value().setRandom();
      layer.b_hh.mutable_value().setRandom();
    }
    NamedParams params;
    gru.collect(params, "gru");
    std::vector<Tensor> leaves{x, h0a, h0b};
    for (auto& [name, t] : params) leaves.push_back(t);
    auto res = grad_check([&] { return project(gru(x, {h0a, h0b}).sequence, proj); }, leaves);
    EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
  }
}

TEST(Gru, FinalStateGradient) {
  Rng rng(4);
  Gru gru(2, 3, 1, rng);
  auto x = random_param({5, 2}, rng);
  auto proj = random_const({3}, rng);
  auto res = grad_check([&] { return project(gru(x).final_state[0], proj); }, {x});
  EXPECT_LT(res.max_rel_error, 1e-6) << res.worst;
}

TEST(Gru, StrictlyCausal) {
  Rng rng(5);
  Gru gru(3, 6, 2, rng);
  auto x = random_const({10, 3}, rng);
  auto full = gru(x).sequence.value();
  for (Index t = 0; t < 10; ++t) {
    Matrix cut = x.value();
    cut.bottomRows(10 - t - 1).setZero();
    auto part = gru(Tensor::constant({10, 3}, cut)).sequence.value();
    EXPECT_EQ(part.topRows(t + 1), full.topRows(t + 1));
  }
}

TEST(Gru, NonFiniteInputRejectedBeforeRecording) {
  Rng rng(6);
  Gru gru(2, 3, 1, rng);
  Matrix bad = Matrix::Zero(4, 2);
  bad(2, 1) = std::nan("");
  Tape tape;
  TapeScope scope(tape);
  EXPECT_THROW(gru(Tensor::constant({4, 2}, bad)), NumericalError);
  EXPECT_EQ(tape.size(), 0u);
}

// --------------------------------------------------------------- attention --

TEST(Attention, SingleStepReturnsProjectedValue) {
  Rng rng(7);
  MultiheadAttention mha(8, 4, rng);
  auto x = random_const({1, 8}, rng);
  auto out = mha(x, x, x, AttentionMask::none);
  // Softmax over one key is 1, so the output is out_proj(v_proj(x)).
  NamedParams p;
  mha.collect(p, "a");
  auto v = linear(x, p[4].second, p[5].second);
  auto expected = linear(v, p[6].second, p[7].second);
  EXPECT_TRUE(out.value().isApprox(expected.value(), 1e-14));
}

TEST(Attention, RowsSumToOne) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    auto q = random_const({2, 7, 8}, rng, 3.0);
    auto k = random_const({2, 7, 8}, rng, 3.0);
    auto v = random_const({2, 7, 8}, rng);
    for (auto mask : {AttentionMask::none, AttentionMask::causal}) {
      std::vector<Matrix> weights;
      scaled_dot_attention(q, k, v, 4, mask, &weights);
      ASSERT_EQ(weights.size(), 8u);
      for (const auto& w : weights) {
        for (Index r = 0; r < w.rows(); ++r) EXPECT_NEAR(w.row(r).sum(), 1.0, 1e-12);
        if (mask == AttentionMask::causal) {
          for (Index r = 0; r < w.rows(); ++r) EXPECT_EQ(w.row(r).tail(w.cols() - r - 1).sum(), 0.0);
        }
      }
    }
  }
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    MultiheadAttention mha(8, 2, rng);
    auto x = random_param({4, 8}, rng);
    auto y = random_param({4, 8}, rng);
    auto proj = random_const({4, 8}, rng);
    NamedParams params;
    mha.collect(params, "a");
    std::vector<Tensor> leaves{x, y};
    for (auto& [n, t] : params) leaves.push_back(t);
    for (auto mask : {AttentionMask::none, AttentionMask::causal}) {
      auto res = grad_check([&] { return project(mha(x, y, y, mask), proj); }, leaves);
      EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
    }
  }
}

TEST(Attention, CausalMaskIgnoresFuture) {
  Rng rng(8);
  MultiheadAttention mha(8, 4, rng);
  auto x = random_const({9, 8}, rng);
  auto full = mha(x, x, x, AttentionMask::causal).value();
  for (Index t = 0; t < 9; ++t) {
    Matrix cut = x.value();
    cut.bottomRows(9 - t - 1).setZero();
    auto xc = Tensor::constant({9, 8}, cut);
    auto part = mha(xc, xc, xc, AttentionMask::causal).value();
    EXPECT_EQ(part.topRows(t + 1), full.topRows(t + 1));
  }
}

TEST(Attention, HeadsMustDivideDim) {
  Rng rng(9);
  EXPECT_THROW(MultiheadAttention(10, 4, rng), ConfigError);
  auto q = random_const({3, 10}, rng);
  EXPECT_THROW(scaled_dot_attention(q, q, q, 4, AttentionMask::none), ConfigError);
}

// ------------------------------------------------------ elementwise/linear --

TEST(Ops, MatmulIdentity) {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  auto out = matmul(Tensor::constant({2, 2}, a), Tensor::constant({2, 2}, Matrix::Identity(2, 2)));
  EXPECT_EQ(out.value(), a);
}

TEST(Ops, ClosedForms) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_DOUBLE_EQ(relu(Tensor::scalar(-1.0)).item(), 0.0);
  for (double v : {-800.0, -40.0, 40.0, 800.0}) {
    const double s = sigmoid(Tensor::scalar(v)).item();
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(10);
  auto x = random_const({5, 7}, rng, 20.0);
  auto y = softmax(x);
  for (Index r = 0; r < 5; ++r) EXPECT_NEAR(y.value().row(r).sum(), 1.0, 1e-12);
}

TEST(Ops, CompositeSigmoidOfLinear) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    auto w = random_param({4, 3}, rng);
    auto x = random_param({3, 2}, rng);
    auto res = grad_check([&] { return sum(sigmoid(matmul(w, x))); }, {w, x});
    EXPECT_LT(res.max_rel_error, 1e-6) << res.worst;
  }
}

TEST(Ops, EveryOpPassesGradientCheck) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    auto a = random_param({2, 3, 4}, rng);
    auto b = random_param({2, 3, 4}, rng);
    auto row = random_param({4}, rng);
    auto mat = random_param({3, 4}, rng);
    auto w = random_param({4, 5}, rng);
    auto bias = random_param({5}, rng);
    auto gamma = random_param({4}, rng);
    auto beta = random_param({4}, rng);
    auto p4 = random_const({2, 3, 4}, rng);
    auto p5 = random_const({2, 3, 5}, rng);
    auto p8 = random_const({2, 3, 8}, rng);
    auto p2 = random_const({2, 2, 4}, rng);

    std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
        {"add", [&] { return project(add(a, b), p4); }},
        {"add_bcast_row", [&] { return project(add(a, row), p4); }},
        {"add_bcast_mat", [&] { return project(add(a, mat), p4); }},
        {"sub_bcast", [&] { return project(sub(a, mat), p4); }},
        {"mul", [&] { return project(mul(a, b), p4); }},
        {"mul_bcast", [&] { return project(mul(a, row), p4); }},
        {"scale", [&] { return project(add_scalar(scale(a, -1.7), 0.3), p4); }},
        {"matmul", [&] { return project(matmul(a, w), p5); }},
        {"linear", [&] { return project(linear(a, w, bias), p5); }},
        {"relu", [&] { return project(relu(a), p4); }},
        {"sigmoid", [&] { return project(sigmoid(a), p4); }},
        {"tanh", [&] { return project(tanh(a), p4); }},
        {"abs", [&] { return project(abs(a), p4); }},
        {"softmax", [&] { return project(softmax(a), p4); }},
        {"layer_norm", [&] { return project(layer_norm(a, gamma, beta), p4); }},
        {"mean", [&] { return mean(mul(a, b)); }},
        {"concat", [&] {
           const Tensor parts[] = {a, b};
           return project(concat_last(parts), p8);
         }},
        {"slice", [&] { return project(slice(a, 1, 1, 3), p2); }},
        {"reshape", [&] { return project(reshape(a, {6, 4}), reshape(p4, {6, 4})); }},
        {"pearson", [&] { return sum(mul(pearson_rows(a, b), reshape(slice(p4, 2, 0, 1), {2, 3}))); }},
        {"convex_mix", [&] { return project(convex_mix(sigmoid(a), b, mul(a, b)), p4); }},
    };
    for (auto& [name, fn] : cases) {
      auto res = grad_check(fn, {a, b, row, mat, w, bias, gamma, beta});
      EXPECT_LT(res.max_rel_error, 1e-4) << name << " seed " << seed << ": " << res.worst;
    }
  }
}

TEST(Ops, ShapeMismatchRaisesDimensionError) {
  Rng rng(11);
  EXPECT_THROW(add(random_const({2, 3}, rng), random_const({3, 2}, rng)), DimensionError);
  EXPECT_THROW(matmul(random_const({2, 3}, rng), random_const({2, 3}, rng)), DimensionError);
  EXPECT_THROW(pearson_rows(random_const({2, 3}, rng), random_const({2, 4}, rng)), DimensionError);
}

TEST(Ops, PearsonOfConstantIsZeroWithFiniteGradient) {
  Matrix c = Matrix::Constant(1, 5, 2.0);
  Rng rng(12);
  auto x = Tensor::parameter({5}, c);
  auto y = random_const({5}, rng);
  EXPECT_EQ(pearson_rows(x, y).item(), 0.0);
  auto res = grad_check([&] { return pearson_rows(x, y); }, {x});
  EXPECT_TRUE(x.grad().allFinite());
}

// ---------------------------------------------------------------- backward --

TEST(Backward, ProductRule) {
  auto x = Tensor::parameter({}, Matrix::Constant(1, 1, 3.0));
  auto y = Tensor::parameter({}, Matrix::Constant(1, 1, 5.0));
  Tape tape;
  TapeScope scope(tape);
  tape.backward(mul(x, y));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(y.grad()(0, 0), 3.0);
}

TEST(Backward, UnusedLeafGetsExactZero) {
  auto x = Tensor::parameter({2}, Matrix::Constant(1, 2, 1.5));
  auto unused = Tensor::parameter({3}, Matrix::Constant(1, 3, 7.0));
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(x));
  EXPECT_EQ(unused.grad(), Matrix::Zero(1, 3));
}

TEST(Backward, NonScalarLossRejected) {
  auto x = Tensor::parameter({2}, Matrix::Constant(1, 2, 1.5));
  Tape tape;
  TapeScope scope(tape);
  EXPECT_THROW(tape.backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, TapeIsSingleUse) {
  auto x = Tensor::parameter({2}, Matrix::Constant(1, 2, 1.5));
  Tape tape;
  TapeScope scope(tape);
  auto loss = sum(mul(x, x));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), ContractError);
  EXPECT_TRUE(tape.consumed());
}

TEST(Backward, NoTapeMeansNoGraph) {
  auto x = Tensor::parameter({2}, Matrix::Constant(1, 2, 1.5));
  auto y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_THROW(backward(sum(y)), ContractError);
}

// -------------------------------------------------------------------- adam --

TEST(Adam, FirstStepIsSignedLearningRate) {
  Matrix v(1, 3);
  v << 1.0, -2.0, 0.5;
  auto p = Tensor::parameter({3}, v);
  Matrix g(1, 3);
  g << 0.3, -4.0, 1e-3;
  p.node()->grad = g;
  AdamState state;
  std::vector<Tensor> params{p};
  adam_step(params, state, 0.01);
  EXPECT_EQ(state.step, 1);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.value()(0, i), v(0, i) - 0.01 * (g(0, i) > 0 ? 1.0 : -1.0), 1e-7);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Matrix v(1, 2);
  v << 1.0, -2.0;
  auto p = Tensor::parameter({2}, v);
  p.node()->grad = Matrix::Zero(1, 2);
  AdamState state;
  std::vector<Tensor> params{p};
  adam_step(params, state, 0.1);
  EXPECT_EQ(p.value(), v);
}

TEST(Adam, ConvergesOnQuadratic) {
  Matrix c(1, 4);
  c << 1.0, -2.0, 0.5, 3.0;
  auto x = Tensor::parameter({4}, Matrix::Zero(1, 4));
  auto target = Tensor::constant({4}, c);
  AdamState state;
  std::vector<Tensor> params{x};
  for (int step = 0; step < 200; ++step) {
    x.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    auto d = sub(x, target);
    tape.backward(sum(mul(d, d)));
    adam_step(params, state, 0.1);
  }
  EXPECT_LT((x.value() - c).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Adam, ShapeMismatchRejected) {
  auto p = Tensor::parameter({2}, Matrix::Zero(1, 2));
  p.node()->grad = Matrix::Zero(1, 3);
  AdamState state;
  std::vector<Tensor> params{p};
  EXPECT_THROW(adam_step(params, state, 0.1), ContractError);
}

TEST(Adam, ClipGradNorm) {
  auto p = Tensor::parameter({2}, Matrix::Zero(1, 2));
  Matrix g(1, 2);
  g << 3.0, 4.0;
  p.node()->grad = g;
  std::vector<Tensor> params{p};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(p.grad().norm(), 1.0, 1e-15);
}

// ---------------------------------------------------------------- schedule --

TEST(Schedule, StaticIsConstant) {
  for (std::int64_t s : {1, 10, 100000}) EXPECT_EQ(schedule_rate(StaticRate{1e-3}, s), 0.001);
}

TEST(Schedule, NoamAtWarmup) {
  EXPECT_NEAR(schedule_rate(NoamRate{256, 4000}, 4000), 0.000988211768802618, 1e-15);
}

TEST(Schedule, NoamRisesThenFalls) {
  const NoamRate noam{256, 4000};
  for (std::int64_t s = 1; s < 4000; ++s) EXPECT_LT(schedule_rate(noam, s), schedule_rate(noam, s + 1));
  for (std::int64_t s = 4000; s < 20000; ++s) EXPECT_GT(schedule_rate(noam, s), schedule_rate(noam, s + 1));
}

TEST(Schedule, StepZeroRejected) { EXPECT_THROW(schedule_rate(StaticRate{}, 0), ContractError); }
