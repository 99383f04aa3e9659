#include "decaf/numcore/layers.hpp"

#include "decaf/error.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace decaf::nc {

using detail::in;
using detail::make_result;

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

struct SeqDims {
  Index batch;
  Index time;
  Index channels;
};

SeqDims sequence_dims(const Tensor& x, const char* op) {
  if (x.rank() < 2) {
    throw DimensionError(std::string(op) + ": input must be [T, C] or [B, T, C], got " +
                         to_string(x.shape()));
  }
  const Index t = x.dim(-2);
  const Index c = x.dim(-1);
  return {t * c == 0 ? 0 : x.numel() / (t * c), t, c};
}

}  // namespace

// ----------------------------------------------------------------- conv1d --

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Padding padding) {
  const auto [batch, time, cin] = sequence_dims(x, "conv1d");
  if (weight.rank() != 3) throw DimensionError("conv1d: weight must be [Cout, Cin, K]");
  const Index cout = weight.dim(0);
  const Index kernel = weight.dim(2);
  if (weight.dim(1) != cin) {
    throw DimensionError("conv1d: input channel axis (last axis of input) has " +
                         std::to_string(cin) + " but weight axis 1 has " +
                         std::to_string(weight.dim(1)));
  }
  if (bias.shape() != Shape{cout}) {
    throw DimensionError("conv1d: bias axis 0 must equal Cout=" + std::to_string(cout));
  }
  if (padding == Padding::same && kernel % 2 == 0) {
    throw ContractError("conv1d: same padding requires an odd kernel, got K=" + std::to_string(kernel));
  }
  const Index pad_left = padding == Padding::same ? kernel / 2 : kernel - 1;
  const Index width = cin * kernel;

  const Matrix& xv = x.value();
  Matrix cols = Matrix::Zero(batch * time, width);
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < time; ++t) {
      for (Index k = 0; k < kernel; ++k) {
        const Index src = t + k - pad_left;
        if (src < 0 || src >= time) continue;
        for (Index c = 0; c < cin; ++c) cols(b * time + t, c * kernel + k) = xv(b * time + src, c);
      }
    }
  }
  const ConstMap wm(weight.value().data(), cout, width);
  Matrix out = cols * wm.transpose();
  out.rowwise() += bias.value().row(0);

  Shape shape = x.shape();
  shape.back() = cout;
  return make_result(
      std::move(shape), std::move(out), {x, weight, bias},
      [cols = std::move(cols), batch, time, cin, cout, kernel, pad_left, width](Node& self) {
        Node& nx = in(self, 0);
        Node& nw = in(self, 1);
        Node& nb = in(self, 2);
        const ConstMap wm(nw.value.data(), cout, width);
        if (nw.requires_grad) {
          Matrix dw(cout * cin, kernel);
          MutMap(dw.data(), cout, width).noalias() = self.grad.transpose() * cols;
          nw.accumulate(dw);
        }
        if (nb.requires_grad) nb.accumulate_expr(self.grad.colwise().sum());
        if (nx.requires_grad) {
          const Matrix dcols = self.grad * wm;
          Matrix dx = Matrix::Zero(batch * time, cin);
          for (Index b = 0; b < batch; ++b) {
            for (Index t = 0; t < time; ++t) {
              for (Index k = 0; k < kernel; ++k) {
                const Index src = t + k - pad_left;
                if (src < 0 || src >= time) continue;
                for (Index c = 0; c < cin; ++c) {
                  dx(b * time + src, c) += dcols(b * time + t, c * kernel + k);
                }
              }
            }
          }
          nx.accumulate(dx);
        }
      });
}

// -------------------------------------------------------------------- GRU --

namespace {

struct GruCache {
  Index batch, time, hidden;
  std::vector<Matrix> h_prev, r, z, n, hn;  // one [B, H] per step
};

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor gru_layer(const Tensor& x, const Tensor& h0, const Tensor& w_ih, const Tensor& w_hh,
                 const Tensor& b_ih, const Tensor& b_hh) {
  const auto [batch, time, din] = sequence_dims(x, "gru");
  if (w_hh.rank() != 2) throw DimensionError("gru: w_hh must be [H, 3H]");
  const Index hidden = w_hh.dim(0);
  if (w_hh.dim(1) != 3 * hidden) throw DimensionError("gru: w_hh axis 1 must be 3H");
  if (w_ih.shape() != Shape{din, 3 * hidden}) {
    throw DimensionError("gru: w_ih must be [" + std::to_string(din) + ", " +
                         std::to_string(3 * hidden) + "], got " + to_string(w_ih.shape()));
  }
  if (b_ih.shape() != Shape{3 * hidden} || b_hh.shape() != Shape{3 * hidden}) {
    throw DimensionError("gru: biases must be [3H]");
  }
  if (!x.value().allFinite()) throw NumericalError("gru: non-finite input sequence");
  Matrix h = Matrix::Zero(batch, hidden);
  if (h0.defined()) {
    if (h0.numel() != batch * hidden) {
      throw DimensionError("gru: initial state must hold B*H=" + std::to_string(batch * hidden) +
                           " values, got " + to_string(h0.shape()));
    }
    if (!h0.value().allFinite()) throw NumericalError("gru: non-finite initial state");
    h = ConstMap(h0.value().data(), batch, hidden);
  }

  const Index H = hidden;
  Matrix xi = x.value() * w_ih.value();
  xi.rowwise() += b_ih.value().row(0);
  const Matrix& whh = w_hh.value();
  const auto bhh = b_hh.value().row(0);

  auto cache = std::make_shared<GruCache>();
  cache->batch = batch;
  cache->time = time;
  cache->hidden = H;
  const bool record = active_tape() != nullptr;
  if (record) {
    for (auto* v : {&cache->h_prev, &cache->r, &cache->z, &cache->n, &cache->hn}) v->reserve(time);
  }

  Matrix out(batch * time, H);
  Matrix gh(batch, 3 * H);
  Matrix xt(batch, 3 * H);
  for (Index t = 0; t < time; ++t) {
    for (Index b = 0; b < batch; ++b) xt.row(b) = xi.row(b * time + t);
    gh.noalias() = h * whh;
    gh.rowwise() += bhh;
    Matrix r = (xt.leftCols(H) + gh.leftCols(H)).unaryExpr(&stable_sigmoid);
    Matrix z = (xt.middleCols(H, H) + gh.middleCols(H, H)).unaryExpr(&stable_sigmoid);
    Matrix hn = gh.rightCols(H);
    Matrix n = (xt.rightCols(H).array() + r.array() * hn.array()).tanh().matrix();
    Matrix h_next = (n.array() + z.array() * (h.array() - n.array())).matrix();
    for (Index b = 0; b < batch; ++b) out.row(b * time + t) = h_next.row(b);
    if (record) {
      cache->h_prev.push_back(std::move(h));
      cache->r.push_back(std::move(r));
      cache->z.push_back(std::move(z));
      cache->n.push_back(std::move(n));
      cache->hn.push_back(std::move(hn));
    }
    h = std::move(h_next);
  }

  Shape shape = x.shape();
  shape.back() = H;
  std::vector<Tensor> inputs{x, w_ih, w_hh, b_ih, b_hh};
  if (h0.defined()) inputs.push_back(h0);
  return make_result(std::move(shape), std::move(out), std::move(inputs), [cache](Node& self) {
    const Index B = cache->batch;
    const Index T = cache->time;
    const Index H = cache->hidden;
    Node& nx = in(self, 0);
    Node& nwih = in(self, 1);
    Node& nwhh = in(self, 2);
    Node& nbih = in(self, 3);
    Node& nbhh = in(self, 4);
    const Matrix& whh = nwhh.value;

    Matrix dxi(B * T, 3 * H);
    Matrix dwhh = Matrix::Zero(H, 3 * H);
    Matrix dgh(B, 3 * H);
    Matrix dh = Matrix::Zero(B, H);
    for (Index t = T - 1; t >= 0; --t) {
      for (Index b = 0; b < B; ++b) dh.row(b) += self.grad.row(b * T + t);
      const auto r = cache->r[t].array();
      const auto z = cache->z[t].array();
      const auto n = cache->n[t].array();
      const auto hn = cache->hn[t].array();
      const auto hp = cache->h_prev[t].array();
      const auto dha = dh.array();

      const Eigen::ArrayXXd dn_pre = dha * (1.0 - z) * (1.0 - n.square());
      const Eigen::ArrayXXd dz_pre = dha * (hp - n) * z * (1.0 - z);
      const Eigen::ArrayXXd dr_pre = dn_pre * hn * r * (1.0 - r);
      dgh.leftCols(H) = dr_pre.matrix();
      dgh.middleCols(H, H) = dz_pre.matrix();
      dgh.rightCols(H) = (dn_pre * r).matrix();
      for (Index b = 0; b < B; ++b) {
        dxi.row(b * T + t).head(2 * H) = dgh.row(b).head(2 * H);
        dxi.row(b * T + t).tail(H) = dn_pre.row(b).matrix();
      }
      dwhh.noalias() += cache->h_prev[t].transpose() * dgh;
      if (nbhh.requires_grad) nbhh.accumulate_expr(dgh.colwise().sum());
      Matrix dh_prev = (dha * z).matrix();
      dh_prev.noalias() += dgh * whh.transpose();
      dh = std::move(dh_prev);
    }
    if (nwhh.requires_grad) nwhh.accumulate(dwhh);
    if (nwih.requires_grad) nwih.accumulate_expr(nx.value.transpose() * dxi);
    if (nbih.requires_grad) nbih.accumulate_expr(dxi.colwise().sum());
    if (nx.requires_grad) nx.accumulate_expr(dxi * nwih.value.transpose());
    if (self.inputs.size() > 5) {
      Node& nh0 = in(self, 5);
      if (nh0.requires_grad) nh0.accumulate(ConstMap(dh.data(), nh0.value.rows(), nh0.value.cols()));
    }
  });
}

// -------------------------------------------------------------- attention --

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, Index heads,
                            AttentionMask mask, std::vector<Matrix>* weights) {
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("attention: q/k/v shapes differ: " + to_string(q.shape()) + ", " +
                         to_string(k.shape()) + ", " + to_string(v.shape()));
  }
  const auto [batch, time, dim] = sequence_dims(q, "attention");
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const Index dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool causal = mask == AttentionMask::causal;

  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(static_cast<std::size_t>(batch * heads));
  Matrix out(batch * time, dim);
  for (Index b = 0; b < batch; ++b) {
    for (Index h = 0; h < heads; ++h) {
      const auto qh = q.value().block(b * time, h * dh, time, dh);
      const auto kh = k.value().block(b * time, h * dh, time, dh);
      const auto vh = v.value().block(b * time, h * dh, time, dh);
      Matrix s = (qh * kh.transpose()) * scale;
      for (Index i = 0; i < time; ++i) {
        const Index visible = causal ? i + 1 : time;
        auto row = s.row(i);
        const double mx = row.head(visible).maxCoeff();
        row.head(visible) = (row.head(visible).array() - mx).exp().matrix();
        row.tail(time - visible).setZero();
        row /= row.sum();
      }
      out.block(b * time, h * dh, time, dh).noalias() = s * vh;
      probs->push_back(std::move(s));
    }
  }
  if (weights != nullptr) *weights = *probs;

  return make_result(q.shape(), std::move(out), {q, k, v},
                     [probs, batch, time, heads, dh, scale](Node& self) {
                       Node& nq = in(self, 0);
                       Node& nk = in(self, 1);
                       Node& nv = in(self, 2);
                       const Index dim = heads * dh;
                       Matrix dq = Matrix::Zero(batch * time, dim);
                       Matrix dk = Matrix::Zero(batch * time, dim);
                       Matrix dv = Matrix::Zero(batch * time, dim);
                       for (Index b = 0; b < batch; ++b) {
                         for (Index h = 0; h < heads; ++h) {
                           const Matrix& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
                           const auto go = self.grad.block(b * time, h * dh, time, dh);
                           const auto qh = nq.value.block(b * time, h * dh, time, dh);
                           const auto kh = nk.value.block(b * time, h * dh, time, dh);
                           const auto vh = nv.value.block(b * time, h * dh, time, dh);
                           Matrix dp = go * vh.transpose();
                           dv.block(b * time, h * dh, time, dh).noalias() = p.transpose() * go;
                           const Vector dots = (dp.array() * p.array()).rowwise().sum();
                           dp.colwise() -= dots;
                           const Matrix ds = (p.array() * dp.array()).matrix() * scale;
                           dq.block(b * time, h * dh, time, dh).noalias() = ds * kh;
                           dk.block(b * time, h * dh, time, dh).noalias() = ds.transpose() * qh;
                         }
                       }
                       if (nq.requires_grad) nq.accumulate(dq);
                       if (nk.requires_grad) nk.accumulate(dk);
                       if (nv.requires_grad) nv.accumulate(dv);
                     });
}

// ----------------------------------------------------------------- layers --

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  Matrix m(storage_rows(shape), storage_cols(shape));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return Tensor::parameter(std::move(shape), std::move(m));
}

Tensor zero_param(Shape shape) {
  Matrix m = Matrix::Zero(storage_rows(shape), storage_cols(shape));
  return Tensor::parameter(std::move(shape), std::move(m));
}

namespace {
double fan_in_bound(Index fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }
}  // namespace

Linear::Linear(Index in, Index out, Rng& rng)
    : weight(uniform_param({in, out}, fan_in_bound(in), rng)), bias(zero_param({out})) {}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Conv1d::Conv1d(Index in, Index out, Index kernel, Padding pad, Rng& rng)
    : weight(uniform_param({out, in, kernel}, fan_in_bound(in * kernel), rng)),
      bias(zero_param({out})),
      padding(pad) {}

void Conv1d::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(Index dim) : gamma(zero_param({dim})), beta(zero_param({dim})) {
  gamma.mutable_value().setOnes();
}

void LayerNorm::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

Gru::Gru(Index input, Index hidden, Index layers, Rng& rng) : hidden_(hidden) {
  for (Index l = 0; l < layers; ++l) {
    const Index din = l == 0 ? input : hidden;
    Layer layer;
    layer.w_ih = uniform_param({din, 3 * hidden}, fan_in_bound(din), rng);
    layer.w_hh = uniform_param({hidden, 3 * hidden}, fan_in_bound(hidden), rng);
    layer.b_ih = zero_param({3 * hidden});
    layer.b_hh = zero_param({3 * hidden});
    layers_.push_back(std::move(layer));
  }
}

Gru::Output Gru::operator()(const Tensor& x, const std::vector<Tensor>& initial) const {
  if (!initial.empty() && initial.size() != layers_.size()) {
    throw DimensionError("gru: expected " + std::to_string(layers_.size()) + " initial states");
  }
  Output result;
  Tensor seq = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const Tensor h0 = initial.empty() ? Tensor() : initial[l];
    seq = gru_layer(seq, h0, layer.w_ih, layer.w_hh, layer.b_ih, layer.b_hh);
    const Index t = seq.dim(-2);
    Tensor last = slice(seq, seq.rank() - 2, t - 1, t);
    Shape state_shape = seq.shape();
    state_shape.erase(state_shape.end() - 2);
    result.final_state.push_back(reshape(last, std::move(state_shape)));
  }
  result.sequence = seq;
  return result;
}

void Gru::collect(NamedParams& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    out.emplace_back(p + ".w_ih", layers_[l].w_ih);
    out.emplace_back(p + ".w_hh", layers_[l].w_hh);
    out.emplace_back(p + ".b_ih", layers_[l].b_ih);
    out.emplace_back(p + ".b_hh", layers_[l].b_hh);
  }
}

MultiheadAttention::MultiheadAttention(Index dim, Index heads, Rng& rng)
    : heads_(heads), q_(dim, dim, rng), k_(dim, dim, rng), v_(dim, dim, rng), out_(dim, dim, rng) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

Tensor MultiheadAttention::operator()(const Tensor& q, const Tensor& k, const Tensor& v,
                                      AttentionMask mask, std::vector<Matrix>* weights) const {
  return out_(scaled_dot_attention(q_(q), k_(k), v_(v), heads_, mask, weights));
}

void MultiheadAttention::collect(NamedParams& out, const std::string& prefix) const {
  q_.collect(out, prefix + ".q");
  k_.collect(out, prefix + ".k");
  v_.collect(out, prefix + ".v");
  out_.collect(out, prefix + ".out");
}

Index count_params(const NamedParams& params) {
  Index total = 0;
  for (const auto& [name, t] : params) total += t.numel();
  return total;
}

}  // namespace decaf::nc
