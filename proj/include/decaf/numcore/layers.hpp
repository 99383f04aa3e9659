#pragma once

#include "decaf/numcore/ops.hpp"
#include "decaf/numcore/rng.hpp"
#include "decaf/numcore/tensor.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace decaf::nc {

// ---------------------------------------------------------------------------
// Fused sequence ops. Inputs are time-major: [T, C] or batched [B, T, C].
// ---------------------------------------------------------------------------

enum class Padding {
  same,    // symmetric zero pad of K/2 on both ends (K odd)
  causal,  // K-1 zeros on the left
};

/// 1-D convolution over the time axis.
/// x [.., T, Cin], weight [Cout, Cin, K], bias [Cout] -> [.., T, Cout].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Padding padding);

/// One GRU layer (update gate z, reset gate r, candidate n):
///   r = sigma(x W_ir + b_ir + h W_hr + b_hr)
///   z = sigma(x W_iz + b_iz + h W_hz + b_hz)
///   n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
///   h' = (1 - z) * n + z * h
/// Gate blocks are packed [r | z | n] along the last axis of the weights:
/// w_ih [Din, 3H], w_hh [H, 3H], b_ih [3H], b_hh [3H]. `h0` is [B, H], [H]
/// for unbatched input, or undefined for zeros. Returns [.., T, H].
Tensor gru_layer(const Tensor& x, const Tensor& h0, const Tensor& w_ih, const Tensor& w_hh,
                 const Tensor& b_ih, const Tensor& b_hh);

enum class AttentionMask { none, causal };

/// Multi-head scaled dot-product attention on already projected q/k/v
/// [.., T, D]; heads split D evenly with scale 1/sqrt(D/heads). When
/// `weights` is given it receives one [T, T] matrix per (batch, head), in
/// batch-major order.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, Index heads,
                            AttentionMask mask, std::vector<Matrix>* weights = nullptr);

// ---------------------------------------------------------------------------
// Parameter-holding layers. Weights are drawn uniform(-1/sqrt(fan_in),
// +1/sqrt(fan_in)); biases start at zero; layer-norm gain at one.
// ---------------------------------------------------------------------------

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

Tensor uniform_param(Shape shape, double bound, Rng& rng);
Tensor zero_param(Shape shape);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(Index in, Index out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct Conv1d {
  Tensor weight;  // [out, in, K]
  Tensor bias;    // [out]
  Padding padding = Padding::same;

  Conv1d() = default;
  Conv1d(Index in, Index out, Index kernel, Padding padding, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv1d(x, weight, bias, padding); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  explicit LayerNorm(Index dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

/// Stacked unidirectional GRU; layer l+1 consumes layer l's output sequence.
class Gru {
 public:
  struct Layer {
    Tensor w_ih, w_hh, b_ih, b_hh;
  };
  struct Output {
    Tensor sequence;                  // last layer, [.., T, H]
    std::vector<Tensor> final_state;  // per layer, [.., H]
  };

  Gru() = default;
  Gru(Index input, Index hidden, Index layers, Rng& rng);

  /// `initial` holds one state per layer or is empty for zeros.
  Output operator()(const Tensor& x, const std::vector<Tensor>& initial = {}) const;
  void collect(NamedParams& out, const std::string& prefix) const;

  Index hidden() const { return hidden_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

 private:
  Index hidden_ = 0;
  std::vector<Layer> layers_;
};

/// Multi-head attention with learned Q/K/V/output projections.
class MultiheadAttention {
 public:
  MultiheadAttention() = default;
  MultiheadAttention(Index dim, Index heads, Rng& rng);

  Tensor operator()(const Tensor& q, const Tensor& k, const Tensor& v, AttentionMask mask,
                    std::vector<Matrix>* weights = nullptr) const;
  void collect(NamedParams& out, const std::string& prefix) const;

  Index heads() const { return heads_; }
  Linear& out_proj() { return out_; }
  const Linear& value_proj() const { return v_; }

 private:
  Index heads_ = 1;
  Linear q_, k_, v_, out_;
};

Index count_params(const NamedParams& params);

}  // namespace decaf::nc
