#pragma once

#include "decaf/numcore/layers.hpp"
#include "decaf/numcore/rng.hpp"
#include "decaf/numcore/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace decaf::models {

using nc::Index;
using nc::NamedParams;
using nc::Tensor;

struct EegEncoderConfig {
  Index channels = 64;
  Index d_model = 256;
  Index n_layers = 8;
  Index n_heads = 8;
  Index ffn_dim = 2048;
  double dropout = 0.1;
};

struct ForecasterConfig {
  Index embed = 128;
  Index kernel = 7;
  Index hidden = 128;
  Index gru_layers = 2;
  Index heads = 4;
  Index head_hidden = 256;
  Index t_out = 192;
};

struct FusionGateConfig {
  std::vector<Index> channels{2, 16, 8, 1};
  std::vector<Index> kernels{5, 3, 1};
};

enum class ModelKind { decaf, eeg_only };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

struct DecafConfig {
  ModelKind kind = ModelKind::decaf;
  Index window = 192;  // T, also the context length
  EegEncoderConfig encoder;
  ForecasterConfig forecaster;
  FusionGateConfig gate;
};

/// Full-size configuration.
DecafConfig default_config();
/// Small configuration for desk-scale benchmarks: encoder d_model 64, 2
/// layers, 4 heads; forecaster width 32.
DecafConfig toy_config();

/// Throws ConfigError naming the offending field.
void validate(const DecafConfig& cfg);

/// Per-call options. Dropout is active only when `training` and `rng` are set.
struct ForwardOptions {
  bool training = false;
  nc::Rng* rng = nullptr;
};

/// Pre-norm transformer encoder: [B, T, C] -> [B, T].
class EegEncoder {
 public:
  EegEncoder() = default;
  EegEncoder(const EegEncoderConfig& cfg, nc::Rng& rng);

  Tensor operator()(const Tensor& eeg, const ForwardOptions& opt = {}) const;
  void collect(NamedParams& out, const std::string& prefix) const;

 private:
  struct Block {
    nc::LayerNorm norm1, norm2;
    nc::MultiheadAttention attn;
    nc::Linear ff1, ff2;
  };
  EegEncoderConfig cfg_;
  nc::Linear input_;
  std::vector<Block> blocks_;
  nc::LayerNorm final_norm_;
  nc::Linear output_;
};

/// Sinusoidal positional table [T, d].
nc::Matrix positional_encoding(Index t, Index d);

/// Context window [B, Tc] -> prior estimate [B, T_out]. Conv embedding, GRU
/// stack, causal self-attention with a residual connection, then a two-layer
/// head on the final time step.
class Forecaster {
 public:
  Forecaster() = default;
  Forecaster(const ForecasterConfig& cfg, nc::Rng& rng);

  Tensor operator()(const Tensor& context) const;
  void collect(NamedParams& out, const std::string& prefix) const;

 private:
  ForecasterConfig cfg_;
  nc::Conv1d embed_;
  nc::Gru gru_;
  nc::MultiheadAttention attn_;
  nc::Linear head1_, head2_;
};

/// Conv stack over the two stacked estimates -> alpha in (0, 1), [B, T].
class FusionGate {
 public:
  FusionGate() = default;
  FusionGate(const FusionGateConfig& cfg, nc::Rng& rng);

  Tensor operator()(const Tensor& eeg_estimate, const Tensor& prior) const;
  void collect(NamedParams& out, const std::string& prefix) const;
  /// Bias of the last conv; forcing it to +-20 saturates the gate.
  Tensor& output_bias() { return convs_.back().bias; }

 private:
  std::vector<nc::Conv1d> convs_;
};

struct DecafOutput {
  Tensor fused;         // A_n
  Tensor alpha;         // undefined for eeg_only
  Tensor eeg_estimate;  // Â_eeg
  Tensor prior;         // Â_prior, undefined for eeg_only
};

class DecafModel {
 public:
  DecafModel(const DecafConfig& cfg, std::uint64_t seed);

  /// eeg [B, T, C], context [B, T]; context may be undefined for eeg_only.
  DecafOutput forward(const Tensor& eeg, const Tensor& context, const ForwardOptions& opt = {}) const;
  Tensor encode(const Tensor& eeg, const ForwardOptions& opt = {}) const;
  Tensor forecast(const Tensor& context) const;
  Tensor fuse_gate(const Tensor& eeg_estimate, const Tensor& prior) const;

  /// Trainable tensors in a fixed, documented order (encoder, forecaster, gate).
  NamedParams parameters() const;
  std::vector<Tensor> parameter_tensors() const;
  Index param_count() const;

  const DecafConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  FusionGate& gate() { return gate_; }

 private:
  void check_eeg(const Tensor& eeg) const;
  void check_context(const Tensor& context) const;

  DecafConfig cfg_;
  std::uint64_t seed_;
  EegEncoder encoder_;
  Forecaster forecaster_;
  FusionGate gate_;
};

}  // namespace decaf::models
