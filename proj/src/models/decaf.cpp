#include "decaf/models/decaf.hpp"

#include "decaf/error.hpp"
#include "decaf/numcore/ops.hpp"

#include <array>
#include <cmath>

namespace decaf::models {

using nc::Shape;

std::string to_string(ModelKind k) { return k == ModelKind::decaf ? "decaf" : "eeg_only"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "decaf") return ModelKind::decaf;
  if (s == "eeg_only") return ModelKind::eeg_only;
  throw ConfigError("model kind must be decaf or eeg_only, got '" + s + "'");
}

DecafConfig default_config() { return DecafConfig{}; }

DecafConfig toy_config() {
  DecafConfig c;
  c.encoder.d_model = 64;
  c.encoder.n_layers = 2;
  c.encoder.n_heads = 4;
  c.encoder.ffn_dim = 128;
  c.forecaster.embed = 32;
  c.forecaster.hidden = 32;
  c.forecaster.heads = 4;
  c.forecaster.head_hidden = 64;
  return c;
}

void validate(const DecafConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("model." + field + ": " + why);
  };
  const auto& e = cfg.encoder;
  if (cfg.window < 2) fail("window", "must be >= 2");
  if (e.channels < 1) fail("channels", "must be >= 1");
  if (e.d_model < 1 || e.n_heads < 1 || e.d_model % e.n_heads != 0) {
    fail("d_model", "must be a positive multiple of n_heads");
  }
  if (e.n_layers < 0) fail("n_layers", "must be >= 0");
  if (e.ffn_dim < 1) fail("ffn_dim", "must be >= 1");
  if (!(e.dropout >= 0.0 && e.dropout < 1.0)) fail("dropout", "must be in [0, 1)");
  const auto& f = cfg.forecaster;
  if (f.embed < 1 || f.hidden < 1 || f.gru_layers < 1 || f.head_hidden < 1) {
    fail("forecaster", "widths and layer count must be >= 1");
  }
  if (f.kernel < 1 || f.kernel % 2 == 0) fail("forecaster_kernel", "must be odd");
  if (f.heads < 1 || f.hidden % f.heads != 0) fail("forecaster_heads", "must divide the GRU width");
  if (f.t_out != cfg.window) fail("t_out", "must equal the window length");
  const auto& g = cfg.gate;
  if (g.channels.size() != g.kernels.size() + 1 || g.channels.front() != 2 || g.channels.back() != 1) {
    fail("gate", "channels must run 2 -> ... -> 1 with one kernel per conv");
  }
  for (Index k : g.kernels) {
    if (k < 1 || k % 2 == 0) fail("gate", "kernels must be odd");
  }
}

// ------------------------------------------------------------------ encoder

nc::Matrix positional_encoding(Index t, Index d) {
  nc::Matrix pe(t, d);
  for (Index pos = 0; pos < t; ++pos) {
    for (Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double a = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  }
  return pe;
}

EegEncoder::EegEncoder(const EegEncoderConfig& cfg, nc::Rng& rng) : cfg_(cfg) {
  input_ = nc::Linear(cfg.channels, cfg.d_model, rng);
  for (Index l = 0; l < cfg.n_layers; ++l) {
    Block b;
    b.norm1 = nc::LayerNorm(cfg.d_model);
    b.attn = nc::MultiheadAttention(cfg.d_model, cfg.n_heads, rng);
    b.norm2 = nc::LayerNorm(cfg.d_model);
    b.ff1 = nc::Linear(cfg.d_model, cfg.ffn_dim, rng);
    b.ff2 = nc::Linear(cfg.ffn_dim, cfg.d_model, rng);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = nc::LayerNorm(cfg.d_model);
  output_ = nc::Linear(cfg.d_model, 1, rng);
}

Tensor EegEncoder::operator()(const Tensor& eeg, const ForwardOptions& opt) const {
  const bool drop = opt.training && opt.rng != nullptr && cfg_.dropout > 0.0;
  auto dropout = [&](const Tensor& x) { return drop ? nc::dropout(x, cfg_.dropout, *opt.rng) : x; };
  const Index b = eeg.dim(0);
  const Index t = eeg.dim(1);
  Tensor x = input_(eeg) + Tensor::constant({t, cfg_.d_model}, positional_encoding(t, cfg_.d_model));
  x = dropout(x);
  for (const auto& blk : blocks_) {
    Tensor h = blk.norm1(x);
    x = x + dropout(blk.attn(h, h, h, nc::AttentionMask::none));
    h = blk.norm2(x);
    x = x + dropout(blk.ff2(dropout(nc::relu(blk.ff1(h)))));
  }
  return nc::reshape(output_(final_norm_(x)), {b, t});
}

void EegEncoder::collect(NamedParams& out, const std::string& prefix) const {
  input_.collect(out, prefix + ".input");
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    blocks_[l].norm1.collect(out, p + ".norm1");
    blocks_[l].attn.collect(out, p + ".attn");
    blocks_[l].norm2.collect(out, p + ".norm2");
    blocks_[l].ff1.collect(out, p + ".ff1");
    blocks_[l].ff2.collect(out, p + ".ff2");
  }
  final_norm_.collect(out, prefix + ".final_norm");
  output_.collect(out, prefix + ".output");
}

// --------------------------------------------------------------- forecaster

Forecaster::Forecaster(const ForecasterConfig& cfg, nc::Rng& rng) : cfg_(cfg) {
  embed_ = nc::Conv1d(1, cfg.embed, cfg.kernel, nc::Padding::same, rng);
  gru_ = nc::Gru(cfg.embed, cfg.hidden, cfg.gru_layers, rng);
  attn_ = nc::MultiheadAttention(cfg.hidden, cfg.heads, rng);
  head1_ = nc::Linear(cfg.hidden, cfg.head_hidden, rng);
  head2_ = nc::Linear(cfg.head_hidden, cfg.t_out, rng);
}

Tensor Forecaster::operator()(const Tensor& context) const {
  const Index b = context.dim(0);
  const Index tc = context.dim(1);
  Tensor x = embed_(nc::reshape(context, {b, tc, 1}));
  Tensor seq = gru_(x).sequence;
  seq = seq + attn_(seq, seq, seq, nc::AttentionMask::causal);
  Tensor last = nc::reshape(nc::slice(seq, 1, tc - 1, tc), {b, cfg_.hidden});
  return head2_(nc::relu(head1_(last)));
}

void Forecaster::collect(NamedParams& out, const std::string& prefix) const {
  embed_.collect(out, prefix + ".embed");
  gru_.collect(out, prefix + ".gru");
  attn_.collect(out, prefix + ".attn");
  head1_.collect(out, prefix + ".head1");
  head2_.collect(out, prefix + ".head2");
}

// --------------------------------------------------------------------- gate

FusionGate::FusionGate(const FusionGateConfig& cfg, nc::Rng& rng) {
  for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
    convs_.emplace_back(cfg.channels[i], cfg.channels[i + 1], cfg.kernels[i], nc::Padding::same, rng);
  }
}

Tensor FusionGate::operator()(const Tensor& eeg_estimate, const Tensor& prior) const {
  if (eeg_estimate.shape() != prior.shape()) {
    throw ContractError("fuse: estimate shapes differ " + nc::to_string(eeg_estimate.shape()) + " vs " +
                        nc::to_string(prior.shape()));
  }
  const Index b = eeg_estimate.dim(0);
  const Index t = eeg_estimate.dim(1);
  const std::array<Tensor, 2> parts{nc::reshape(eeg_estimate, {b, t, 1}), nc::reshape(prior, {b, t, 1})};
  Tensor x = nc::concat_last(parts);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i](x);
    if (i + 1 < convs_.size()) x = nc::relu(x);
  }
  return nc::reshape(nc::sigmoid(x), {b, t});
}

void FusionGate::collect(NamedParams& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(out, prefix + ".conv" + std::to_string(i));
}

// -------------------------------------------------------------------- model

DecafModel::DecafModel(const DecafConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  validate(cfg_);
  nc::Rng enc_rng(nc::derive_seed(seed, {1}));
  encoder_ = EegEncoder(cfg_.encoder, enc_rng);
  if (cfg_.kind == ModelKind::decaf) {
    nc::Rng fc_rng(nc::derive_seed(seed, {2}));
    forecaster_ = Forecaster(cfg_.forecaster, fc_rng);
    nc::Rng gate_rng(nc::derive_seed(seed, {3}));
    gate_ = FusionGate(cfg_.gate, gate_rng);
  }
}

void DecafModel::check_eeg(const Tensor& eeg) const {
  if (!eeg.defined() || eeg.rank() != 3 || eeg.dim(1) != cfg_.window || eeg.dim(2) != cfg_.encoder.channels) {
    throw ContractError("eeg input must be [B, " + std::to_string(cfg_.window) + ", " +
                        std::to_string(cfg_.encoder.channels) + "], got " +
                        (eeg.defined() ? nc::to_string(eeg.shape()) : std::string("undefined")));
  }
  if (!nc::all_finite(eeg)) throw NumericalError("eeg input has non-finite samples");
}

void DecafModel::check_context(const Tensor& context) const {
  if (!context.defined() || context.rank() != 2 || context.dim(1) != cfg_.window) {
    throw ContractError("context must be [B, " + std::to_string(cfg_.window) + "], got " +
                        (context.defined() ? nc::to_string(context.shape()) : std::string("undefined")));
  }
  if (!nc::all_finite(context)) throw NumericalError("context has non-finite samples");
}

Tensor DecafModel::encode(const Tensor& eeg, const ForwardOptions& opt) const {
  check_eeg(eeg);
  return encoder_(eeg, opt);
}

Tensor DecafModel::forecast(const Tensor& context) const {
  if (cfg_.kind != ModelKind::decaf) throw ContractError("eeg_only model has no forecaster");
  check_context(context);
  return forecaster_(context);
}

Tensor DecafModel::fuse_gate(const Tensor& eeg_estimate, const Tensor& prior) const {
  if (cfg_.kind != ModelKind::decaf) throw ContractError("eeg_only model has no fusion gate");
  return gate_(eeg_estimate, prior);
}

DecafOutput DecafModel::forward(const Tensor& eeg, const Tensor& context, const ForwardOptions& opt) const {
  DecafOutput out;
  out.eeg_estimate = encode(eeg, opt);
  if (cfg_.kind == ModelKind::eeg_only) {
    out.fused = out.eeg_estimate;
    return out;
  }
  out.prior = forecast(context);
  if (out.prior.dim(0) != out.eeg_estimate.dim(0)) {
    throw ContractError("eeg and context batch sizes differ");
  }
  out.alpha = gate_(out.eeg_estimate, out.prior);
  out.fused = nc::convex_mix(out.alpha, out.eeg_estimate, out.prior);
  return out;
}

NamedParams DecafModel::parameters() const {
  NamedParams p;
  encoder_.collect(p, "encoder");
  if (cfg_.kind == ModelKind::decaf) {
    forecaster_.collect(p, "forecaster");
    gate_.collect(p, "gate");
  }
  return p;
}

std::vector<Tensor> DecafModel::parameter_tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : parameters()) out.push_back(t);
  return out;
}

Index DecafModel::param_count() const { return nc::count_params(parameters()); }

}  // namespace decaf::models
