#include "decaf/data/generator.hpp"

#include "decaf/error.hpp"
#include "decaf/io.hpp"
#include "decaf/numcore/rng.hpp"

#include <cmath>
#include <cstdio>

namespace decaf::data {

namespace {

// Seed-derivation tags, one per independent stream.
constexpr std::uint64_t kTagEnvelope = 1;
constexpr std::uint64_t kTagMixing = 2;
constexpr std::uint64_t kTagNoise = 3;

Index n_samples(const GeneratorConfig& cfg) {
  return static_cast<Index>(std::llround(cfg.duration_s * kSampleRate));
}

Index ms_to_samples(double ms) { return static_cast<Index>(std::llround(ms * kSampleRate / 1000.0)); }

void standardize(Eigen::Ref<VectorXd> x) {
  x.array() -= x.mean();
  const double sd = std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
  if (sd > 0.0) x /= sd;
}

}  // namespace

void validate(const GeneratorConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("data." + field + ": " + why);
  };
  if (cfg.n_subjects < 1) fail("n_subjects", "must be >= 1");
  if (cfg.channels < 1) fail("channels", "must be >= 1");
  if (!(cfg.duration_s > 0.0) || n_samples(cfg) < 2 * kWindow + kDelay) {
    fail("duration_s", "need duration_s * 64 >= 2*192 + 32 samples");
  }
  if (cfg.validation_stimuli < 0 || cfg.test_stimuli < 1) {
    fail("test_stimuli", "need test_stimuli >= 1 and validation_stimuli >= 0");
  }
  if (cfg.recordings_per_subject < cfg.validation_stimuli + cfg.test_stimuli + 1) {
    fail("recordings_per_subject", "must leave at least one training stimulus");
  }
  if (cfg.kernel_latencies_ms.empty()) fail("kernel_latencies_ms", "need at least one pathway");
  for (double l : cfg.kernel_latencies_ms) {
    if (!(l > 0.0)) fail("kernel_latencies_ms", "latencies must be positive");
  }
  if (!(cfg.kernel_span_ms > 0.0)) fail("kernel_span_ms", "must be positive");
  if (!(cfg.response_offset_ms >= 0.0)) fail("response_offset_ms", "must be >= 0");
  if (!(cfg.nonlinear_exponent > 0.0)) fail("nonlinear_exponent", "must be positive");
  if (cfg.nonlinear_pathway < 0 ||
      cfg.nonlinear_pathway >= static_cast<int>(cfg.kernel_latencies_ms.size())) {
    fail("nonlinear_pathway", "out of range");
  }
  if (!std::isfinite(cfg.eeg_snr_db)) fail("eeg_snr_db", "must be finite");
}

VectorXd synth_envelope(const GeneratorConfig& cfg, int stimulus) {
  const Index n = n_samples(cfg);
  nc::Rng rng(nc::derive_seed(cfg.seed, {kTagEnvelope, static_cast<std::uint64_t>(stimulus)}));
  VectorXd white(n);
  for (Index i = 0; i < n; ++i) white(i) = rng.normal();
  VectorXd e = dsp::butterworth_bandpass(white, 0.5, 8.0, 4, kSampleRate);
  standardize(e);
  // softplus, written to stay finite for large |x|
  e = e.unaryExpr([](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); });
  const double lo = e.minCoeff();
  const double span = e.maxCoeff() - lo;
  return span > 0.0 ? VectorXd((e.array() - lo) / span) : VectorXd::Zero(n);
}

VectorXd gamma_kernel(double latency_ms, double span_ms, double fs) {
  const Index len = static_cast<Index>(std::floor(span_ms * fs / 1000.0)) + 1;
  const double tau = latency_ms / 1000.0;
  VectorXd h(len);
  for (Index j = 0; j < len; ++j) {
    const double t = static_cast<double>(j) / fs;
    h(j) = (t / tau) * std::exp(1.0 - t / tau);
  }
  return h;
}

Eigen::MatrixXd mixing_matrix(const GeneratorConfig& cfg, int subject) {
  const Index c = cfg.channels;
  const Index k = static_cast<Index>(cfg.kernel_latencies_ms.size());
  nc::Rng rng(nc::derive_seed(cfg.seed, {kTagMixing, static_cast<std::uint64_t>(subject)}));
  Eigen::MatrixXd raw(c, k);
  for (Index i = 0; i < c; ++i) {
    for (Index j = 0; j < k; ++j) raw(i, j) = rng.normal();
  }
  // [1/4, 1/2, 1/4] across neighbouring channels, renormalized at the edges
  Eigen::MatrixXd m(c, k);
  for (Index i = 0; i < c; ++i) {
    double wsum = 0.5;
    Eigen::RowVectorXd acc = 0.5 * raw.row(i);
    if (i > 0) acc += 0.25 * raw.row(i - 1), wsum += 0.25;
    if (i + 1 < c) acc += 0.25 * raw.row(i + 1), wsum += 0.25;
    m.row(i) = acc / wsum;
  }
  return m;
}

Recording generate_recording(const GeneratorConfig& cfg, int subject, int stimulus) {
  validate(cfg);
  const Index n = n_samples(cfg);
  const Index k = static_cast<Index>(cfg.kernel_latencies_ms.size());
  const Index offset = ms_to_samples(cfg.response_offset_ms);

  Recording r;
  r.subject_id = subject_name(subject);
  r.stimulus_id = stimulus_name(stimulus);
  r.fs = kSampleRate;
  r.envelope = synth_envelope(cfg, stimulus);

  Eigen::MatrixXd pathways = Eigen::MatrixXd::Zero(n, k);
  for (Index p = 0; p < k; ++p) {
    VectorXd src = r.envelope;
    if (p == cfg.nonlinear_pathway && cfg.nonlinear_exponent != 1.0) {
      src = src.array().pow(cfg.nonlinear_exponent);
    }
    const VectorXd h = gamma_kernel(cfg.kernel_latencies_ms[static_cast<std::size_t>(p)],
                                    cfg.kernel_span_ms);
    for (Index t = offset; t < n; ++t) {
      double acc = 0.0;
      const Index jmax = std::min<Index>(h.size() - 1, t - offset);
      for (Index j = 0; j <= jmax; ++j) acc += h(j) * src(t - offset - j);
      pathways(t, p) = acc;
    }
    standardize(pathways.col(p));
  }

  r.eeg = pathways * mixing_matrix(cfg, subject).transpose();
  if (cfg.eeg_noise) {
    nc::Rng rng(nc::derive_seed(
        cfg.seed, {kTagNoise, static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(stimulus)}));
    const double ratio = std::pow(10.0, -cfg.eeg_snr_db / 20.0);
    for (Index c = 0; c < r.eeg.cols(); ++c) {
      const double rms = std::sqrt(r.eeg.col(c).squaredNorm() / static_cast<double>(n));
      r.eeg.col(c) += (rms * ratio) * dsp::pink_noise(n, rng);
    }
  }
  quantize_to_f32(r);
  return r;
}

Split stimulus_split(const GeneratorConfig& cfg, int stimulus) {
  const int r = cfg.recordings_per_subject;
  if (stimulus >= r - cfg.test_stimuli) return Split::test;
  if (stimulus >= r - cfg.test_stimuli - cfg.validation_stimuli) return Split::validation;
  return Split::train;
}

DatasetSplit generate_synthetic_dataset(const GeneratorConfig& cfg) {
  validate(cfg);
  DatasetSplit d;
  for (int s = 0; s < cfg.n_subjects; ++s) {
    for (int r = 0; r < cfg.recordings_per_subject; ++r) {
      d[stimulus_split(cfg, r)].push_back(std::make_shared<Recording>(generate_recording(cfg, s, r)));
    }
  }
  check_disjoint(d);
  return d;
}

std::string subject_name(int subject) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub%02d", subject);
  return buf;
}

std::string stimulus_name(int stimulus) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "stim%02d", stimulus);
  return buf;
}

std::filesystem::path write_dataset(const DatasetSplit& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (Split s : {Split::train, Split::validation, Split::test}) {
    for (const auto& r : d[s]) {
      const std::string stem = r->subject_id + "_" + r->stimulus_id;
      ManifestEntry e{r->subject_id, r->stimulus_id, stem + "_eeg.env1", stem + "_env.env1", s};
      write_recording(*r, dir / e.eeg_path, dir / e.env_path);
      entries.push_back(std::move(e));
    }
  }
  const auto manifest = dir / "manifest.csv";
  io::atomic_write(manifest, format_manifest(entries));
  return manifest;
}

}  // namespace decaf::data
