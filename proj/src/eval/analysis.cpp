#include "decaf/eval/analysis.hpp"

#include "decaf/error.hpp"
#include "decaf/eval/score.hpp"
#include "decaf/eval/svg.hpp"

#include <cmath>
#include <cstdio>

namespace decaf::eval {

NamedDecoder decaf_decoder(std::string name, const models::DecafModel& model, DecodeMode mode) {
  return {std::move(name), [&model, mode](const std::vector<RecordingPtr>& recs) { return decode(model, recs, mode); }};
}

NamedDecoder mtrf_decoder(std::string name, const models::MtrfModel& model) {
  return {std::move(name), [&model](const std::vector<RecordingPtr>& recs) { return decode(model, recs); }};
}

std::vector<RecordingPtr> with_noise(const std::vector<RecordingPtr>& recs, double snr_db, std::uint64_t seed) {
  std::vector<RecordingPtr> out;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto r = std::make_shared<data::Recording>(*recs[i]);
    nc::Rng rng(nc::derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    r->eeg = dsp::add_noise_at_snr(r->eeg, snr_db, rng);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

double grand_mean(const NamedDecoder& d, const std::vector<RecordingPtr>& recs) {
  return score_subjects(d.name, 0, d.run(recs)).mean;
}

}  // namespace

SweepTable noise_sweep(const std::vector<NamedDecoder>& decoders, const std::vector<RecordingPtr>& recs,
                       const SweepConfig& cfg) {
  if (decoders.empty()) throw ContractError("noise_sweep: no models");
  if (cfg.seeds < 1) throw ConfigError("eval.noise_seeds: must be >= 1");
  if (cfg.snr_db.empty()) throw ConfigError("eval.snr_db: empty grid");
  SweepTable t;
  t.snr_db = cfg.snr_db;
  if (cfg.control) t.snr_db.push_back(100.0);
  t.seeds = cfg.seeds;
  const Index m = static_cast<Index>(decoders.size());
  const Index s = static_cast<Index>(t.snr_db.size());
  for (const auto& d : decoders) {
    t.models.push_back(d.name);
    t.clean.push_back(grand_mean(d, recs));
  }
  // per (model, snr) sums over seeds
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m, s), sum2 = Eigen::MatrixXd::Zero(m, s);
  for (Index j = 0; j < s; ++j) {
    for (int k = 0; k < cfg.seeds; ++k) {
      const auto noisy = with_noise(
          recs, t.snr_db[static_cast<std::size_t>(j)],
          nc::derive_seed(cfg.seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j)}));
      for (Index i = 0; i < m; ++i) {
        const double v = grand_mean(decoders[static_cast<std::size_t>(i)], noisy);
        sum(i, j) += v;
        sum2(i, j) += v * v;
      }
    }
  }
  const double n = cfg.seeds;
  t.mean = sum / n;
  t.sd = Eigen::MatrixXd::Zero(m, s);
  if (cfg.seeds > 1) {
    t.sd = ((sum2 - sum.cwiseProduct(sum) / n) / (n - 1.0)).cwiseMax(0.0).cwiseSqrt();
  }
  return t;
}

std::string sweep_csv(const SweepTable& t) {
  std::string out = "snr_db,model,rho_mean,rho_sd,seeds\n";
  char buf[256];
  for (std::size_t i = 0; i < t.models.size(); ++i) {
    std::snprintf(buf, sizeof buf, "clean,%s,%.6f,0.000000,0\n", t.models[i].c_str(), t.clean[i]);
    out += buf;
    for (std::size_t j = 0; j < t.snr_db.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%g,%s,%.6f,%.6f,%d\n", t.snr_db[j], t.models[i].c_str(),
                    t.mean(static_cast<Index>(i), static_cast<Index>(j)),
                    t.sd(static_cast<Index>(i), static_cast<Index>(j)), t.seeds);
      out += buf;
    }
  }
  return out;
}

std::string sweep_svg(const SweepTable& t) {
  std::vector<Series> series;
  for (std::size_t i = 0; i < t.models.size(); ++i) {
    Series s{t.models[i], {}, {}};
    for (std::size_t j = 0; j < t.snr_db.size(); ++j) {
      if (t.snr_db[j] >= 100.0) continue;
      s.x.push_back(t.snr_db[j]);
      s.y.push_back(t.mean(static_cast<Index>(i), static_cast<Index>(j)));
    }
    series.push_back(std::move(s));
  }
  return line_chart("Decoding under additive white noise", "EEG SNR (dB)", "mean Pearson rho", series);
}

PsdReport psd_report(const models::DecafModel& model, const std::vector<RecordingPtr>& recs, DecodeMode mode) {
  if (model.config().kind != models::ModelKind::decaf) throw ContractError("psd_report: needs a fused model");
  if (mode != DecodeMode::recursive && mode != DecodeMode::oracle) {
    throw ContractError("psd_report: mode must be recursive or oracle");
  }
  const auto decoded = decode(model, recs, mode);
  std::size_t windows = 0;
  for (const auto& d : decoded) windows += d.windows.size();
  if (windows == 0) throw ContractError("psd_report: no decodable windows");
  const Index t = model.config().window;
  VectorXd truth(static_cast<Index>(windows) * t), eeg(truth.size()), prior(truth.size()), fused(truth.size());
  Index at = 0;
  for (const auto& d : decoded) {
    for (std::size_t n = 0; n < d.windows.size(); ++n, at += t) {
      truth.segment(at, t) = d.windows[n].target();
      eeg.segment(at, t) = d.eeg_estimate[n];
      prior.segment(at, t) = d.prior[n];
      fused.segment(at, t) = d.output[n];
    }
  }
  return {dsp::welch_psd(truth), dsp::welch_psd(eeg), dsp::welch_psd(prior), dsp::welch_psd(fused)};
}

std::string psd_csv(const PsdReport& r) {
  std::string out = "freq_hz,truth_db,eeg_db,prior_db,fused_db\n";
  const VectorXd a = r.truth.power_db(), b = r.eeg.power_db(), c = r.prior.power_db(), d = r.fused.power_db();
  char buf[160];
  for (Index i = 0; i < r.truth.freqs_hz.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.2f,%.4f,%.4f,%.4f,%.4f\n", r.truth.freqs_hz(i), a(i), b(i), c(i), d(i));
    out += buf;
  }
  return out;
}

std::string psd_svg(const PsdReport& r) {
  auto series = [](const std::string& name, const dsp::PsdEstimate& p) {
    const VectorXd db = p.power_db();
    return Series{name, std::vector<double>(p.freqs_hz.begin(), p.freqs_hz.end()),
                  std::vector<double>(db.begin(), db.end())};
  };
  return line_chart("Envelope spectra by branch", "frequency (Hz)", "power (dB)",
                    {series("ground truth", r.truth), series("EEG branch", r.eeg),
                     series("prior branch", r.prior), series("fused", r.fused)});
}

}  // namespace decaf::eval
