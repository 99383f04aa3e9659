#include "decaf/eval/decode.hpp"

#include "decaf/error.hpp"
#include "decaf/numcore/ops.hpp"

#include <iostream>

namespace decaf::eval {

std::string to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::recursive: return "recursive";
    case DecodeMode::oracle: return "oracle";
    case DecodeMode::eeg_only: return "eeg_only";
    case DecodeMode::prior_only: return "prior_only";
  }
  return "?";
}

DecodeMode parse_mode(const std::string& s) {
  for (auto m : {DecodeMode::recursive, DecodeMode::oracle, DecodeMode::eeg_only, DecodeMode::prior_only}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + s + "'; valid modes: recursive, oracle, eeg_only, prior_only");
}

namespace {

std::vector<DecodedRecording> prepare(const std::vector<RecordingPtr>& recs, Index delay) {
  std::vector<DecodedRecording> out;
  for (const auto& r : recs) {
    DecodedRecording d;
    d.recording = r;
    try {
      d.windows = data::make_eval_sequence(r, data::kWindow, delay);
    } catch (const ContractError& e) {
      std::cerr << "warning: skipping " << r->subject_id << "/" << r->stimulus_id << ": " << e.what() << "\n";
      continue;
    }
    if (d.windows.empty()) continue;
    out.push_back(std::move(d));
  }
  return out;
}

void finish(DecodedRecording& d) {
  d.rho.clear();
  for (std::size_t n = 0; n < d.windows.size(); ++n) {
    d.rho.push_back(dsp::pearson(d.output[n], d.windows[n].target()));
  }
}

}  // namespace

std::vector<DecodedRecording> decode(const models::DecafModel& model, const std::vector<RecordingPtr>& recs,
                                     DecodeMode mode) {
  const auto& cfg = model.config();
  const bool has_prior = cfg.kind == models::ModelKind::decaf;
  if (!has_prior && mode != DecodeMode::eeg_only) {
    throw ContractError("mode " + to_string(mode) + " needs a forecaster; this model is eeg_only");
  }
  if (cfg.window != data::kWindow) throw ContractError("decode: model window must be 192");
  auto out = prepare(recs, data::kDelay);
  const Index t = cfg.window;
  const Index c = cfg.encoder.channels;
  std::size_t longest = 0;
  for (const auto& d : out) {
    if (d.recording->channels() != c) {
      throw DimensionError("decode: recording " + d.recording->subject_id + "/" + d.recording->stimulus_id +
                           " has " + std::to_string(d.recording->channels()) + " channels, model expects " +
                           std::to_string(c));
    }
    longest = std::max(longest, d.windows.size());
  }

  nc::NoGradScope no_grad;
  for (std::size_t n = 0; n < longest; ++n) {
    std::vector<DecodedRecording*> active;
    for (auto& d : out) {
      if (n < d.windows.size()) active.push_back(&d);
    }
    const Index b = static_cast<Index>(active.size());
    nc::Matrix eeg(b * t, c);
    nc::Matrix ctx = nc::Matrix::Zero(b, t);
    for (Index i = 0; i < b; ++i) {
      const auto& d = *active[static_cast<std::size_t>(i)];
      eeg.middleRows(i * t, t) = d.windows[n].eeg_window();
      if (n == 0) continue;  // cold start
      switch (mode) {
        case DecodeMode::recursive:
        case DecodeMode::prior_only: ctx.row(i) = d.output[n - 1].transpose(); break;
        case DecodeMode::oracle: ctx.row(i) = d.windows[n].context().transpose(); break;
        case DecodeMode::eeg_only: break;
      }
    }
    const nc::Tensor eeg_t = nc::Tensor::constant({b, t, c}, std::move(eeg));
    const nc::Tensor ctx_t = nc::Tensor::constant({b, t}, std::move(ctx));

    nc::Tensor out_t, eeg_est, prior, alpha;
    if (mode == DecodeMode::eeg_only) {
      eeg_est = model.encode(eeg_t);
      out_t = eeg_est;
    } else if (mode == DecodeMode::prior_only) {
      prior = model.forecast(ctx_t);
      out_t = prior;
    } else {
      auto f = model.forward(eeg_t, ctx_t);
      eeg_est = f.eeg_estimate;
      prior = f.prior;
      alpha = f.alpha;
      out_t = f.fused;
    }
    for (Index i = 0; i < b; ++i) {
      auto& d = *active[static_cast<std::size_t>(i)];
      d.output.push_back(out_t.value().row(i).transpose());
      if (eeg_est.defined()) d.eeg_estimate.push_back(eeg_est.value().row(i).transpose());
      if (prior.defined()) d.prior.push_back(prior.value().row(i).transpose());
      if (alpha.defined()) d.alpha.push_back(alpha.value().row(i).transpose());
    }
  }
  for (auto& d : out) finish(d);
  return out;
}

std::vector<DecodedRecording> decode(const models::MtrfModel& model, const std::vector<RecordingPtr>& recs) {
  auto out = prepare(recs, model.delay);
  for (auto& d : out) {
    const VectorXd y = model.predict(*d.recording);
    for (const auto& w : d.windows) d.output.push_back(y.segment(w.start, w.window_len));
    finish(d);
  }
  return out;
}

double mean_window_rho(const std::vector<DecodedRecording>& decoded) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& d : decoded) {
    for (double r : d.rho) total += r, ++count;
  }
  if (count == 0) throw ContractError("no decoded windows");
  return total / static_cast<double>(count);
}

}  // namespace decaf::eval
