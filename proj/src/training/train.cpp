#include "decaf/training/train.hpp"

#include "decaf/error.hpp"
#include "decaf/eval/decode.hpp"
#include "decaf/numcore/ops.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace decaf::training {

namespace {

// Seed-derivation tags for the training streams.
constexpr std::uint64_t kTagShuffle = 10;
constexpr std::uint64_t kTagSampling = 11;
constexpr std::uint64_t kTagDropout = 12;

}  // namespace

Tensor hybrid_loss(const Tensor& pred, const Tensor& target, const LossWeights& w) {
  if (!pred.defined() || !target.defined() || pred.shape() != target.shape() || pred.rank() != 2) {
    throw ContractError("hybrid_loss: need matching [B, T] tensors, got " +
                        (pred.defined() ? nc::to_string(pred.shape()) : std::string("undefined")) + " and " +
                        (target.defined() ? nc::to_string(target.shape()) : std::string("undefined")));
  }
  if (!(w.l1 >= 0.0) || !(w.pearson >= 0.0)) throw ConfigError("loss weights must be >= 0");
  Tensor loss = nc::scale(nc::mean(nc::abs(nc::sub(pred, target))), w.l1);
  if (w.pearson != 0.0) loss = nc::sub(loss, nc::scale(nc::mean(nc::pearson_rows(pred, target)), w.pearson));
  return loss;
}

std::string to_string(ContextRegime r) {
  switch (r) {
    case ContextRegime::teacher_forcing: return "teacher_forcing";
    case ContextRegime::scheduled_sampling: return "scheduled_sampling";
    case ContextRegime::oracle: return "oracle";
  }
  return "?";
}

ContextRegime parse_regime(const std::string& s) {
  for (auto r : {ContextRegime::teacher_forcing, ContextRegime::scheduled_sampling, ContextRegime::oracle}) {
    if (s == to_string(r)) return r;
  }
  throw ConfigError("train.regime: unknown '" + s + "'; valid: teacher_forcing, scheduled_sampling, oracle");
}

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("train." + field + ": " + why);
  };
  if (cfg.epochs < 1) fail("epochs", "must be >= 1");
  if (cfg.batch < 1) fail("batch", "must be >= 1");
  if (cfg.patience < 0 || cfg.patience >= cfg.epochs) fail("patience", "must satisfy 0 <= patience < epochs");
  if (!(cfg.p_end >= 0.0 && cfg.p_end <= 1.0)) fail("p_end", "must be in [0, 1]");
  if (!(cfg.clip_norm > 0.0)) fail("clip_norm", "must be > 0");
  if (cfg.hop < 1) fail("hop", "must be >= 1");
  if (!(cfg.loss.l1 >= 0.0)) fail("lambda_l1", "must be >= 0");
  if (!(cfg.loss.pearson >= 0.0)) fail("lambda_pearson", "must be >= 0");
  if (const auto* n = std::get_if<nc::NoamRate>(&cfg.schedule)) {
    if (!(n->d_model > 0.0) || !(n->warmup_steps > 0.0) || !(n->factor > 0.0)) {
      fail("schedule", "Noam parameters must be > 0");
    }
  } else if (!(std::get<nc::StaticRate>(cfg.schedule).rate > 0.0)) {
    fail("lr", "must be > 0");
  }
}

double sampling_probability(int epoch, int epochs, double p_end) {
  if (epoch < 1 || epoch > epochs) throw ContractError("sampling_probability: epoch out of range");
  if (epochs == 1) return 0.0;
  if (epoch == epochs) return p_end;
  return p_end * static_cast<double>(epoch - 1) / static_cast<double>(epochs - 1);
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_rho,lr\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g\n", e.epoch, e.train_loss, e.val_rho, e.lr);
    out += buf;
  }
  return out;
}

bool EarlyStopping::observe(int epoch, double val_rho) {
  if (best_epoch_ == 0 || val_rho > best_) {
    best_ = val_rho;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

namespace {

struct Batch {
  nc::Tensor eeg, context, target;
};

// Previous-window pair used by scheduled sampling.
data::WindowPair previous(const data::WindowPair& w) {
  data::WindowPair p = w;
  p.start = w.start - w.window_len;
  p.is_first_window = p.start < p.window_len;
  return p;
}

Batch assemble(const std::vector<const data::WindowPair*>& items, Index t, Index c, bool with_context) {
  const Index b = static_cast<Index>(items.size());
  nc::Matrix eeg(b * t, c);
  nc::Matrix ctx(b, t);
  nc::Matrix tgt(b, t);
  for (Index i = 0; i < b; ++i) {
    const auto& w = *items[static_cast<std::size_t>(i)];
    eeg.middleRows(i * t, t) = w.eeg_window();
    tgt.row(i) = w.target().transpose();
    if (with_context) ctx.row(i) = w.context().transpose();
  }
  Batch out;
  out.eeg = nc::Tensor::constant({b, t, c}, std::move(eeg));
  if (with_context) out.context = nc::Tensor::constant({b, t}, std::move(ctx));
  out.target = nc::Tensor::constant({b, t}, std::move(tgt));
  return out;
}

std::string parameter_report(const models::DecafModel& model) {
  double total = 0.0;
  double worst = -1.0;
  std::string worst_name;
  bool finite = true;
  for (const auto& [name, p] : model.parameters()) {
    const double n = p.value().norm();
    if (!std::isfinite(n)) finite = false;
    total += n * n;
    if (!(n <= worst)) worst = n, worst_name = name;
  }
  std::ostringstream s;
  s << "parameter norm " << std::sqrt(total) << (finite ? "" : " (non-finite)") << ", largest tensor "
    << worst_name << " norm " << worst;
  return s.str();
}

double default_validation(const models::DecafModel& model, const std::vector<data::RecordingPtr>& validation,
                          ContextRegime regime) {
  eval::DecodeMode mode = eval::DecodeMode::recursive;
  if (model.config().kind == models::ModelKind::eeg_only) {
    mode = eval::DecodeMode::eeg_only;
  } else if (regime == ContextRegime::oracle) {
    mode = eval::DecodeMode::oracle;
  }
  return eval::mean_window_rho(eval::decode(model, validation, mode));
}

}  // namespace

TrainHistory train_on_windows(models::DecafModel& model, const std::vector<data::WindowPair>& windows,
                              const std::vector<data::RecordingPtr>& validation, const TrainConfig& cfg,
                              const TrainHooks& hooks) {
  validate(cfg);
  if (windows.empty()) throw ContractError("train: no training windows");
  if (validation.empty() && !hooks.validate) throw ContractError("train: empty validation split");
  const bool decaf = model.config().kind == models::ModelKind::decaf;
  const Index t = model.config().window;
  const Index c = model.config().encoder.channels;
  for (const auto& w : windows) {
    if (w.window_len != t || w.recording->channels() != c) {
      throw DimensionError("train: window shape does not match the model");
    }
  }

  auto params = model.parameter_tensors();
  nc::AdamState adam;
  std::int64_t step = 0;
  nc::Rng sampling_rng(nc::derive_seed(cfg.seed, {kTagSampling}));
  nc::Rng dropout_rng(nc::derive_seed(cfg.seed, {kTagDropout}));
  models::ForwardOptions train_opt{true, &dropout_rng};

  EarlyStopping stopper(cfg.patience);
  std::vector<nc::Matrix> best_values;
  TrainHistory history;

  std::vector<std::size_t> order(windows.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (cfg.shuffle) {
      nc::Rng rng(nc::derive_seed(cfg.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)}));
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    }
    const double p_sample = cfg.regime == ContextRegime::scheduled_sampling
                                ? sampling_probability(epoch, cfg.epochs, cfg.p_end)
                                : 0.0;

    double loss_sum = 0.0;
    double lr = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(cfg.batch));
      std::vector<const data::WindowPair*> items;
      for (std::size_t k = first; k < last; ++k) items.push_back(&windows[order[k]]);
      Batch batch = assemble(items, t, c, decaf);

      if (decaf && p_sample > 0.0) {
        // Replace sampled contexts by the model's own output for the previous window.
        std::vector<std::size_t> rows;
        std::vector<data::WindowPair> prev;
        for (std::size_t k = 0; k < items.size(); ++k) {
          if (items[k]->start >= t && sampling_rng.uniform() < p_sample) {
            rows.push_back(k);
            prev.push_back(previous(*items[k]));
          }
        }
        if (!rows.empty()) {
          std::vector<const data::WindowPair*> prev_ptr;
          for (const auto& p : prev) prev_ptr.push_back(&p);
          Batch pb = assemble(prev_ptr, t, c, true);
          nc::NoGradScope no_grad;
          const nc::Matrix own = model.forward(pb.eeg, pb.context).fused.value();
          for (std::size_t j = 0; j < rows.size(); ++j) {
            batch.context.mutable_value().row(static_cast<Index>(rows[j])) = own.row(static_cast<Index>(j));
          }
        }
      }

      ++step;
      lr = nc::schedule_rate(cfg.schedule, step);
      double loss_value = 0.0;
      {
        nc::Tape tape;
        nc::TapeScope scope(tape);
        auto out = model.forward(batch.eeg, batch.context, train_opt);
        Tensor loss = hybrid_loss(out.fused, batch.target, cfg.loss);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch_index + 1) + "; " + parameter_report(model));
        }
        tape.backward(loss);
      }
      nc::clip_grad_norm(params, cfg.clip_norm);
      nc::adam_step(params, adam, lr);
      for (auto& p : params) p.zero_grad();
      loss_sum += loss_value * static_cast<double>(items.size());
      ++batch_index;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(windows.size());
    rec.val_rho = hooks.validate ? hooks.validate(model, epoch)
                                 : default_validation(model, validation, cfg.regime);
    rec.lr = lr;
    if (!std::isfinite(rec.val_rho)) {
      throw NumericalError("non-finite validation rho at epoch " + std::to_string(epoch) + "; " +
                           parameter_report(model));
    }
    history.epochs.push_back(rec);
    if (stopper.observe(epoch, rec.val_rho)) {
      best_values.clear();
      for (const auto& p : params) best_values.push_back(p.value());
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stopper.should_stop() && epoch < cfg.epochs) {
      history.stopped_early = true;
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = best_values[i];
  history.best_epoch = stopper.best_epoch();
  history.best_val_rho = stopper.best();
  return history;
}

TrainHistory train(models::DecafModel& model, const data::DatasetSplit& split, const TrainConfig& cfg,
                   const TrainHooks& hooks) {
  if (split.train.empty()) throw ContractError("train: empty training split");
  if (split.validation.empty()) throw ContractError("train: empty validation split");
  validate(cfg);
  std::vector<data::WindowPair> windows;
  for (const auto& r : split.train) {
    auto w = data::make_training_windows(r, model.config().window, cfg.hop, data::kDelay);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  return train_on_windows(model, windows, split.validation, cfg, hooks);
}

models::MtrfFit train_baseline_mtrf(const data::DatasetSplit& split, const std::vector<double>& lambdas) {
  if (split.train.empty()) throw ContractError("train_baseline_mtrf: empty training split");
  models::MtrfConfig cfg;
  cfg.lambdas = lambdas;
  return models::mtrf_fit(split.train, split.validation, cfg);
}

}  // namespace decaf::training
