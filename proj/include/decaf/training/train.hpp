#pragma once

#include "decaf/data/recording.hpp"
#include "decaf/models/decaf.hpp"
#include "decaf/models/mtrf.hpp"
#include "decaf/numcore/optim.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace decaf::training {

using data::Index;
using nc::Tensor;

struct LossWeights {
  double l1 = 1.0;
  double pearson = 0.2;
};

/// l1 * mean|pred - target| - pearson * mean_b rho(pred_b, target_b), both [B, T].
Tensor hybrid_loss(const Tensor& pred, const Tensor& target, const LossWeights& w = {});

enum class ContextRegime { teacher_forcing, scheduled_sampling, oracle };

std::string to_string(ContextRegime r);
ContextRegime parse_regime(const std::string& s);

struct TrainConfig {
  int epochs = 10;
  Index batch = 64;
  int patience = 3;
  nc::LrSchedule schedule = nc::NoamRate{};
  ContextRegime regime = ContextRegime::teacher_forcing;
  double p_end = 0.5;  // scheduled sampling, final epoch
  LossWeights loss;
  double clip_norm = 5.0;
  Index hop = data::kHop;
  bool shuffle = true;
  std::uint64_t seed = 0;
};

/// Throws ConfigError naming the offending field.
void validate(const TrainConfig& cfg);

/// Linear ramp: 0 at epoch 1, p_end at the final epoch (1-based epochs).
double sampling_probability(int epoch, int epochs, double p_end);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_rho = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; 0 before any epoch
  double best_val_rho = 0.0;
  bool stopped_early = false;

  /// Header "epoch,train_loss,val_rho,lr", one row per epoch.
  std::string to_csv() const;
};

/// Tracks the best validation score; strict improvement resets the counter.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Returns true when this epoch improved on the best so far.
  bool observe(int epoch, double val_rho);
  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_ = 0.0;
  int since_best_ = 0;
};

struct TrainHooks {
  /// Replaces the built-in validation (mean window rho of recursive or, for
  /// the oracle regime, oracle decoding).
  std::function<double(const models::DecafModel&, int epoch)> validate;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch Adam with clipping, per-epoch validation and early stopping.
/// The model ends up holding the parameters of the best epoch.
TrainHistory train(models::DecafModel& model, const data::DatasetSplit& split, const TrainConfig& cfg,
                   const TrainHooks& hooks = {});

/// Same loop over an explicit window list (used for overfitting checks).
TrainHistory train_on_windows(models::DecafModel& model, const std::vector<data::WindowPair>& windows,
                              const std::vector<data::RecordingPtr>& validation, const TrainConfig& cfg,
                              const TrainHooks& hooks = {});

models::MtrfFit train_baseline_mtrf(const data::DatasetSplit& split,
                                    const std::vector<double>& lambdas = models::default_lambda_grid());

}  // namespace decaf::training
