#pragma once

#include "decaf/data/generator.hpp"
#include "decaf/eval/analysis.hpp"
#include "decaf/models/decaf.hpp"
#include "decaf/training/train.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace decaf::cli {

/// Parsed run configuration. Text format:
///
///   seed = 7            # required, top level
///   [data]   generator settings
///   [model]  preset (toy | full) plus per-field overrides
///   [train]  optimiser, schedule, context regime, mTRF lambda grid
///   [eval]   noise sweep grid and seeds
///
/// '#' and ';' start comments; unknown sections or keys are errors.
struct RunConfig {
  std::uint64_t seed = 0;
  data::GeneratorConfig data;
  std::string model_preset = "toy";
  models::DecafConfig model;  // preset plus overrides; channels follow data.channels
  training::TrainConfig train;  // schedule assembled from the three fields below
  std::string schedule = "static";
  double lr = 1e-3;
  nc::NoamRate noam{64.0, 100.0, 0.1};
  std::vector<double> mtrf_lambdas = models::default_lambda_grid();
  eval::SweepConfig sweep;
};

/// Throws ConfigError naming the section.key (or "seed") at fault.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text listing every key with its resolved value; parsing it
/// back yields the same configuration.
std::string format_config(const RunConfig& c);

/// Documented defaults (seed 0) in the same format.
std::string default_config_text();

// Seed streams derived from the master seed.
std::uint64_t data_seed(std::uint64_t master);
std::uint64_t init_seed(std::uint64_t master, models::ModelKind kind);
std::uint64_t train_seed(std::uint64_t master, models::ModelKind kind);
std::uint64_t sweep_seed(std::uint64_t master);

}  // namespace decaf::cli
