#include "decaf/cli/commands.hpp"

#include "decaf/cli/config.hpp"
#include "decaf/data/container.hpp"
#include "decaf/error.hpp"
#include "decaf/eval/analysis.hpp"
#include "decaf/eval/score.hpp"
#include "decaf/io.hpp"
#include "decaf/models/checkpoint.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>

namespace decaf::cli {

namespace fs = std::filesystem;

namespace {

struct Loaded {
  std::string path;
  std::string kind;  // mtrf | eeg_only | decaf
  std::optional<models::DecafModel> net;
  std::optional<models::MtrfModel> mtrf;
  models::Json metrics;
  long long params = 0;
};

Loaded load_model(const std::string& path) {
  models::Checkpoint c;
  try {
    c = models::load_checkpoint(path);
  } catch (const FormatError& e) {
    const std::string what = e.what();
    throw FormatError(what.rfind(path, 0) == 0 ? what : path + ": " + what);
  }
  Loaded l;
  l.path = path;
  l.kind = c.header.value("kind", "");
  l.metrics = c.header.value("metrics", models::Json::object());
  l.params = static_cast<long long>(models::checkpoint_param_count(c));
  try {
    if (l.kind == "mtrf") {
      l.mtrf = models::mtrf_from_checkpoint(c);
    } else {
      l.net.emplace(models::decaf_from_checkpoint(c));
    }
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return l;
}

data::Index channels_of(const Loaded& l) {
  return l.mtrf ? l.mtrf->channels : l.net->config().encoder.channels;
}

void check_channels(const Loaded& l, const std::vector<data::RecordingPtr>& recs) {
  for (const auto& r : recs) {
    if (r->channels() != channels_of(l)) {
      throw DimensionError(l.path + " expects " + std::to_string(channels_of(l)) + " channels but recording " +
                           r->subject_id + "/" + r->stimulus_id + " has " + std::to_string(r->channels()));
    }
  }
}

std::string mode_label(eval::DecodeMode m) {
  switch (m) {
    case eval::DecodeMode::recursive: return "decaf";
    case eval::DecodeMode::oracle: return "decaf_oracle";
    case eval::DecodeMode::eeg_only: return "decaf_eeg_branch";
    case eval::DecodeMode::prior_only: return "decaf_prior_branch";
  }
  return "?";
}

void warn_regime(const Loaded& l, eval::DecodeMode mode, std::ostream& err) {
  const std::string regime = l.metrics.value("regime", "");
  if (mode == eval::DecodeMode::oracle && regime == "scheduled_sampling") {
    err << "warning: " << l.path << " was trained with scheduled_sampling; oracle evaluation is an upper bound "
        << "it was not trained for\n";
  }
  if (mode == eval::DecodeMode::recursive && regime == "oracle") {
    err << "warning: " << l.path << " was trained for oracle evaluation; decoding recursively\n";
  }
}

// One report row per (model, mode) pair; names are made unique in order.
struct Row {
  std::string name;
  const Loaded* model;
  eval::DecodeMode mode;
};

std::vector<Row> rows_for(const std::vector<Loaded>& models, const std::vector<eval::DecodeMode>& decaf_modes,
                          std::ostream& err) {
  std::vector<Row> rows;
  std::map<std::string, int> used;
  auto add = [&](std::string name, const Loaded& m, eval::DecodeMode mode) {
    const int k = ++used[name];
    if (k > 1) name += "_" + std::to_string(k);
    rows.push_back({name, &m, mode});
  };
  for (const auto& m : models) {
    if (m.kind == "mtrf") {
      add("mtrf", m, eval::DecodeMode::recursive);
    } else if (m.kind == "eeg_only") {
      if (decaf_modes.size() == 1 && decaf_modes[0] != eval::DecodeMode::eeg_only) {
        err << "warning: " << m.path << " has no forecaster; decoding with its encoder only\n";
      }
      add("eeg_only", m, eval::DecodeMode::eeg_only);
    } else {
      for (auto mode : decaf_modes) {
        warn_regime(m, mode, err);
        add(mode_label(mode), m, mode);
      }
    }
  }
  return rows;
}

eval::NamedDecoder decoder_of(const Row& r) {
  if (r.model->mtrf) return eval::mtrf_decoder(r.name, *r.model->mtrf);
  return eval::decaf_decoder(r.name, *r.model->net, r.mode);
}

std::vector<Loaded> load_models(const std::vector<std::string>& paths,
                                const std::vector<data::RecordingPtr>& recs) {
  std::vector<Loaded> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    out.push_back(load_model(p));
    check_channels(out.back(), recs);
  }
  return out;
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create output directory " + dir.string() + ": " + ec.message());
}

eval::EvalReport score_rows(const std::vector<Row>& rows, const std::vector<data::RecordingPtr>& recs) {
  std::vector<eval::ModelScores> scores;
  for (const auto& r : rows) {
    scores.push_back(eval::score_subjects(r.name, r.model->params, decoder_of(r).run(recs)));
  }
  return eval::make_report(std::move(scores), "mtrf");
}

void write_report(const fs::path& out_dir, const eval::EvalReport& report, std::ostream& out) {
  prepare_out_dir(out_dir);
  io::atomic_write(out_dir / "report.csv", eval::report_csv(report));
  io::atomic_write(out_dir / "stats.csv", eval::stats_csv(report));
  const std::string table = eval::report_table(report);
  io::atomic_write(out_dir / "report.txt", table);
  out << table;
  for (const auto& c : report.comparisons) {
    if (!c.stats) continue;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s vs %s: n = %zu, p = %.4g, d = %.2f\n", c.model_a.c_str(),
                  c.model_b.c_str(), c.stats->n, c.stats->p_value, c.stats->cohens_d);
    out << buf;
  }
}

data::Split split_of(const std::string& s) {
  try {
    return data::parse_split(s);
  } catch (const std::exception&) {
    throw ConfigError("--split: unknown '" + s + "'; valid: train, validation, test");
  }
}

std::vector<data::RecordingPtr> split_recordings(const std::string& manifest, const std::string& split) {
  const auto which = split_of(split);
  auto d = data::load_dataset(manifest);
  auto recs = d[which];
  if (recs.empty()) throw FormatError(manifest + ": the " + split + " split is empty");
  return recs;
}

// ---- commands -------------------------------------------------------------

void cmd_gen_data(const std::string& config, const std::string& out_dir, bool force, std::ostream& out) {
  const RunConfig cfg = load_config(config);
  const fs::path dir(out_dir);
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError("--out: " + out_dir + " is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ConfigError("--out: " + out_dir + " is not empty; pass --force to overwrite");
    fs::remove_all(dir);
  }
  prepare_out_dir(dir);
  io::atomic_write(dir / "config.ini", format_config(cfg));
  const auto d = data::generate_synthetic_dataset(cfg.data);
  const auto manifest = data::write_dataset(d, dir);
  out << "wrote " << d.train.size() + d.validation.size() + d.test.size() << " recordings; manifest "
      << manifest.string() << "\n";
}

void cmd_train(const std::string& config, const std::string& manifest, const std::string& kind,
               const std::string& out_dir, bool force, std::ostream& out) {
  if (kind != "mtrf" && kind != "eeg_only" && kind != "decaf") {
    throw ConfigError("--model: unknown '" + kind + "'; valid: mtrf, eeg_only, decaf");
  }
  const RunConfig cfg = load_config(config);
  const auto d = data::load_dataset(manifest);
  if (d.train.empty() || d.validation.empty()) {
    throw FormatError(manifest + ": training needs non-empty train and validation splits");
  }
  const fs::path dir(out_dir);
  const fs::path best = dir / "best.dck";
  if (fs::exists(best) && !force) {
    throw ConfigError("--out: " + out_dir + " already holds a checkpoint; pass --force to replace it");
  }
  prepare_out_dir(dir);
  io::atomic_write(dir / "config.ini", format_config(cfg));

  if (kind == "mtrf") {
    const auto fit = training::train_baseline_mtrf(d, cfg.mtrf_lambdas);
    std::string csv = "lambda,val_rho\n";
    char buf[96];
    for (std::size_t i = 0; i < fit.lambdas.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%g,%.6f\n", fit.lambdas[i], fit.validation_rho[i]);
      csv += buf;
    }
    io::atomic_write(dir / "lambda_search.csv", csv);
    models::Json metrics{{"lambda", fit.model.lambda}, {"val_rho", fit.validation_rho[fit.chosen]}};
    models::save_checkpoint(best, models::make_checkpoint(fit.model, metrics));
    out << "mtrf: lambda " << fit.model.lambda << ", validation rho " << fit.validation_rho[fit.chosen] << ", "
        << fit.model.param_count() << " parameters\n";
    return;
  }

  models::DecafConfig mc = cfg.model;
  mc.kind = models::parse_model_kind(kind);
  mc.encoder.channels = d.train.front()->channels();
  models::validate(mc);
  models::DecafModel model(mc, init_seed(cfg.seed, mc.kind));
  training::TrainConfig tc = cfg.train;
  tc.seed = train_seed(cfg.seed, mc.kind);

  training::TrainHistory partial;
  training::TrainHooks hooks;
  hooks.on_epoch = [&](const training::EpochRecord& e) {
    partial.epochs.push_back(e);
    io::atomic_write(dir / "history.csv", partial.to_csv());
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d  loss %.5f  val_rho %.4f  lr %.3g\n", e.epoch, e.train_loss, e.val_rho,
                  e.lr);
    out << buf << std::flush;
  };
  out << kind << ": " << model.param_count() << " parameters, " << d.train.size() << " training recordings\n";
  const auto h = training::train(model, d, tc, hooks);
  io::atomic_write(dir / "history.csv", h.to_csv());
  models::Json metrics{{"best_epoch", h.best_epoch},
                       {"val_rho", h.best_val_rho},
                       {"epochs_run", static_cast<int>(h.epochs.size())},
                       {"stopped_early", h.stopped_early},
                       {"regime", training::to_string(tc.regime)}};
  models::save_checkpoint(best, models::make_checkpoint(model, h.best_epoch, metrics));
  out << "best epoch " << h.best_epoch << ", validation rho " << h.best_val_rho << "\n";
}

void cmd_eval(const std::vector<std::string>& checkpoints, const std::string& manifest, const std::string& mode,
              const std::string& split, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const auto m = eval::parse_mode(mode);
  const auto recs = split_recordings(manifest, split);
  const auto models = load_models(checkpoints, recs);
  write_report(out_dir, score_rows(rows_for(models, {m}, err), recs), out);
}

void cmd_report(const std::vector<std::string>& checkpoints, const std::string& manifest, const std::string& split,
                const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const auto recs = split_recordings(manifest, split);
  const auto models = load_models(checkpoints, recs);
  const std::vector<eval::DecodeMode> all{eval::DecodeMode::recursive, eval::DecodeMode::oracle,
                                          eval::DecodeMode::eeg_only, eval::DecodeMode::prior_only};
  write_report(out_dir, score_rows(rows_for(models, all, err), recs), out);
}

void cmd_noise_sweep(const std::string& config, const std::vector<std::string>& checkpoints,
                     const std::string& manifest, const std::string& mode, const std::string& split,
                     const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(config);
  const auto m = eval::parse_mode(mode);
  const auto recs = split_recordings(manifest, split);
  const auto models = load_models(checkpoints, recs);
  std::vector<eval::NamedDecoder> decoders;
  for (const auto& r : rows_for(models, {m}, err)) decoders.push_back(decoder_of(r));
  eval::SweepConfig sc = cfg.sweep;
  sc.seed = sweep_seed(cfg.seed);
  const auto table = eval::noise_sweep(decoders, recs, sc);
  prepare_out_dir(out_dir);
  const std::string csv = eval::sweep_csv(table);
  io::atomic_write(fs::path(out_dir) / "sweep.csv", csv);
  io::atomic_write(fs::path(out_dir) / "sweep.svg", eval::sweep_svg(table));
  out << csv;
}

void cmd_psd(const std::string& checkpoint, const std::string& manifest, const std::string& mode,
             const std::string& split, const std::string& out_dir, std::ostream& out) {
  const auto m = eval::parse_mode(mode);
  if (m != eval::DecodeMode::recursive && m != eval::DecodeMode::oracle) {
    throw ConfigError("--mode: psd needs recursive or oracle");
  }
  const auto recs = split_recordings(manifest, split);
  auto models = load_models({checkpoint}, recs);
  if (models[0].kind != "decaf") throw ConfigError("--checkpoint: psd needs a fused decaf checkpoint");
  const auto r = eval::psd_report(*models[0].net, recs, m);
  prepare_out_dir(out_dir);
  io::atomic_write(fs::path(out_dir) / "psd.csv", eval::psd_csv(r));
  io::atomic_write(fs::path(out_dir) / "psd.svg", eval::psd_svg(r));
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "band power 8-16 Hz: truth %.4g  eeg %.4g  prior %.4g  fused %.4g\n"
                "band power 1-8 Hz:  truth %.4g  eeg %.4g  prior %.4g  fused %.4g\n",
                r.truth.band_power(8, 16), r.eeg.band_power(8, 16), r.prior.band_power(8, 16),
                r.fused.band_power(8, 16), r.truth.band_power(1, 8), r.eeg.band_power(1, 8),
                r.prior.band_power(1, 8), r.fused.band_power(1, 8));
  out << buf;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Envelope decoding from EEG with a fused forecaster prior", "decaf"};
  app.require_subcommand(1);

  std::string config, out_dir, manifest, kind, mode = "recursive", split = "test", checkpoint;
  std::vector<std::string> checkpoints;
  bool force = false;

  auto* defaults = app.add_subcommand("defaults", "Print the documented default configuration");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  gen->add_option("--config", config, "Run configuration")->required();
  gen->add_option("--out", out_dir, "Dataset directory")->required();
  gen->add_flag("--force", force, "Replace a non-empty output directory");

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--config", config, "Run configuration")->required();
  train->add_option("--data", manifest, "Dataset manifest.csv or its directory")->required();
  train->add_option("--model", kind, "mtrf | eeg_only | decaf")->required();
  train->add_option("--out", out_dir, "Run directory")->required();
  train->add_flag("--force", force, "Replace an existing checkpoint");

  auto* ev = app.add_subcommand("eval", "Score checkpoints in one decoding mode");
  ev->add_option("--checkpoints", checkpoints, "Checkpoint files")->required();
  ev->add_option("--data", manifest, "Dataset manifest.csv or its directory")->required();
  ev->add_option("--mode", mode, "recursive | oracle | eeg_only | prior_only");
  ev->add_option("--split", split, "Split to score");
  ev->add_option("--out", out_dir, "Report directory")->required();

  auto* rep = app.add_subcommand("report", "Score checkpoints in every applicable mode");
  rep->add_option("--checkpoints", checkpoints, "Checkpoint files")->required();
  rep->add_option("--data", manifest, "Dataset manifest.csv or its directory")->required();
  rep->add_option("--split", split, "Split to score");
  rep->add_option("--out", out_dir, "Report directory")->required();

  auto* sweep = app.add_subcommand("noise-sweep", "Score under additive white EEG noise");
  sweep->add_option("--config", config, "Run configuration (grid, seeds)")->required();
  sweep->add_option("--checkpoints", checkpoints, "Checkpoint files")->required();
  sweep->add_option("--data", manifest, "Dataset manifest.csv or its directory")->required();
  sweep->add_option("--mode", mode, "Mode for fused checkpoints");
  sweep->add_option("--split", split, "Split to score");
  sweep->add_option("--out", out_dir, "Output directory")->required();

  auto* psd = app.add_subcommand("psd", "Spectra of the branches of a fused model");
  psd->add_option("--checkpoint", checkpoint, "Fused checkpoint")->required();
  psd->add_option("--data", manifest, "Dataset manifest.csv or its directory")->required();
  psd->add_option("--mode", mode, "recursive | oracle");
  psd->add_option("--split", split, "Split to analyse");
  psd->add_option("--out", out_dir, "Output directory")->required();

  std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*defaults) out << default_config_text();
    if (*gen) cmd_gen_data(config, out_dir, force, out);
    if (*train) cmd_train(config, manifest, kind, out_dir, force, out);
    if (*ev) cmd_eval(checkpoints, manifest, mode, split, out_dir, out, err);
    if (*rep) cmd_report(checkpoints, manifest, split, out_dir, out, err);
    if (*sweep) cmd_noise_sweep(config, checkpoints, manifest, mode, split, out_dir, out, err);
    if (*psd) cmd_psd(checkpoint, manifest, mode, split, out_dir, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ContractError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace decaf::cli
