#include "decaf/cli/config.hpp"

#include "decaf/error.hpp"
#include "decaf/io.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace decaf::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt_double(v[i]);
  return out;
}

struct Key {
  const char* name;
  const char* doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& full, const std::string&)> set;
};

#define INT_KEY(name, field, doc)                                                                     \
  Key{name, doc, [](const RunConfig& c) { return std::to_string(c.field); },                         \
      [](RunConfig& c, const std::string& k, const std::string& v) {                                 \
        c.field = parse_number<std::decay_t<decltype(c.field)>>(k, v);                               \
      }}
#define DBL_KEY(name, field, doc)                                                                     \
  Key{name, doc, [](const RunConfig& c) { return fmt_double(c.field); },                             \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_number<double>(k, v); }}
#define BOOL_KEY(name, field, doc)                                                                    \
  Key{name, doc, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); },        \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }}
#define LIST_KEY(name, field, doc)                                                                    \
  Key{name, doc, [](const RunConfig& c) { return fmt_list(c.field); },                               \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_list(k, v); }}

const std::vector<Key>& data_keys() {
  static const std::vector<Key> keys{
      INT_KEY("n_subjects", data.n_subjects, "simulated subjects"),
      INT_KEY("recordings_per_subject", data.recordings_per_subject, "stimuli, one recording each per subject"),
      DBL_KEY("duration_s", data.duration_s, "seconds per recording"),
      INT_KEY("channels", data.channels, "EEG channels; also the model input width"),
      LIST_KEY("kernel_latencies_ms", data.kernel_latencies_ms, "gamma kernel peaks, one per pathway"),
      DBL_KEY("kernel_span_ms", data.kernel_span_ms, "support of each response kernel"),
      DBL_KEY("response_offset_ms", data.response_offset_ms, "extra lag of the EEG response"),
      DBL_KEY("nonlinear_exponent", data.nonlinear_exponent, "power applied to one pathway; 1 = linear"),
      INT_KEY("nonlinear_pathway", data.nonlinear_pathway, "index of the nonlinear pathway"),
      DBL_KEY("eeg_snr_db", data.eeg_snr_db, "per-channel SNR of the pink background"),
      BOOL_KEY("eeg_noise", data.eeg_noise, "false gives noiseless EEG"),
      INT_KEY("validation_stimuli", data.validation_stimuli, "stimuli held out for validation"),
      INT_KEY("test_stimuli", data.test_stimuli, "stimuli held out for test"),
  };
  return keys;
}

const std::vector<Key>& model_keys() {
  static const std::vector<Key> keys{
      INT_KEY("d_model", model.encoder.d_model, "encoder width"),
      INT_KEY("n_layers", model.encoder.n_layers, "encoder blocks"),
      INT_KEY("n_heads", model.encoder.n_heads, "encoder attention heads"),
      INT_KEY("ffn_dim", model.encoder.ffn_dim, "encoder feed-forward width"),
      DBL_KEY("dropout", model.encoder.dropout, "encoder dropout"),
      INT_KEY("forecaster_embed", model.forecaster.embed, "forecaster conv channels"),
      INT_KEY("forecaster_kernel", model.forecaster.kernel, "forecaster conv kernel"),
      INT_KEY("forecaster_hidden", model.forecaster.hidden, "GRU hidden size"),
      INT_KEY("gru_layers", model.forecaster.gru_layers, "GRU layers"),
      INT_KEY("forecaster_heads", model.forecaster.heads, "forecaster attention heads"),
      INT_KEY("head_hidden", model.forecaster.head_hidden, "forecaster output MLP width"),
  };
  return keys;
}

training::ContextRegime regime_of(const std::string& k, const std::string& v) {
  try {
    return training::parse_regime(v);
  } catch (const ConfigError&) {
    throw ConfigError(k + ": unknown '" + v + "'; valid: teacher_forcing, scheduled_sampling, oracle");
  }
}

const std::vector<Key>& train_keys() {
  static const std::vector<Key> keys{
      INT_KEY("epochs", train.epochs, "maximum epochs"),
      INT_KEY("batch", train.batch, "windows per mini-batch"),
      INT_KEY("patience", train.patience, "epochs without validation gain before stopping"),
      Key{"schedule", "static | noam", [](const RunConfig& c) { return c.schedule; },
          [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v != "static" && v != "noam") throw ConfigError(k + ": expected static or noam, got '" + v + "'");
            c.schedule = v;
          }},
      DBL_KEY("lr", lr, "rate of the static schedule"),
      DBL_KEY("noam_d_model", noam.d_model, "Noam d_model"),
      DBL_KEY("noam_warmup", noam.warmup_steps, "Noam warm-up steps"),
      DBL_KEY("noam_factor", noam.factor, "Noam scale factor"),
      Key{"regime", "teacher_forcing | scheduled_sampling | oracle",
          [](const RunConfig& c) { return training::to_string(c.train.regime); },
          [](RunConfig& c, const std::string& k, const std::string& v) { c.train.regime = regime_of(k, v); }},
      DBL_KEY("p_end", train.p_end, "scheduled-sampling probability at the last epoch"),
      DBL_KEY("lambda_l1", train.loss.l1, "L1 weight of the loss"),
      DBL_KEY("lambda_pearson", train.loss.pearson, "correlation weight of the loss"),
      DBL_KEY("clip_norm", train.clip_norm, "global gradient-norm clip"),
      INT_KEY("hop", train.hop, "training window hop in samples"),
      BOOL_KEY("shuffle", train.shuffle, "shuffle windows each epoch"),
      LIST_KEY("mtrf_lambdas", mtrf_lambdas, "ridge grid searched on validation"),
  };
  return keys;
}

const std::vector<Key>& eval_keys() {
  static const std::vector<Key> keys{
      LIST_KEY("snr_db", sweep.snr_db, "noise sweep grid"),
      INT_KEY("noise_seeds", sweep.seeds, "noise draws per grid point"),
      BOOL_KEY("control", sweep.control, "append a +100 dB control point"),
  };
  return keys;
}

const std::map<std::string, const std::vector<Key>*>& sections() {
  static const std::map<std::string, const std::vector<Key>*> s{
      {"data", &data_keys()}, {"model", &model_keys()}, {"train", &train_keys()}, {"eval", &eval_keys()}};
  return s;
}

const Key* find_key(const std::string& section, const std::string& key) {
  auto it = sections().find(section);
  if (it == sections().end()) return nullptr;
  for (const auto& k : *it->second) {
    if (key == k.name) return &k;
  }
  return nullptr;
}

models::DecafConfig preset(const std::string& name) {
  if (name == "toy") return models::toy_config();
  if (name == "full") return models::default_config();
  throw ConfigError("model.preset: expected toy or full, got '" + name + "'");
}

}  // namespace

std::uint64_t data_seed(std::uint64_t master) { return nc::derive_seed(master, {1}); }
std::uint64_t init_seed(std::uint64_t master, models::ModelKind kind) {
  return nc::derive_seed(master, {2, static_cast<std::uint64_t>(kind)});
}
std::uint64_t train_seed(std::uint64_t master, models::ModelKind kind) {
  return nc::derive_seed(master, {3, static_cast<std::uint64_t>(kind)});
}
std::uint64_t sweep_seed(std::uint64_t master) { return nc::derive_seed(master, {4}); }

RunConfig parse_config(const std::string& text) {
  struct Entry {
    std::string section, key, value;
    int line;
  };
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto cut = raw.find_first_of("#;");
    std::string line = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections().count(section)) {
        throw ConfigError(where + "unknown section [" + section + "]; valid: data, model, train, eval");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value, got '" + line + "'");
    Entry e{section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    const std::string full = section.empty() ? e.key : section + "." + e.key;
    const bool known = section.empty() ? e.key == "seed"
                                       : (find_key(section, e.key) || (section == "model" && e.key == "preset"));
    if (!known) throw ConfigError(where + "unknown key '" + full + "'");
    if (!seen.insert(full).second) throw ConfigError(where + "duplicate key '" + full + "'");
    entries.push_back(std::move(e));
  }

  RunConfig c;
  if (!seen.count("seed")) throw ConfigError("missing required key 'seed'");
  for (const auto& e : entries) {
    if (e.section.empty()) c.seed = parse_number<std::uint64_t>("seed", e.value);
    if (e.section == "model" && e.key == "preset") c.model_preset = e.value;
  }
  c.model = preset(c.model_preset);
  for (const auto& e : entries) {
    if (e.section.empty() || (e.section == "model" && e.key == "preset")) continue;
    find_key(e.section, e.key)->set(c, e.section + "." + e.key, e.value);
  }
  c.data.seed = data_seed(c.seed);
  c.model.encoder.channels = c.data.channels;
  if (c.schedule == "noam") {
    c.train.schedule = c.noam;
  } else {
    c.train.schedule = nc::StaticRate{c.lr};
  }
  data::validate(c.data);
  models::validate(c.model);
  training::validate(c.train);
  for (double l : c.mtrf_lambdas) {
    if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("train.mtrf_lambdas: values must be finite and > 0");
  }
  if (c.sweep.seeds < 1) throw ConfigError("eval.noise_seeds: must be >= 1");
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const FormatError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_config(const RunConfig& c) {
  std::string out = "seed = " + std::to_string(c.seed) + "\n";
  auto emit = [&](const std::string& name, const std::vector<Key>& keys) {
    out += "\n[" + name + "]\n";
    if (name == "model") out += "preset = " + c.model_preset + "  # toy | full\n";
    for (const auto& k : keys) out += std::string(k.name) + " = " + k.get(c) + "  # " + k.doc + "\n";
  };
  emit("data", data_keys());
  emit("model", model_keys());
  emit("train", train_keys());
  emit("eval", eval_keys());
  return out;
}

std::string default_config_text() { return format_config(parse_config("seed = 0\n")); }

}  // namespace decaf::cli
