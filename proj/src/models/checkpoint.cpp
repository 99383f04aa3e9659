#include "decaf/models/checkpoint.hpp"

#include "decaf/error.hpp"
#include "decaf/io.hpp"

#include <map>

namespace decaf::models {

namespace {

constexpr const char* kMagic = "DCK1";

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw FormatError("checkpoint " + field + ": " + what);
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  const char* take(std::size_t n, const std::string& field) {
    if (bytes.size() - pos < n) bad(field, "truncated");
    const char* p = bytes.data() + pos;
    pos += n;
    return p;
  }
};

std::vector<ParamBlob> blobs_of(const NamedParams& params) {
  std::vector<ParamBlob> out;
  for (const auto& [name, t] : params) out.push_back({name, t.shape(), t.value()});
  return out;
}

Json encoder_json(const EegEncoderConfig& e) {
  return Json{{"channels", e.channels}, {"d_model", e.d_model}, {"n_layers", e.n_layers},
              {"n_heads", e.n_heads},   {"ffn_dim", e.ffn_dim}, {"dropout", e.dropout}};
}

template <typename T>
T get(const Json& j, const char* key) {
  if (!j.contains(key)) bad("config", std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad("config", std::string("bad value for '") + key + "'");
  }
}

}  // namespace

std::string encode_checkpoint(const Json& header_in, const std::vector<ParamBlob>& params) {
  Json header = header_in;
  header["magic"] = kMagic;
  Json list = Json::array();
  for (const auto& p : params) list.push_back(Json{{"name", p.name}, {"shape", p.shape}});
  header["params"] = list;
  const std::string h = header.dump();

  std::string out;
  io::put_u64(out, h.size());
  out += h;
  for (const auto& p : params) {
    if (p.value.size() != nc::numel(p.shape)) bad(p.name, "value size does not match shape");
    io::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    io::put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
    for (Index d : p.shape) io::put_u64(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < p.value.size(); ++i) io::put_f64(out, p.value.data()[i]);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader rd{bytes};
  const std::uint64_t hlen = io::get_u64(rd.take(8, "header_length"));
  const char* hp = rd.take(hlen, "header_length");
  Checkpoint c;
  try {
    c.header = Json::parse(std::string_view(hp, hlen));
  } catch (const nlohmann::json::exception& e) {
    bad("header", std::string("invalid JSON: ") + e.what());
  }
  if (!c.header.is_object() || !c.header.contains("magic") || c.header["magic"] != kMagic) {
    bad("magic", "expected DCK1");
  }
  if (!c.header.contains("params") || !c.header["params"].is_array()) bad("params", "missing list");
  for (const auto& entry : c.header["params"]) {
    ParamBlob b;
    const std::uint32_t nlen = io::get_u32(rd.take(4, "name_length"));
    b.name.assign(rd.take(nlen, "name"), nlen);
    if (!entry.contains("name") || entry["name"] != b.name) bad("name", "blob '" + b.name + "' out of order");
    const std::uint32_t rank = io::get_u32(rd.take(4, b.name + ".rank"));
    for (std::uint32_t i = 0; i < rank; ++i) {
      b.shape.push_back(static_cast<Index>(io::get_u64(rd.take(8, b.name + ".shape"))));
    }
    const Index n = nc::numel(b.shape);
    b.value.resize(nc::storage_rows(b.shape), nc::storage_cols(b.shape));
    const char* p = rd.take(8 * static_cast<std::size_t>(n), b.name + ".payload");
    for (Index i = 0; i < n; ++i) b.value.data()[i] = io::get_f64(p + 8 * i);
    c.params.push_back(std::move(b));
  }
  if (rd.pos != bytes.size()) bad("payload", "trailing bytes after last parameter");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  io::atomic_write(path, encode_checkpoint(c.header, c.params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Json to_json(const DecafConfig& c) {
  Json j;
  j["kind"] = to_string(c.kind);
  j["window"] = c.window;
  j["encoder"] = encoder_json(c.encoder);
  const auto& f = c.forecaster;
  j["forecaster"] = Json{{"embed", f.embed},   {"kernel", f.kernel},           {"hidden", f.hidden},
                         {"gru_layers", f.gru_layers}, {"heads", f.heads}, {"head_hidden", f.head_hidden},
                         {"t_out", f.t_out}};
  j["gate"] = Json{{"channels", c.gate.channels}, {"kernels", c.gate.kernels}};
  return j;
}

DecafConfig decaf_config_from_json(const Json& j) {
  DecafConfig c;
  c.kind = parse_model_kind(get<std::string>(j, "kind"));
  c.window = get<Index>(j, "window");
  const Json e = get<Json>(j, "encoder");
  c.encoder.channels = get<Index>(e, "channels");
  c.encoder.d_model = get<Index>(e, "d_model");
  c.encoder.n_layers = get<Index>(e, "n_layers");
  c.encoder.n_heads = get<Index>(e, "n_heads");
  c.encoder.ffn_dim = get<Index>(e, "ffn_dim");
  c.encoder.dropout = get<double>(e, "dropout");
  const Json f = get<Json>(j, "forecaster");
  c.forecaster.embed = get<Index>(f, "embed");
  c.forecaster.kernel = get<Index>(f, "kernel");
  c.forecaster.hidden = get<Index>(f, "hidden");
  c.forecaster.gru_layers = get<Index>(f, "gru_layers");
  c.forecaster.heads = get<Index>(f, "heads");
  c.forecaster.head_hidden = get<Index>(f, "head_hidden");
  c.forecaster.t_out = get<Index>(f, "t_out");
  const Json g = get<Json>(j, "gate");
  c.gate.channels = get<std::vector<Index>>(g, "channels");
  c.gate.kernels = get<std::vector<Index>>(g, "kernels");
  return c;
}

Checkpoint make_checkpoint(const DecafModel& m, int epoch, const Json& metrics) {
  Checkpoint c;
  c.header["magic"] = kMagic;
  c.header["kind"] = to_string(m.config().kind);
  c.header["seed"] = m.seed();
  c.header["epoch"] = epoch;
  c.header["config"] = to_json(m.config());
  c.header["metrics"] = metrics;
  c.params = blobs_of(m.parameters());
  return c;
}

DecafModel decaf_from_checkpoint(const Checkpoint& c) {
  const std::string kind = get<std::string>(c.header, "kind");
  if (kind != "decaf" && kind != "eeg_only") bad("kind", "'" + kind + "' is not a neural model");
  DecafModel m(decaf_config_from_json(get<Json>(c.header, "config")), get<std::uint64_t>(c.header, "seed"));
  std::map<std::string, const ParamBlob*> by_name;
  for (const auto& b : c.params) by_name[b.name] = &b;
  auto params = m.parameters();
  if (params.size() != c.params.size()) {
    bad("params", "expected " + std::to_string(params.size()) + " tensors, found " +
                      std::to_string(c.params.size()));
  }
  for (auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) bad("params", "missing '" + name + "'");
    if (it->second->shape != t.shape()) {
      bad(name, "shape " + nc::to_string(it->second->shape) + " does not match model " + nc::to_string(t.shape()));
    }
    t.mutable_value() = it->second->value;
  }
  return m;
}

Checkpoint make_checkpoint(const MtrfModel& m, const Json& metrics) {
  Checkpoint c;
  c.header["magic"] = kMagic;
  c.header["kind"] = "mtrf";
  c.header["seed"] = 0;
  c.header["epoch"] = 0;
  c.header["config"] = Json{{"lags", m.lags}, {"channels", m.channels}, {"delay", m.delay}, {"lambda", m.lambda}};
  c.header["metrics"] = metrics;
  nc::Matrix w = m.weights;
  c.params.push_back({"mtrf.weights", {m.lags, m.channels}, w});
  c.params.push_back({"mtrf.bias", {1}, nc::Matrix::Constant(1, 1, m.bias)});
  return c;
}

MtrfModel mtrf_from_checkpoint(const Checkpoint& c) {
  if (get<std::string>(c.header, "kind") != "mtrf") bad("kind", "not an mtrf checkpoint");
  const Json cfg = get<Json>(c.header, "config");
  MtrfModel m;
  m.lags = get<Index>(cfg, "lags");
  m.channels = get<Index>(cfg, "channels");
  m.delay = get<Index>(cfg, "delay");
  m.lambda = get<double>(cfg, "lambda");
  if (c.params.size() != 2 || c.params[0].name != "mtrf.weights" || c.params[1].name != "mtrf.bias" ||
      c.params[0].shape != nc::Shape{m.lags, m.channels} || c.params[1].shape != nc::Shape{1}) {
    bad("params", "expected mtrf.weights [lags, channels] and mtrf.bias [1]");
  }
  m.weights = c.params[0].value;
  m.bias = c.params[1].value(0, 0);
  return m;
}

Index checkpoint_param_count(const Checkpoint& c) {
  Index n = 0;
  for (const auto& p : c.params) n += nc::numel(p.shape);
  return n;
}

}  // namespace decaf::models
