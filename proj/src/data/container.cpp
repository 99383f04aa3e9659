#include "decaf/data/container.hpp"

#include "decaf/error.hpp"
#include "decaf/io.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

namespace decaf::data {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string to_string(SignalKind k) { return k == SignalKind::eeg ? "eeg" : "envelope"; }

namespace {

constexpr std::string_view kMagic = "ENV1";

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw FormatError("ENV1 " + field + ": " + what);
}

}  // namespace

std::string encode_container(const ContainerHeader& h, const Eigen::Ref<const Signal>& samples) {
  if (samples.rows() != h.rows || samples.cols() != h.cols) {
    throw DimensionError("ENV1 shape [" + std::to_string(h.rows) + "," + std::to_string(h.cols) +
                         "] does not match samples " + std::to_string(samples.rows()) + "x" +
                         std::to_string(samples.cols()));
  }
  ojson j;
  j["magic"] = kMagic;
  j["kind"] = to_string(h.kind);
  j["dtype"] = "f32le";
  j["layout"] = "time_major";
  j["shape"] = {h.rows, h.cols};
  if (h.fs_hz == std::floor(h.fs_hz)) {
    j["fs_hz"] = static_cast<std::int64_t>(h.fs_hz);
  } else {
    j["fs_hz"] = h.fs_hz;
  }
  j["subject"] = h.subject;
  j["stimulus"] = h.stimulus;
  const std::string header = j.dump();

  std::string out;
  out.reserve(8 + header.size() + 4 * static_cast<std::size_t>(samples.size()));
  io::put_u64(out, header.size());
  out += header;
  for (Index t = 0; t < samples.rows(); ++t) {
    for (Index c = 0; c < samples.cols(); ++c) io::put_f32(out, static_cast<float>(samples(t, c)));
  }
  return out;
}

Container decode_container(std::string_view bytes) {
  if (bytes.size() < 8) bad("header_length", "file shorter than 8 bytes");
  const std::uint64_t hlen = io::get_u64(bytes.data());
  if (hlen > bytes.size() - 8) {
    bad("header_length", std::to_string(hlen) + " exceeds file size " + std::to_string(bytes.size()));
  }
  ojson j;
  try {
    j = ojson::parse(bytes.substr(8, hlen));
  } catch (const nlohmann::json::exception& e) {
    bad("header", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("header", "not a JSON object");
  auto str = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) bad(key, "missing or not a string");
    return j[key].get<std::string>();
  };
  if (str("magic") != kMagic) bad("magic", "expected ENV1, got '" + j["magic"].get<std::string>() + "'");
  if (str("dtype") != "f32le") bad("dtype", "unsupported '" + j["dtype"].get<std::string>() + "'");
  if (str("layout") != "time_major") bad("layout", "unsupported '" + j["layout"].get<std::string>() + "'");

  Container c;
  const std::string kind = str("kind");
  if (kind == "eeg") {
    c.header.kind = SignalKind::eeg;
  } else if (kind == "envelope") {
    c.header.kind = SignalKind::envelope;
  } else {
    bad("kind", "unknown '" + kind + "'");
  }
  const auto& shape = j.contains("shape") ? j["shape"] : ojson();
  if (!shape.is_array() || shape.size() != 2 || !shape[0].is_number_unsigned() ||
      !shape[1].is_number_unsigned()) {
    bad("shape", "expected [T, C] of non-negative integers");
  }
  c.header.rows = shape[0].get<Index>();
  c.header.cols = shape[1].get<Index>();
  if (c.header.kind == SignalKind::envelope && c.header.cols != 1) {
    bad("shape", "envelope must have one column, got " + std::to_string(c.header.cols));
  }
  if (!j.contains("fs_hz") || !j["fs_hz"].is_number()) bad("fs_hz", "missing or not a number");
  c.header.fs_hz = j["fs_hz"].get<double>();
  c.header.subject = str("subject");
  c.header.stimulus = str("stimulus");

  const std::uint64_t expected =
      4ull * static_cast<std::uint64_t>(c.header.rows) * static_cast<std::uint64_t>(c.header.cols);
  const std::uint64_t got = bytes.size() - 8 - hlen;
  if (got < expected) {
    bad("payload", "truncated: shape needs " + std::to_string(expected) + " bytes, file has " +
                       std::to_string(got));
  }
  if (got > expected) {
    bad("payload", "length " + std::to_string(got) + " bytes does not match shape (" +
                       std::to_string(expected) + ")");
  }
  c.samples.resize(c.header.rows, c.header.cols);
  const char* p = bytes.data() + 8 + hlen;
  for (Index i = 0; i < c.samples.size(); ++i, p += 4) c.samples.data()[i] = io::get_f32(p);
  return c;
}

void write_container(const fs::path& path, const ContainerHeader& h,
                     const Eigen::Ref<const Signal>& samples) {
  io::atomic_write(path, encode_container(h, samples));
}

Container read_container(const fs::path& path) {
  try {
    return decode_container(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_recording(const Recording& r, const fs::path& eeg_path, const fs::path& env_path) {
  validate(r);
  ContainerHeader h{SignalKind::eeg, r.eeg.rows(), r.eeg.cols(), r.fs, r.subject_id, r.stimulus_id};
  write_container(eeg_path, h, r.eeg);
  h.kind = SignalKind::envelope;
  h.cols = 1;
  write_container(env_path, h, Signal(r.envelope));
}

Recording read_recording(const fs::path& eeg_path, const fs::path& env_path) {
  Container eeg = read_container(eeg_path);
  Container env = read_container(env_path);
  if (eeg.header.kind != SignalKind::eeg) throw FormatError(eeg_path.string() + ": kind is not eeg");
  if (env.header.kind != SignalKind::envelope) {
    throw FormatError(env_path.string() + ": kind is not envelope");
  }
  if (eeg.header.subject != env.header.subject || eeg.header.stimulus != env.header.stimulus) {
    throw FormatError("subject/stimulus differ between " + eeg_path.string() + " and " +
                      env_path.string());
  }
  Recording r;
  r.subject_id = eeg.header.subject;
  r.stimulus_id = eeg.header.stimulus;
  r.fs = eeg.header.fs_hz;
  r.eeg = std::move(eeg.samples);
  r.envelope = env.samples.col(0);
  validate(r);
  return r;
}

void quantize_to_f32(Recording& r) {
  r.eeg = r.eeg.cast<float>().cast<double>();
  r.envelope = r.envelope.cast<float>().cast<double>();
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.subject + "," + e.stimulus + "," + e.eeg_path.generic_string() + "," +
           e.env_path.generic_string() + "," + to_string(e.split) + "\n";
  }
  return out;
}

std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  std::vector<ManifestEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 5) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": expected 5 fields, got " +
                        std::to_string(f.size()));
    }
    try {
      out.push_back({f[0], f[1], f[2], f[3], parse_split(f[4])});
    } catch (const FormatError& e) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw FormatError("manifest not found: " + path.string());
  return parse_manifest(io::read_file(path));
}

DatasetSplit load_dataset(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / "manifest.csv" : path;
  const fs::path base = manifest_path.parent_path();
  DatasetSplit d;
  for (const auto& e : read_manifest(manifest_path)) {
    auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : base / p; };
    auto r = std::make_shared<Recording>(read_recording(resolve(e.eeg_path), resolve(e.env_path)));
    if (r->subject_id != e.subject || r->stimulus_id != e.stimulus) {
      throw FormatError("manifest entry " + e.subject + "/" + e.stimulus + " points at " +
                        r->subject_id + "/" + r->stimulus_id);
    }
    d[e.split].push_back(std::move(r));
  }
  try {
    check_disjoint(d);
  } catch (const ContractError& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return d;
}

}  // namespace decaf::data
