#pragma once

#include "decaf/models/decaf.hpp"
#include "decaf/models/mtrf.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace decaf::models {

// Checkpoint layout: u64 LE header length H, H bytes of JSON header, then one
// blob per parameter in header order:
//   u32 LE name length, name bytes, u32 LE rank, rank x u64 LE dims,
//   numel x f64 LE values (row-major).
// Header keys: magic "DCK1", kind, seed, epoch, config, metrics, params
// (list of {name, shape}).

using Json = nlohmann::ordered_json;

struct ParamBlob {
  std::string name;
  nc::Shape shape;
  nc::Matrix value;  // storage layout of nc::Tensor
};

struct Checkpoint {
  Json header;
  std::vector<ParamBlob> params;
};

std::string encode_checkpoint(const Json& header, const std::vector<ParamBlob>& params);
/// Throws FormatError naming the offending field.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Json to_json(const DecafConfig& c);
DecafConfig decaf_config_from_json(const Json& j);

Checkpoint make_checkpoint(const DecafModel& m, int epoch, const Json& metrics);
DecafModel decaf_from_checkpoint(const Checkpoint& c);

Checkpoint make_checkpoint(const MtrfModel& m, const Json& metrics);
MtrfModel mtrf_from_checkpoint(const Checkpoint& c);

/// Trainable element count recorded in the checkpoint's blobs.
Index checkpoint_param_count(const Checkpoint& c);

}  // namespace decaf::models
