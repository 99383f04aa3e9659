#pragma once

#include "decaf/data/recording.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace decaf::data {

// ENV1 files: u64 LE header length H, H bytes of JSON header, then T*C
// little-endian f32 samples in time-major order. Samples are stored in single
// precision, so round trips are bit-exact for float-representable values.

enum class SignalKind { eeg, envelope };

std::string to_string(SignalKind k);

struct ContainerHeader {
  SignalKind kind = SignalKind::eeg;
  Index rows = 0;  // T
  Index cols = 0;  // C
  double fs_hz = kSampleRate;
  std::string subject;
  std::string stimulus;
};

struct Container {
  ContainerHeader header;
  Signal samples;
};

std::string encode_container(const ContainerHeader& h, const Eigen::Ref<const Signal>& samples);
/// Throws FormatError naming the offending field.
Container decode_container(std::string_view bytes);

void write_container(const std::filesystem::path& path, const ContainerHeader& h,
                     const Eigen::Ref<const Signal>& samples);
Container read_container(const std::filesystem::path& path);

void write_recording(const Recording& r, const std::filesystem::path& eeg_path,
                     const std::filesystem::path& env_path);
Recording read_recording(const std::filesystem::path& eeg_path,
                         const std::filesystem::path& env_path);

/// Rounds every sample to the nearest float, as storage would.
void quantize_to_f32(Recording& r);

struct ManifestEntry {
  std::string subject;
  std::string stimulus;
  std::filesystem::path eeg_path;  // as written; relative paths resolve against the manifest
  std::filesystem::path env_path;
  Split split = Split::train;
};

std::string format_manifest(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> parse_manifest(std::string_view text);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Reads every recording listed in the manifest and checks split disjointness.
/// A directory stands for the manifest.csv inside it.
DatasetSplit load_dataset(const std::filesystem::path& manifest_path);

}  // namespace decaf::data
