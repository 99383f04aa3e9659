#pragma once

#include "decaf/data/container.hpp"
#include "decaf/data/recording.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace decaf::data {

struct GeneratorConfig {
  int n_subjects = 4;
  int recordings_per_subject = 5;  // one recording per stimulus; stimuli are shared by subjects
  double duration_s = 120.0;
  int channels = 64;
  std::vector<double> kernel_latencies_ms{80.0, 150.0, 250.0};
  double kernel_span_ms = 400.0;
  double response_offset_ms = 500.0;
  double nonlinear_exponent = 0.6;  // 1 disables the nonlinearity
  int nonlinear_pathway = 0;
  double eeg_snr_db = -5.0;  // per channel, pink background
  bool eeg_noise = true;
  int validation_stimuli = 1;
  int test_stimuli = 1;
  std::uint64_t seed = 0;
};

/// Throws ConfigError naming the first invalid field.
void validate(const GeneratorConfig& cfg);

/// Envelope of stimulus `stimulus`: band-passed white noise, softplus,
/// min-max to [0, 1]. Depends only on (seed, stimulus, length).
VectorXd synth_envelope(const GeneratorConfig& cfg, int stimulus);

/// Gamma-shaped kernel (t/tau) exp(1 - t/tau) sampled at fs on [0, span].
VectorXd gamma_kernel(double latency_ms, double span_ms, double fs = kSampleRate);

/// Spatial mixing matrix (channels x pathways) of one subject.
Eigen::MatrixXd mixing_matrix(const GeneratorConfig& cfg, int subject);

/// One recording with all samples rounded to float precision.
Recording generate_recording(const GeneratorConfig& cfg, int subject, int stimulus);

/// Split of stimulus index r: the last `test_stimuli` go to test, the
/// `validation_stimuli` before them to validation, the rest to training.
Split stimulus_split(const GeneratorConfig& cfg, int stimulus);

DatasetSplit generate_synthetic_dataset(const GeneratorConfig& cfg);

std::string subject_name(int subject);
std::string stimulus_name(int stimulus);

/// Writes every recording as an ENV1 pair under `dir` and the manifest last.
/// Returns the manifest path.
std::filesystem::path write_dataset(const DatasetSplit& d, const std::filesystem::path& dir);

}  // namespace decaf::data
