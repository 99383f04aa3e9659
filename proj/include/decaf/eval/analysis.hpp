#pragma once

#include "decaf/dsp/dsp.hpp"
#include "decaf/eval/decode.hpp"

#include <functional>
#include <string>
#include <vector>

namespace decaf::eval {

/// A named way of turning recordings into decoded windows.
struct NamedDecoder {
  std::string name;
  std::function<std::vector<DecodedRecording>(const std::vector<RecordingPtr>&)> run;
};

/// The model is captured by reference and must outlive the decoder.
NamedDecoder decaf_decoder(std::string name, const models::DecafModel& model, DecodeMode mode);
NamedDecoder mtrf_decoder(std::string name, const models::MtrfModel& model);

/// Copies of the recordings with white Gaussian noise added to the EEG at
/// exactly `snr_db` (power over the whole recording, all channels jointly).
/// Recording i draws from derive_seed(seed, {i}).
std::vector<RecordingPtr> with_noise(const std::vector<RecordingPtr>& recs, double snr_db, std::uint64_t seed);

struct SweepConfig {
  std::vector<double> snr_db{-10.0, -5.0, 0.0, 5.0, 10.0};
  bool control = true;  // appends a +100 dB column
  int seeds = 3;
  std::uint64_t seed = 0;
};

struct SweepTable {
  std::vector<std::string> models;
  std::vector<double> snr_db;  // grid as run, control last
  std::vector<double> clean;   // grand mean rho without noise, per model
  Eigen::MatrixXd mean;        // models x snr: grand mean rho averaged over seeds
  Eigen::MatrixXd sd;          // across seeds, n - 1
  int seeds = 0;
};

/// Every model sees the same noisy copies (paired noise): seed k at grid
/// point j uses derive_seed(cfg.seed, {k, j}).
SweepTable noise_sweep(const std::vector<NamedDecoder>& decoders, const std::vector<RecordingPtr>& recs,
                       const SweepConfig& cfg = {});

/// Columns: snr_db,model,rho_mean,rho_sd,seeds; the noise-free reference
/// uses snr_db "clean" with rho_sd 0.
std::string sweep_csv(const SweepTable& t);
/// Curves over the requested grid; the +100 dB control is left out.
std::string sweep_svg(const SweepTable& t);

struct PsdReport {
  dsp::PsdEstimate truth, eeg, prior, fused;
};

/// Welch spectra of the concatenated test windows of the ground truth and of
/// each branch, decoded in `mode` (recursive or oracle).
PsdReport psd_report(const models::DecafModel& model, const std::vector<RecordingPtr>& recs,
                     DecodeMode mode = DecodeMode::recursive);

/// Columns: freq_hz,truth_db,eeg_db,prior_db,fused_db
std::string psd_csv(const PsdReport& r);
std::string psd_svg(const PsdReport& r);

}  // namespace decaf::eval
