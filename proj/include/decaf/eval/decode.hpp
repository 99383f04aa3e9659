#pragma once

#include "decaf/data/recording.hpp"
#include "decaf/models/decaf.hpp"
#include "decaf/models/mtrf.hpp"

#include <string>
#include <vector>

namespace decaf::eval {

using data::Index;
using data::RecordingPtr;
using Eigen::VectorXd;

enum class DecodeMode { recursive, oracle, eeg_only, prior_only };

std::string to_string(DecodeMode m);
/// Throws ConfigError listing the valid modes.
DecodeMode parse_mode(const std::string& s);

struct DecodedRecording {
  RecordingPtr recording;
  std::vector<data::WindowPair> windows;
  std::vector<VectorXd> output;        // A_n per window, in time order
  std::vector<VectorXd> eeg_estimate;  // empty for mTRF
  std::vector<VectorXd> prior;         // empty unless a forecaster ran
  std::vector<VectorXd> alpha;         // empty unless the gate ran
  std::vector<double> rho;             // per-window Pearson vs target

  std::string subject() const { return recording->subject_id; }
};

/// Decodes each recording's non-overlapping window sequence.
///   recursive:  context_0 = 0, context_n = A_{n-1}
///   oracle:     context_n = ground-truth envelope of window n-1
///   eeg_only:   A_n = encoder estimate
///   prior_only: A_n = forecaster estimate, chained on its own output
/// Window n only ever sees EEG of window n and outputs of windows < n.
/// Recordings shorter than one window are skipped. Recordings are processed
/// in lockstep so window n of every recording shares one batch.
std::vector<DecodedRecording> decode(const models::DecafModel& model, const std::vector<RecordingPtr>& recs,
                                     DecodeMode mode);

std::vector<DecodedRecording> decode(const models::MtrfModel& model, const std::vector<RecordingPtr>& recs);

/// Mean of per-window correlations over all decoded windows.
double mean_window_rho(const std::vector<DecodedRecording>& decoded);

}  // namespace decaf::eval
