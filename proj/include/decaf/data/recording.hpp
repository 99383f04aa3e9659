#pragma once

#include "decaf/dsp/dsp.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

namespace decaf::data {

using Eigen::Index;
using Eigen::VectorXd;
using dsp::Signal;

inline constexpr double kSampleRate = 64.0;
inline constexpr Index kWindow = 192;
inline constexpr Index kHop = 38;
inline constexpr Index kDelay = 32;

struct Recording {
  std::string subject_id;
  std::string stimulus_id;
  double fs = kSampleRate;
  Signal eeg;         // T x C, time-major
  VectorXd envelope;  // T, aligned to eeg at lag 0

  Index length() const { return envelope.size(); }
  Index channels() const { return eeg.cols(); }
};

using RecordingPtr = std::shared_ptr<const Recording>;

/// Throws FormatError when lengths disagree, fs is not 64 Hz, the envelope is
/// negative, or a sample is not finite.
void validate(const Recording& r);

enum class Split { train, validation, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct DatasetSplit {
  std::vector<RecordingPtr> train;
  std::vector<RecordingPtr> validation;
  std::vector<RecordingPtr> test;

  const std::vector<RecordingPtr>& operator[](Split s) const;
  std::vector<RecordingPtr>& operator[](Split s);
};

/// Throws ContractError if a stimulus id occurs in more than one split or a
/// (subject, stimulus) pair occurs twice.
void check_disjoint(const DatasetSplit& d);

/// A training or evaluation example. Holds the recording and index arithmetic
/// only; the accessors return views or small copies on demand.
struct WindowPair {
  RecordingPtr recording;
  Index start = 0;  // first target sample
  Index window_len = kWindow;
  Index delay = kDelay;
  bool is_first_window = false;

  Index eeg_start() const { return start + delay; }
  auto eeg_window() const { return recording->eeg.middleRows(eeg_start(), window_len); }
  auto target() const { return recording->envelope.segment(start, window_len); }
  /// envelope[start - window_len, start), zero-padded on the left.
  VectorXd context() const;
};

/// Overlapping training windows over the usable length T - delay.
std::vector<WindowPair> make_training_windows(const RecordingPtr& r, Index win = kWindow,
                                              Index hop = kHop, Index delay = kDelay);

/// Contiguous non-overlapping windows (hop = win) in time order.
std::vector<WindowPair> make_eval_sequence(const RecordingPtr& r, Index win = kWindow,
                                           Index delay = kDelay);

}  // namespace decaf::data
