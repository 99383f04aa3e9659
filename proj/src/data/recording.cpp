#include "decaf/data/recording.hpp"

#include "decaf/error.hpp"

#include <set>
#include <utility>

namespace decaf::data {

void validate(const Recording& r) {
  if (r.eeg.rows() != r.envelope.size()) {
    throw FormatError("recording " + r.subject_id + "/" + r.stimulus_id + ": eeg has " +
                      std::to_string(r.eeg.rows()) + " samples, envelope " +
                      std::to_string(r.envelope.size()));
  }
  if (r.fs != kSampleRate) throw FormatError("fs_hz must be 64, got " + std::to_string(r.fs));
  if (!r.eeg.allFinite() || !r.envelope.allFinite()) {
    throw FormatError("recording " + r.subject_id + "/" + r.stimulus_id + " has non-finite samples");
  }
  if (r.envelope.size() > 0 && r.envelope.minCoeff() < 0.0) {
    throw FormatError("recording " + r.subject_id + "/" + r.stimulus_id + ": negative envelope");
  }
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw FormatError("split: unknown value '" + s + "'");
}

const std::vector<RecordingPtr>& DatasetSplit::operator[](Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::validation: return validation;
    default: return test;
  }
}

std::vector<RecordingPtr>& DatasetSplit::operator[](Split s) {
  return const_cast<std::vector<RecordingPtr>&>(std::as_const(*this)[s]);
}

void check_disjoint(const DatasetSplit& d) {
  std::set<std::string> seen_stimuli;
  std::set<std::pair<std::string, std::string>> seen_pairs;
  for (Split s : {Split::train, Split::validation, Split::test}) {
    std::set<std::string> here;
    for (const auto& r : d[s]) {
      if (!seen_pairs.insert({r->subject_id, r->stimulus_id}).second) {
        throw ContractError("recording " + r->subject_id + "/" + r->stimulus_id + " listed twice");
      }
      here.insert(r->stimulus_id);
    }
    for (const auto& id : here) {
      if (!seen_stimuli.insert(id).second) {
        throw ContractError("stimulus " + id + " appears in more than one split");
      }
    }
  }
}

VectorXd WindowPair::context() const {
  VectorXd c = VectorXd::Zero(window_len);
  const Index from = std::max<Index>(0, start - window_len);
  const Index n = start - from;
  c.tail(n) = recording->envelope.segment(from, n);
  return c;
}

namespace {

std::vector<WindowPair> windows(const RecordingPtr& r, Index win, Index hop, Index delay) {
  if (!r) throw ContractError("windowing: null recording");
  if (win < 1 || hop < 1 || delay < 0) throw ContractError("windowing: bad win/hop/delay");
  if (r->length() < win + delay) {
    throw ContractError("recording " + r->subject_id + "/" + r->stimulus_id + " has " +
                        std::to_string(r->length()) + " samples; need win + delay = " +
                        std::to_string(win + delay));
  }
  auto plan = dsp::window_slices(r->length() - delay, win, hop);
  std::vector<WindowPair> out;
  out.reserve(plan.starts.size());
  for (Index s : plan.starts) {
    out.push_back(WindowPair{r, s, win, delay, s < win});
  }
  return out;
}

}  // namespace

std::vector<WindowPair> make_training_windows(const RecordingPtr& r, Index win, Index hop,
                                              Index delay) {
  return windows(r, win, hop, delay);
}

std::vector<WindowPair> make_eval_sequence(const RecordingPtr& r, Index win, Index delay) {
  return windows(r, win, win, delay);
}

}  // namespace decaf::data
