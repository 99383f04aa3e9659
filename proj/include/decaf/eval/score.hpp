#pragma once

#include "decaf/eval/decode.hpp"

#include <optional>
#include <string>
#include <vector>

namespace decaf::eval {

struct SubjectScore {
  std::string subject;
  double rho = 0.0;  // mean of the subject's window correlations
  std::size_t windows = 0;
};

struct ModelScores {
  std::string model;
  long long params = 0;
  std::vector<SubjectScore> subjects;  // sorted by subject id
  double mean = 0.0;
  double std = 0.0;  // across subjects, n - 1 denominator; 0 for one subject

  std::vector<double> values() const;
};

/// Groups window correlations by subject. Subjects without windows are
/// dropped with a warning; ContractError if none remain.
ModelScores score_subjects(const std::string& model, long long params,
                           const std::vector<DecodedRecording>& decoded);

/// (rho_model - rho_linear) / rho_linear * 100.
double relative_gain(double rho_model, double rho_linear);

struct PairedStats {
  std::size_t n = 0;
  double p_value = 1.0;
  double cohens_d = 0.0;
};

/// Two-sided Wilcoxon signed-rank p for paired differences. Zeros are
/// dropped; ties share average ranks. Exact over sign patterns when at most
/// `exact_limit` nonzero differences remain, otherwise the normal
/// approximation with tie and continuity corrections.
double wilcoxon_p(const std::vector<double>& diffs, std::size_t exact_limit = 25);

/// mean(diff) / sd(diff), sd with n - 1; 0 when every difference is 0.
double cohens_d(const std::vector<double>& diffs);

/// Paired a - b. ContractError on length mismatch or fewer than 5 pairs.
PairedStats paired_stats(const std::vector<double>& a, const std::vector<double>& b);

struct ComparisonRow {
  std::string model_a, model_b;
  std::optional<PairedStats> stats;  // empty when too few paired subjects
};

struct EvalReport {
  std::vector<ModelScores> models;
  std::optional<std::size_t> linear;  // index of the linear baseline, if any
  std::vector<ComparisonRow> comparisons;
};

/// Builds the report: marks the model named `linear_name` as the gain
/// reference and compares every other model against each later one on the
/// subjects they share.
EvalReport make_report(std::vector<ModelScores> models, const std::string& linear_name = "mtrf");

/// Columns: kind,model,subject,params,n,rho_mean,rho_std,gain_pct
/// kind is "subject" (one row per model and subject; n = windows) or
/// "summary" (n = subjects). Empty cells are left blank; the reference
/// model's gain is "--".
std::string report_csv(const EvalReport& r);

/// Columns: model_a,model_b,n,p_value,cohens_d ("--" when not computed).
std::string stats_csv(const EvalReport& r);

/// Plain-text table in the layout: model, params, rho mean +- std, gain.
std::string report_table(const EvalReport& r);

}  // namespace decaf::eval
