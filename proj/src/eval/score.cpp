#include "decaf/eval/score.hpp"

#include "decaf/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>

namespace decaf::eval {

std::vector<double> ModelScores::values() const {
  std::vector<double> v;
  for (const auto& s : subjects) v.push_back(s.rho);
  return v;
}

ModelScores score_subjects(const std::string& model, long long params,
                           const std::vector<DecodedRecording>& decoded) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& d : decoded) {
    auto& slot = acc[d.subject()];
    for (double r : d.rho) slot.first += r, ++slot.second;
  }
  ModelScores out;
  out.model = model;
  out.params = params;
  for (const auto& [subject, sum_n] : acc) {
    if (sum_n.second == 0) {
      std::cerr << "warning: subject " << subject << " has no scored windows; excluded\n";
      continue;
    }
    out.subjects.push_back({subject, sum_n.first / static_cast<double>(sum_n.second), sum_n.second});
  }
  if (out.subjects.empty()) throw ContractError("score_subjects: no subject has any scored window");
  const auto v = out.values();
  const double n = static_cast<double>(v.size());
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

double relative_gain(double rho_model, double rho_linear) {
  if (rho_linear == 0.0) throw NumericalError("relative gain against a zero linear score");
  return (rho_model - rho_linear) / rho_linear * 100.0;
}

double wilcoxon_p(const std::vector<double>& diffs, std::size_t exact_limit) {
  std::vector<double> d;
  for (double x : diffs) {
    if (!std::isfinite(x)) throw NumericalError("wilcoxon: non-finite difference");
    if (x != 0.0) d.push_back(x);
  }
  const std::size_t n = d.size();
  if (n == 0) return 1.0;

  // Average ranks of |d|, doubled so they stay integral.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    const long r2 = static_cast<long>(i + 1 + j + 1);  // twice the average rank
    for (std::size_t k = i; k <= j; ++k) rank2[idx[k]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0.0) w2 += rank2[i];
  }

  if (n <= exact_limit) {
    const long total = std::accumulate(rank2.begin(), rank2.end(), 0L);
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    for (long r : rank2) {
      for (long s = total; s >= r; --s) count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];
    }
    double lower = 0.0, upper = 0.0, all = 0.0;
    for (long s = 0; s <= total; ++s) {
      const double c = count[static_cast<std::size_t>(s)];
      all += c;
      if (s <= w2) lower += c;
      if (s >= w2) upper += c;
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / all);
  }

  const double nn = static_cast<double>(n);
  const double w = static_cast<double>(w2) / 2.0;
  const double mu = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) return 1.0;
  const double z = std::max(0.0, std::abs(w - mu) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

double cohens_d(const std::vector<double>& diffs) {
  if (diffs.size() < 2) throw ContractError("cohens_d: need at least 2 differences");
  const double n = static_cast<double>(diffs.size());
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / n;
  double ss = 0.0;
  bool all_zero = true;
  for (double x : diffs) {
    ss += (x - mean) * (x - mean);
    all_zero = all_zero && x == 0.0;
  }
  if (all_zero) return 0.0;
  return mean / std::sqrt(ss / (n - 1.0));
}

PairedStats paired_stats(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ContractError("paired_stats: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                        " scores");
  }
  if (a.size() < 5) throw ContractError("paired_stats: need at least 5 pairs, got " + std::to_string(a.size()));
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  PairedStats s;
  s.n = a.size();
  s.p_value = wilcoxon_p(diff);
  s.cohens_d = cohens_d(diff);
  return s;
}

EvalReport make_report(std::vector<ModelScores> models, const std::string& linear_name) {
  EvalReport r;
  r.models = std::move(models);
  for (std::size_t i = 0; i < r.models.size(); ++i) {
    if (r.models[i].model == linear_name) {
      r.linear = i;
      break;
    }
  }
  for (std::size_t i = 0; i < r.models.size(); ++i) {
    for (std::size_t j = i + 1; j < r.models.size(); ++j) {
      ComparisonRow row{r.models[j].model, r.models[i].model, std::nullopt};
      std::map<std::string, double> other;
      for (const auto& s : r.models[i].subjects) other[s.subject] = s.rho;
      std::vector<double> a, b;
      for (const auto& s : r.models[j].subjects) {
        auto it = other.find(s.subject);
        if (it != other.end()) a.push_back(s.rho), b.push_back(it->second);
      }
      if (a.size() >= 5) row.stats = paired_stats(a, b);
      r.comparisons.push_back(row);
    }
  }
  return r;
}

namespace {

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::string gain_cell(const EvalReport& r, std::size_t i) {
  if (!r.linear) return "";
  if (*r.linear == i) return "--";
  return num(relative_gain(r.models[i].mean, r.models[*r.linear].mean));
}

}  // namespace

std::string report_csv(const EvalReport& r) {
  std::string out = "kind,model,subject,params,n,rho_mean,rho_std,gain_pct\n";
  for (const auto& m : r.models) {
    for (const auto& s : m.subjects) {
      out += "subject," + m.model + "," + s.subject + "," + std::to_string(m.params) + "," +
             std::to_string(s.windows) + "," + num(s.rho) + ",,\n";
    }
  }
  for (std::size_t i = 0; i < r.models.size(); ++i) {
    const auto& m = r.models[i];
    out += "summary," + m.model + ",all," + std::to_string(m.params) + "," + std::to_string(m.subjects.size()) +
           "," + num(m.mean) + "," + num(m.std) + "," + gain_cell(r, i) + "\n";
  }
  return out;
}

std::string stats_csv(const EvalReport& r) {
  std::string out = "model_a,model_b,n,p_value,cohens_d\n";
  for (const auto& c : r.comparisons) {
    out += c.model_a + "," + c.model_b + ",";
    if (c.stats) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6f\n", c.stats->n, c.stats->p_value, c.stats->cohens_d);
      out += buf;
    } else {
      out += "--,--,--\n";
    }
  }
  return out;
}

std::string report_table(const EvalReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s %12s %22s %10s\n", "model", "params", "rho (mean +- std)", "gain %");
  out += buf;
  for (std::size_t i = 0; i < r.models.size(); ++i) {
    const auto& m = r.models[i];
    std::string gain = gain_cell(r, i);
    if (!gain.empty() && gain != "--") {
      std::snprintf(buf, sizeof buf, "%+.1f", relative_gain(m.mean, r.models[*r.linear].mean));
      gain = buf;
    }
    std::snprintf(buf, sizeof buf, "%-22s %12lld %13.3f +- %.3f %10s\n", m.model.c_str(), m.params, m.mean, m.std,
                  gain.c_str());
    out += buf;
  }
  return out;
}

}  // namespace decaf::eval
