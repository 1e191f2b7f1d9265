#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hydroformer/tensor.hpp"

namespace hydro::shap {

/// Coalitions are bitmasks: bit i set means feature i keeps the instance value.
using Coalition = std::uint64_t;
inline constexpr std::size_t kMaxFeatures = 63;

/// Scalar model output for a full window (rows = time steps, cols = features).
using WindowFunction = std::function<double(const Tensor& window)>;

class ValueFunction {
 public:
  /// `baseline` holds one reference value per feature column of `instance`.
  ValueFunction(WindowFunction f, Tensor instance, std::vector<real> baseline);

  std::size_t num_features() const { return baseline_.size(); }
  Coalition full_coalition() const;

  /// Window with features outside `s` replaced by the baseline at every time step.
  Tensor hybrid(Coalition s) const;
  double operator()(Coalition s) const { return f_(hybrid(s)); }

 private:
  WindowFunction f_;
  Tensor instance_;
  std::vector<real> baseline_;
};

enum class Estimator { exact, sampled };
std::string to_string(Estimator e);

struct Explanation {
  double phi0 = 0;
  std::vector<double> phis;
  double fx = 0;
  Estimator estimator = Estimator::exact;
  std::size_t permutations = 0;         // sampled only
  std::vector<double> standard_errors;  // sampled only; per feature

  /// phi0 + sum(phis) - fx
  double additivity_gap() const;
  double max_standard_error() const;
  /// 1e-10 for exact; 4 x max SE (floored at 1e-10) for sampled.
  double tolerance() const;
  std::string describe_estimator() const;
};

struct ExactOptions {
  std::size_t cap = 12;
  bool allow_over_cap = false;
};

/// Full coalition enumeration with a memoized 2^n value table.
Explanation exact_shapley(const ValueFunction& vf, const ExactOptions& options = {});

/// Permutation Monte Carlo with `m` seeded uniform permutations.
Explanation sampled_shapley(const ValueFunction& vf, std::size_t m, std::uint64_t seed);

struct GroupShare {
  std::string group;
  double percent = 0;
};

struct GlobalImportance {
  std::vector<std::string> features;
  std::vector<std::string> groups;  // group of each feature
  std::vector<double> mean_abs;
  std::vector<double> percent;
  std::vector<GroupShare> group_shares;  // first-appearance order

  /// Feature indices by descending mean |phi| (stable on ties).
  std::vector<std::size_t> ranking() const;
  void write_csv(std::ostream& out) const;
};

GlobalImportance global_importance(const std::vector<Explanation>& explanations,
                                   const std::vector<std::string>& features,
                                   const std::vector<std::string>& groups);

struct BeeswarmRow {
  std::string feature;
  std::size_t instance = 0;
  double value = 0;
  double phi = 0;
};

/// One row per (feature, instance); feature blocks ordered by descending mean |phi|.
/// raw_values[j][i] is the raw value of feature i shown for instance j.
std::vector<BeeswarmRow> beeswarm_export(const std::vector<Explanation>& explanations,
                                         const std::vector<std::vector<double>>& raw_values,
                                         const std::vector<std::string>& features);
void write_beeswarm(std::ostream& out, const std::vector<BeeswarmRow>& rows);
std::vector<BeeswarmRow> read_beeswarm(std::istream& in);

struct ForceEntry {
  std::string feature;
  double phi = 0;
  double cumulative = 0;  // running value after adding phi
  bool positive = false;
};

struct ForceReport {
  double base = 0;
  double fx = 0;
  std::vector<ForceEntry> entries;  // by |phi| descending

  double final_value() const { return entries.empty() ? base : entries.back().cumulative; }
  void write_csv(std::ostream& out) const;
};

ForceReport force_report(const Explanation& e, const std::vector<std::string>& features);

/// "feature,phi,standard_error" plus phi0 / fx rows.
void write_explanation(std::ostream& out, const Explanation& e, const std::vector<std::string>& features);

}  // namespace hydro::shap
