#include "hydroformer/shap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "hydroformer/errors.hpp"

namespace hydro::shap {

namespace {

constexpr std::size_t kExactHardLimit = 26;  // 2^26 doubles = 512 MiB of memo

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw FormatError("beeswarm line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

ValueFunction::ValueFunction(WindowFunction f, Tensor instance, std::vector<real> baseline)
    : f_(std::move(f)), instance_(std::move(instance)), baseline_(std::move(baseline)) {
  if (!f_) throw std::invalid_argument("ValueFunction: empty model function");
  if (instance_.shape().size() != 2 || instance_.cols() != baseline_.size()) {
    throw ShapeError("ValueFunction: baseline has " + std::to_string(baseline_.size()) +
                     " entries but the instance has " + std::to_string(instance_.cols()) + " feature columns");
  }
  if (baseline_.empty() || baseline_.size() > kMaxFeatures) {
    throw ShapeError("ValueFunction: feature count must be in [1, " + std::to_string(kMaxFeatures) + "]");
  }
}

Coalition ValueFunction::full_coalition() const {
  return num_features() == 64 ? ~Coalition{0} : (Coalition{1} << num_features()) - 1;
}

Tensor ValueFunction::hybrid(Coalition s) const {
  const std::size_t rows = instance_.rows(), cols = instance_.cols();
  std::vector<real> v(instance_.data().begin(), instance_.data().end());
  for (std::size_t c = 0; c < cols; ++c) {
    if (s & (Coalition{1} << c)) continue;
    for (std::size_t r = 0; r < rows; ++r) v[r * cols + c] = baseline_[c];
  }
  return Tensor({rows, cols}, std::move(v));
}

std::string to_string(Estimator e) { return e == Estimator::exact ? "exact" : "sampled"; }

double Explanation::additivity_gap() const {
  return phi0 + std::accumulate(phis.begin(), phis.end(), 0.0) - fx;
}

double Explanation::max_standard_error() const {
  double m = 0;
  for (double se : standard_errors) m = std::max(m, se);
  return m;
}

double Explanation::tolerance() const {
  if (estimator == Estimator::exact) return 1e-10;
  return std::max(4 * max_standard_error(), 1e-10);
}

std::string Explanation::describe_estimator() const {
  if (estimator == Estimator::exact) return "exact";
  return "sampled(m=" + std::to_string(permutations) + ")";
}

Explanation exact_shapley(const ValueFunction& vf, const ExactOptions& options) {
  const std::size_t n = vf.num_features();
  if (n > options.cap && !options.allow_over_cap) {
    throw ConfigError("exact Shapley over " + std::to_string(n) + " features exceeds the cap of " +
                      std::to_string(options.cap) + " (2^" + std::to_string(n) +
                      " coalition evaluations); pass --allow-large-exact to override or use the sampled estimator");
  }
  if (n > kExactHardLimit) {
    throw ConfigError("exact Shapley is limited to " + std::to_string(kExactHardLimit) + " features");
  }
  const std::size_t count = std::size_t{1} << n;
  std::vector<double> v(count);
  for (std::size_t s = 0; s < count; ++s) v[s] = vf(static_cast<Coalition>(s));

  // w[s] = s!(n-s-1)!/n!
  std::vector<double> w(n);
  w[0] = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s + 1 < n; ++s) {
    w[s + 1] = w[s] * static_cast<double>(s + 1) / static_cast<double>(n - s - 1);
  }

  Explanation e;
  e.estimator = Estimator::exact;
  e.phi0 = v[0];
  e.fx = v[count - 1];
  e.phis.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double phi = 0;
    for (std::size_t s = 0; s < count; ++s) {
      if (s & bit) continue;
      phi += w[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
    }
    e.phis[i] = phi;
  }
  return e;
}

Explanation sampled_shapley(const ValueFunction& vf, std::size_t m, std::uint64_t seed) {
  if (m < 2) throw ConfigError("sampled Shapley needs at least 2 permutations, got " + std::to_string(m));
  const std::size_t n = vf.num_features();
  const double v_empty = vf(0);
  const double v_full = vf(vf.full_coalition());

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  // Welford accumulators per feature
  std::vector<double> mean(n, 0.0), m2(n, 0.0);
  for (std::size_t p = 0; p < m; ++p) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Coalition s = 0;
    double prev = v_empty;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = perm[k];
      s |= Coalition{1} << i;
      const double cur = (k + 1 == n) ? v_full : vf(s);
      const double x = cur - prev;
      const double delta = x - mean[i];
      mean[i] += delta / static_cast<double>(p + 1);
      m2[i] += delta * (x - mean[i]);
      prev = cur;
    }
  }

  Explanation e;
  e.estimator = Estimator::sampled;
  e.permutations = m;
  e.phi0 = v_empty;
  e.fx = v_full;
  e.phis = mean;
  e.standard_errors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double var = m2[i] / static_cast<double>(m - 1);
    e.standard_errors[i] = std::sqrt(std::max(var, 0.0) / static_cast<double>(m));
  }
  return e;
}

std::vector<std::size_t> GlobalImportance::ranking() const {
  std::vector<std::size_t> idx(mean_abs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return mean_abs[a] > mean_abs[b]; });
  return idx;
}

void GlobalImportance::write_csv(std::ostream& out) const {
  out << "rank,feature,group,mean_abs_shap,percent\n";
  std::size_t rank = 1;
  for (auto i : ranking()) {
    out << rank++ << ',' << features[i] << ',' << groups[i] << ',' << num(mean_abs[i]) << ',' << num(percent[i])
        << '\n';
  }
}

GlobalImportance global_importance(const std::vector<Explanation>& explanations,
                                   const std::vector<std::string>& features,
                                   const std::vector<std::string>& groups) {
  if (explanations.empty()) throw std::invalid_argument("global_importance: no explanations");
  const std::size_t n = features.size();
  if (groups.size() != n) throw ShapeError("global_importance: one group per feature required");
  GlobalImportance g;
  g.features = features;
  g.groups = groups;
  g.mean_abs.assign(n, 0.0);
  for (const auto& e : explanations) {
    if (e.phis.size() != n) {
      throw ShapeError("global_importance: explanation has " + std::to_string(e.phis.size()) + " attributions, expected " +
                       std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) g.mean_abs[i] += std::abs(e.phis[i]);
  }
  double total = 0;
  for (auto& v : g.mean_abs) {
    v /= static_cast<double>(explanations.size());
    total += v;
  }
  if (!(total > 0)) throw NumericError("global_importance: every attribution is zero; shares are undefined");
  g.percent.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.percent[i] = 100.0 * g.mean_abs[i] / total;
  for (std::size_t i = 0; i < n; ++i) {
    auto it = std::find_if(g.group_shares.begin(), g.group_shares.end(),
                           [&](const GroupShare& s) { return s.group == groups[i]; });
    if (it == g.group_shares.end()) {
      g.group_shares.push_back({groups[i], 0.0});
      it = g.group_shares.end() - 1;
    }
    it->percent += g.percent[i];
  }
  return g;
}

std::vector<BeeswarmRow> beeswarm_export(const std::vector<Explanation>& explanations,
                                         const std::vector<std::vector<double>>& raw_values,
                                         const std::vector<std::string>& features) {
  if (explanations.size() != raw_values.size()) {
    throw ShapeError("beeswarm_export: " + std::to_string(explanations.size()) + " explanations but " +
                     std::to_string(raw_values.size()) + " instances");
  }
  const std::size_t n = features.size();
  std::vector<double> mean_abs(n, 0.0);
  for (std::size_t j = 0; j < explanations.size(); ++j) {
    if (explanations[j].phis.size() != n || raw_values[j].size() != n) {
      throw ShapeError("beeswarm_export: instance " + std::to_string(j) + " does not have " + std::to_string(n) +
                       " features");
    }
    for (std::size_t i = 0; i < n; ++i) mean_abs[i] += std::abs(explanations[j].phis[i]);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean_abs[a] > mean_abs[b]; });

  std::vector<BeeswarmRow> rows;
  rows.reserve(n * explanations.size());
  for (auto i : order) {
    for (std::size_t j = 0; j < explanations.size(); ++j) {
      rows.push_back({features[i], j, raw_values[j][i], explanations[j].phis[i]});
    }
  }
  return rows;
}

void write_beeswarm(std::ostream& out, const std::vector<BeeswarmRow>& rows) {
  out << "feature,instance,value,shap\n";
  for (const auto& r : rows) out << r.feature << ',' << r.instance << ',' << num(r.value) << ',' << num(r.phi) << '\n';
}

std::vector<BeeswarmRow> read_beeswarm(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "feature,instance,value,shap") {
    throw FormatError("beeswarm table: missing header 'feature,instance,value,shap'");
  }
  std::vector<BeeswarmRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw FormatError("beeswarm line " + std::to_string(lineno) + ": expected 4 cells");
    BeeswarmRow r;
    r.feature = cells[0];
    r.instance = static_cast<std::size_t>(parse_double(cells[1], lineno));
    r.value = parse_double(cells[2], lineno);
    r.phi = parse_double(cells[3], lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

ForceReport force_report(const Explanation& e, const std::vector<std::string>& features) {
  if (features.size() != e.phis.size()) throw ShapeError("force_report: feature names do not match attributions");
  std::vector<std::size_t> order(e.phis.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(e.phis[a]) > std::abs(e.phis[b]); });
  ForceReport r;
  r.base = e.phi0;
  r.fx = e.fx;
  double running = e.phi0;
  for (auto i : order) {
    running += e.phis[i];
    r.entries.push_back({features[i], e.phis[i], running, e.phis[i] > 0});
  }
  return r;
}

void ForceReport::write_csv(std::ostream& out) const {
  out << "step,feature,shap,cumulative,direction\n";
  out << "0,base_value,0," << num(base) << ",none\n";
  std::size_t step = 1;
  for (const auto& e : entries) {
    out << step++ << ',' << e.feature << ',' << num(e.phi) << ',' << num(e.cumulative) << ','
        << (e.phi > 0 ? "positive" : e.phi < 0 ? "negative" : "none") << '\n';
  }
  out << step << ",prediction,0," << num(fx) << ",none\n";
}

void write_explanation(std::ostream& out, const Explanation& e, const std::vector<std::string>& features) {
  if (features.size() != e.phis.size()) throw ShapeError("write_explanation: feature names do not match attributions");
  out << "feature,shap,standard_error,estimator\n";
  const auto est = e.describe_estimator();
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double se = e.standard_errors.empty() ? 0.0 : e.standard_errors[i];
    out << features[i] << ',' << num(e.phis[i]) << ',' << num(se) << ',' << est << '\n';
  }
  out << "phi0," << num(e.phi0) << ",0," << est << '\n';
  out << "f(x)," << num(e.fx) << ",0," << est << '\n';
}

}  // namespace hydro::shap
