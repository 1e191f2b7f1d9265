#include "hydroformer/metrics.hpp"

#include <cmath>

#include <json.hpp>

namespace hydro::metrics {

namespace {
void check_lengths(std::span<const double> y, std::span<const double> yhat, std::size_t min_len, const char* what) {
  if (y.size() != yhat.size()) {
    throw std::invalid_argument(std::string(what) + ": length mismatch " + std::to_string(y.size()) + " vs " +
                                std::to_string(yhat.size()));
  }
  if (y.size() < min_len) {
    throw std::invalid_argument(std::string(what) + ": needs at least " + std::to_string(min_len) + " values");
  }
}
}  // namespace

std::string to_string(R2Mode mode) { return mode == R2Mode::paper ? "paper" : "standard"; }

R2Mode parse_r2_mode(const std::string& name) {
  if (name == "paper") return R2Mode::paper;
  if (name == "standard") return R2Mode::standard;
  throw ConfigError("unknown r2 mode '" + name + "' (expected paper or standard)");
}

double r2(std::span<const double> y, std::span<const double> yhat, R2Mode mode) {
  check_lengths(y, yhat, 2, "r2");
  double ybar = 0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(y.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += (yhat[i] - y[i]) * (yhat[i] - y[i]);
    const double dev = mode == R2Mode::paper ? yhat[i] - ybar : y[i] - ybar;
    den += dev * dev;
  }
  if (den == 0) {
    throw DegenerateDenominatorError(
        mode == R2Mode::paper ? "r2 (paper mode): predictions are constant and equal to the observed mean"
                              : "r2 (standard mode): observations are constant");
  }
  return 1.0 - num / den;
}

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat, 1, "mae");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat, 1, "rmse");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

double mbe(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat, 1, "mbe");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] - yhat[i];
  return s / static_cast<double>(y.size());
}

LeadMetrics compute(std::size_t lead, std::span<const double> y, std::span<const double> yhat, R2Mode mode) {
  LeadMetrics m;
  m.lead = lead;
  m.r2 = r2(y, yhat, mode);
  m.mae = mae(y, yhat);
  m.rmse = rmse(y, yhat);
  m.mbe = mbe(y, yhat);
  m.n = y.size();
  m.r2_mode = mode;
  return m;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["model"] = model;
  doc["split"] = split;
  doc["leads"] = nlohmann::ordered_json::array();
  for (const auto& m : leads) {
    nlohmann::ordered_json row;
    row["lead"] = m.lead;
    row["r2"] = m.r2;
    row["r2_mode"] = to_string(m.r2_mode);
    row["mae"] = m.mae;
    row["rmse"] = m.rmse;
    row["mbe"] = m.mbe;
    row["n"] = m.n;
    doc["leads"].push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  MetricReport r;
  r.model = doc.at("model").get<std::string>();
  r.split = doc.at("split").get<std::string>();
  for (const auto& row : doc.at("leads")) {
    LeadMetrics m;
    m.lead = row.at("lead").get<std::size_t>();
    m.r2 = row.at("r2").get<double>();
    m.r2_mode = parse_r2_mode(row.at("r2_mode").get<std::string>());
    m.mae = row.at("mae").get<double>();
    m.rmse = row.at("rmse").get<double>();
    m.mbe = row.at("mbe").get<double>();
    m.n = row.at("n").get<std::size_t>();
    r.leads.push_back(m);
  }
  return r;
}

}  // namespace hydro::metrics
