#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydroformer/errors.hpp"

namespace hydro::metrics {

/// paper:    1 - sum (yhat - y)^2 / sum (yhat - ybar)^2   (deviations of the predictions)
/// standard: 1 - sum (y - yhat)^2 / sum (y - ybar)^2      (coefficient of determination)
/// ybar is the mean of the observations in both modes.
enum class R2Mode { paper, standard };

std::string to_string(R2Mode mode);
R2Mode parse_r2_mode(const std::string& name);

class DegenerateDenominatorError : public NumericError {
 public:
  using NumericError::NumericError;
};

double r2(std::span<const double> y, std::span<const double> yhat, R2Mode mode);
double mae(std::span<const double> y, std::span<const double> yhat);
double rmse(std::span<const double> y, std::span<const double> yhat);
/// mean(y - yhat); positive means the predictions run low.
double mbe(std::span<const double> y, std::span<const double> yhat);

struct LeadMetrics {
  std::size_t lead = 0;
  double r2 = 0;
  double mae = 0;
  double rmse = 0;
  double mbe = 0;
  std::size_t n = 0;
  R2Mode r2_mode = R2Mode::paper;
};

LeadMetrics compute(std::size_t lead, std::span<const double> y, std::span<const double> yhat, R2Mode mode);

struct MetricReport {
  std::string model;
  std::string split;
  std::vector<LeadMetrics> leads;

  /// JSON document: {"model":..., "split":..., "leads":[{"lead":1,"r2":...,"r2_mode":"paper",...}, ...]}
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

}  // namespace hydro::metrics
