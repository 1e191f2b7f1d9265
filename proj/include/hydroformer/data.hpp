#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hydroformer/tensor.hpp"

namespace hydro::data {

enum class FeatureGroup { meteorological, hydrological };

std::string to_string(FeatureGroup g);

struct FeatureSpec {
  std::string name;
  FeatureGroup group;
  std::string unit;
};

class FeatureSchema {
 public:
  FeatureSchema(std::vector<FeatureSpec> features, std::string target);

  /// The 19 inputs: 7 meteorological columns, the water level, and 11 gate
  /// rainfall gauges. Target is ch_wl.
  static const FeatureSchema& standard();

  std::size_t size() const { return features_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<FeatureSpec>& features() const { return features_; }
  std::vector<std::string> names() const;
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::size_t target_index() const { return target_index_; }
  const std::string& target() const { return features_[target_index_].name; }

 private:
  std::vector<FeatureSpec> features_;
  std::size_t target_index_ = 0;
};

using Date = std::chrono::sys_days;
Date parse_date(const std::string& text);
std::string format_date(Date d);

/// Row-major matrix of raw observations (always 64-bit).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::vector<double> column(std::size_t c) const;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return v != v; }

struct RawSeries {
  std::vector<Date> dates;
  Matrix values;  // dates.size() x schema.size(), columns in schema order
  std::vector<std::string> columns;

  std::size_t length() const { return dates.size(); }
};

/// Comma-delimited table with a leading ISO date column; empty cells are missing.
RawSeries load_table(const std::filesystem::path& path, const FeatureSchema& schema = FeatureSchema::standard());
RawSeries parse_table(std::istream& in, const FeatureSchema& schema = FeatureSchema::standard(),
                      const std::string& source = "<stream>");
void write_table(std::ostream& out, const RawSeries& series);
void save_table(const std::filesystem::path& path, const RawSeries& series);

struct FillReport {
  std::vector<std::size_t> filled_per_column;
  std::size_t inserted_dates = 0;
};

/// Reindexes to a gap-free daily calendar, then fills interior gaps by linear
/// interpolation in time and leading/trailing gaps with the nearest observation.
RawSeries fill_missing(const RawSeries& series, FillReport* report = nullptr);

enum class Split { train, val, test };
std::string to_string(Split s);

struct SplitFractions {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
};

/// Contiguous [0, train_end) -> train, [train_end, val_end) -> val, [val_end, total) -> test.
struct SplitBoundaries {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t total = 0;

  std::pair<std::size_t, std::size_t> range(Split s) const;
  static SplitBoundaries single(std::size_t total) { return {total, total, total}; }
};

/// Each segment must hold at least `min_rows` rows (lookback + horizon).
SplitBoundaries chronological_split(std::size_t total_rows, const SplitFractions& fractions, std::size_t min_rows);

/// Per-feature z-score with population standard deviation.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(std::vector<std::string> names, std::vector<double> mean, std::vector<double> stddev);

  /// Fits on rows [0, row_end) only.
  static Normalizer fit(const Matrix& values, std::size_t row_end, const std::vector<std::string>& names);

  Matrix apply(const Matrix& m) const;
  Matrix invert(const Matrix& m) const;
  double apply_one(std::size_t col, double v) const { return (v - mean_[col]) / std_[col]; }
  double invert_one(std::size_t col, double v) const { return v * std_[col] + mean_[col]; }

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return std_; }
  std::size_t size() const { return mean_.size(); }

 private:
  std::vector<std::string> names_;
  std::vector<double> mean_;
  std::vector<double> std_;
};

struct Sample {
  Split split = Split::train;
  std::size_t anchor = 0;  // row index of the last window row
  Date anchor_date{};
  Tensor window;                   // lookback x features, normalized
  std::vector<real> targets;       // horizon, normalized target values after the anchor
  std::vector<double> raw_targets; // same values in original units
};

struct WindowedDataset {
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::size_t target_feature = 0;
  std::vector<Sample> samples;

  std::vector<const Sample*> in(Split s) const;
  std::size_t count(Split s) const;
};

/// Sample at anchor t uses rows [t-lookback+1, t] as input and target rows
/// [t+1, t+horizon]; it is kept only when that whole range lies in one split.
WindowedDataset make_windows(const Matrix& normalized, const Matrix& raw, const std::vector<Date>& dates,
                             std::size_t target_feature, std::size_t lookback, std::size_t horizon,
                             const SplitBoundaries& bounds);

/// max(0, R - lookback - horizon + 1)
std::size_t window_count(std::size_t rows, std::size_t lookback, std::size_t horizon);

struct SynthOptions {
  bool zero_rainfall = false;  // all precipitation columns forced to 0 (same random stream)
};

/// Deterministic stand-in series (daily from 1980-01-01). The target is an
/// annual cycle plus an exponentially decayed response to gate rainfall, a
/// smoothed temperature (evaporation) term, and AR(1) noise.
RawSeries synth_generate(std::uint64_t seed, std::size_t length,
                         const FeatureSchema& schema = FeatureSchema::standard(), SynthOptions options = {});

inline constexpr std::size_t kMinSynthLength = 400;

struct PreparedData {
  RawSeries series;  // after fill_missing
  SplitBoundaries bounds;
  Normalizer normalizer;
  WindowedDataset dataset;
};

PreparedData prepare(const RawSeries& raw, std::size_t lookback, std::size_t horizon,
                     const SplitFractions& fractions = {}, const FeatureSchema& schema = FeatureSchema::standard());

/// Same pipeline with a previously fitted normalizer (evaluation of a stored model).
PreparedData prepare_with(const RawSeries& raw, const Normalizer& normalizer, std::size_t lookback,
                          std::size_t horizon, const SplitFractions& fractions = {},
                          const FeatureSchema& schema = FeatureSchema::standard());

}  // namespace hydro::data
