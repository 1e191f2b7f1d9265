#include "hydroformer/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "hydroformer/errors.hpp"

namespace hydro::data {

std::string to_string(FeatureGroup g) { return g == FeatureGroup::meteorological ? "meteorological" : "hydrological"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Schema

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features, std::string target) : features_(std::move(features)) {
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (!seen.insert(f.name).second) throw ConfigError("schema: duplicate feature name '" + f.name + "'");
  }
  auto idx = index_of(target);
  if (!idx) throw ConfigError("schema: target '" + target + "' is not a feature");
  target_index_ = *idx;
}

const FeatureSchema& FeatureSchema::standard() {
  static const FeatureSchema schema = [] {
    using G = FeatureGroup;
    std::vector<FeatureSpec> f = {
        {"tm", G::meteorological, "degC"},   {"pre", G::meteorological, "mm/d"},
        {"tmax", G::meteorological, "degC"}, {"tmin", G::meteorological, "degC"},
        {"ssd", G::meteorological, "h/d"},   {"win", G::meteorological, "m/s"},
        {"rhu", G::meteorological, "%"},     {"ch_wl", G::hydrological, "m"},
    };
    for (const char* gate : {"ch", "qk", "zm", "ty", "xg", "zh", "zq", "lj", "jn", "nh", "tc"}) {
      f.push_back({std::string(gate) + "_pre", G::hydrological, "mm"});
    }
    return FeatureSchema(std::move(f), "ch_wl");
  }();
  return schema;
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

std::optional<std::size_t> FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Dates and tables

Date parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (text.size() != 10 || std::sscanf(text.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw DataError("unparsable date '" + text + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + text + "'");
  return Date{ymd};
}

std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = (*this)(r, c);
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

RawSeries parse_table(std::istream& in, const FeatureSchema& schema, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  auto header = split_fields(line);
  for (auto& h : header) h = trim(h);
  if (header.empty() || header.front() != "date") throw DataError(source + ": first column must be 'date'");

  std::vector<std::size_t> column_of_field(header.size(), 0);
  std::vector<std::string> unknown, duplicated;
  std::vector<bool> present(schema.size(), false);
  for (std::size_t f = 1; f < header.size(); ++f) {
    auto idx = schema.index_of(header[f]);
    if (!idx) {
      unknown.push_back(header[f]);
      continue;
    }
    if (present[*idx]) duplicated.push_back(header[f]);
    present[*idx] = true;
    column_of_field[f] = *idx;
  }
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (!present[i]) missing.push_back(schema[i].name);
  }
  if (!unknown.empty() || !missing.empty() || !duplicated.empty()) {
    std::string msg = source + ": header does not match the feature schema;";
    if (!missing.empty()) msg += " missing columns: " + join(missing) + ";";
    if (!unknown.empty()) msg += " unknown columns: " + join(unknown) + ";";
    if (!duplicated.empty()) msg += " duplicated columns: " + join(duplicated) + ";";
    throw DataError(msg);
  }

  RawSeries s;
  s.columns = schema.names();
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    Date date;
    try {
      date = parse_date(trim(fields[0]));
    } catch (const DataError& e) {
      throw DataError(source + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!s.dates.empty() && date <= s.dates.back()) {
      throw DataError(source + ": line " + std::to_string(line_no) + ": date " + format_date(date) +
                      " is not after the previous date " + format_date(s.dates.back()) +
                      " (dates must be strictly increasing)");
    }
    s.dates.push_back(date);
    const std::size_t base = values.size();
    values.resize(base + schema.size(), kMissing);
    for (std::size_t f = 1; f < fields.size(); ++f) {
      const std::string cell = trim(fields[f]);
      if (cell.empty()) continue;
      double v = 0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw DataError(source + ": line " + std::to_string(line_no) + ": cannot parse '" + cell + "' in column " +
                        header[f]);
      }
      values[base + column_of_field[f]] = v;
    }
  }
  s.values.rows = s.dates.size();
  s.values.cols = schema.size();
  s.values.values = std::move(values);
  return s;
}

RawSeries load_table(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path.string());
  return parse_table(in, schema, path.string());
}

void write_table(std::ostream& out, const RawSeries& series) {
  out << "date";
  for (const auto& c : series.columns) out << ',' << c;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < series.length(); ++r) {
    out << format_date(series.dates[r]);
    for (std::size_t c = 0; c < series.values.cols; ++c) {
      out << ',';
      const double v = series.values(r, c);
      if (is_missing(v)) continue;
      std::snprintf(buf, sizeof buf, "%.4f", v);
      out << buf;
    }
    out << '\n';
  }
}

void save_table(const std::filesystem::path& path, const RawSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_table(out, series);
}

// ---------------------------------------------------------------------------
// Gap filling

RawSeries fill_missing(const RawSeries& series, FillReport* report) {
  const std::size_t cols = series.values.cols;
  RawSeries out;
  out.columns = series.columns;
  FillReport rep;
  rep.filled_per_column.assign(cols, 0);
  if (series.length() == 0) throw DataError("fill_missing: empty series");

  const auto first = series.dates.front();
  const auto last = series.dates.back();
  const auto span = static_cast<std::size_t>((last - first).count()) + 1;
  out.values = Matrix(span, cols, kMissing);
  out.dates.reserve(span);
  for (std::size_t i = 0; i < span; ++i) out.dates.push_back(first + std::chrono::days{static_cast<long>(i)});
  for (std::size_t r = 0; r < series.length(); ++r) {
    const auto row = static_cast<std::size_t>((series.dates[r] - first).count());
    for (std::size_t c = 0; c < cols; ++c) out.values(row, c) = series.values(r, c);
  }
  rep.inserted_dates = span - series.length();

  for (std::size_t c = 0; c < cols; ++c) {
    std::vector<std::size_t> observed;
    for (std::size_t r = 0; r < span; ++r) {
      if (!is_missing(out.values(r, c))) observed.push_back(r);
    }
    if (observed.size() < 2) {
      throw DataError("fill_missing: column " + (c < out.columns.size() ? out.columns[c] : std::to_string(c)) +
                      " has fewer than 2 observed values");
    }
    for (std::size_t r = 0; r < observed.front(); ++r) {
      out.values(r, c) = out.values(observed.front(), c);
      ++rep.filled_per_column[c];
    }
    for (std::size_t r = observed.back() + 1; r < span; ++r) {
      out.values(r, c) = out.values(observed.back(), c);
      ++rep.filled_per_column[c];
    }
    for (std::size_t k = 0; k + 1 < observed.size(); ++k) {
      const std::size_t a = observed[k], b = observed[k + 1];
      const double va = out.values(a, c), vb = out.values(b, c);
      for (std::size_t r = a + 1; r < b; ++r) {
        const double w = static_cast<double>(r - a) / static_cast<double>(b - a);
        out.values(r, c) = va + w * (vb - va);
        ++rep.filled_per_column[c];
      }
    }
  }
  if (report) *report = std::move(rep);
  return out;
}

// ---------------------------------------------------------------------------
// Splits

std::pair<std::size_t, std::size_t> SplitBoundaries::range(Split s) const {
  switch (s) {
    case Split::train: return {0, train_end};
    case Split::val: return {train_end, val_end};
    case Split::test: return {val_end, total};
  }
  return {0, 0};
}

SplitBoundaries chronological_split(std::size_t total_rows, const SplitFractions& f, std::size_t min_rows) {
  if (f.train <= 0 || f.val <= 0 || f.test <= 0) throw ConfigError("split fractions must all be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(f.train + f.val + f.test));
  }
  SplitBoundaries b;
  b.total = total_rows;
  b.train_end = static_cast<std::size_t>(std::llround(static_cast<double>(total_rows) * f.train));
  b.val_end = static_cast<std::size_t>(std::llround(static_cast<double>(total_rows) * (f.train + f.val)));
  for (Split s : {Split::train, Split::val, Split::test}) {
    const auto [lo, hi] = b.range(s);
    if (hi - lo < min_rows) {
      throw DataError("series of " + std::to_string(total_rows) + " rows is too short: the " + to_string(s) +
                      " segment has " + std::to_string(hi - lo) + " rows, needs at least " +
                      std::to_string(min_rows) + " (lookback + horizon)");
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Normalizer

Normalizer::Normalizer(std::vector<std::string> names, std::vector<double> mean, std::vector<double> stddev)
    : names_(std::move(names)), mean_(std::move(mean)), std_(std::move(stddev)) {
  if (mean_.size() != std_.size() || names_.size() != mean_.size()) {
    throw FormatError("normalizer: inconsistent statistic lengths");
  }
  for (std::size_t i = 0; i < std_.size(); ++i) {
    if (!(std_[i] > 0)) throw DataError("normalizer: feature " + names_[i] + " has zero variance");
  }
}

Normalizer Normalizer::fit(const Matrix& values, std::size_t row_end, const std::vector<std::string>& names) {
  if (row_end == 0 || row_end > values.rows) throw DataError("normalizer: invalid fitting range");
  if (names.size() != values.cols) throw DataError("normalizer: name count does not match columns");
  std::vector<double> mean(values.cols, 0.0), sd(values.cols, 0.0);
  const double n = static_cast<double>(row_end);
  for (std::size_t c = 0; c < values.cols; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < row_end; ++r) s += values(r, c);
    mean[c] = s / n;
    double v = 0;
    for (std::size_t r = 0; r < row_end; ++r) v += (values(r, c) - mean[c]) * (values(r, c) - mean[c]);
    sd[c] = std::sqrt(v / n);
    if (!(sd[c] > 1e-12 * std::max(1.0, std::abs(mean[c])))) {
      throw DataError("normalizer: feature " + names[c] + " is constant over the training rows");
    }
  }
  return Normalizer(names, std::move(mean), std::move(sd));
}

Matrix Normalizer::apply(const Matrix& m) const {
  if (m.cols != size()) throw ShapeError("normalizer: column count mismatch");
  Matrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = apply_one(c, m(r, c));
  return out;
}

Matrix Normalizer::invert(const Matrix& m) const {
  if (m.cols != size()) throw ShapeError("normalizer: column count mismatch");
  Matrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = invert_one(c, m(r, c));
  return out;
}

// ---------------------------------------------------------------------------
// Windows

std::vector<const Sample*> WindowedDataset::in(Split s) const {
  std::vector<const Sample*> out;
  for (const auto& sample : samples) {
    if (sample.split == s) out.push_back(&sample);
  }
  return out;
}

std::size_t WindowedDataset::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [s](const Sample& x) { return x.split == s; }));
}

std::size_t window_count(std::size_t rows, std::size_t lookback, std::size_t horizon) {
  return rows >= lookback + horizon ? rows - lookback - horizon + 1 : 0;
}

WindowedDataset make_windows(const Matrix& normalized, const Matrix& raw, const std::vector<Date>& dates,
                             std::size_t target_feature, std::size_t lookback, std::size_t horizon,
                             const SplitBoundaries& bounds) {
  if (lookback < 1 || horizon < 1) throw ConfigError("make_windows: lookback and horizon must be >= 1");
  if (normalized.rows != raw.rows || normalized.cols != raw.cols || dates.size() != raw.rows) {
    throw ShapeError("make_windows: inconsistent inputs");
  }
  if (bounds.total != raw.rows) throw ShapeError("make_windows: split boundaries do not cover the series");
  if (target_feature >= raw.cols) throw ConfigError("make_windows: target feature out of range");

  WindowedDataset ds;
  ds.lookback = lookback;
  ds.horizon = horizon;
  ds.target_feature = target_feature;
  const std::size_t cols = raw.cols;
  for (Split s : {Split::train, Split::val, Split::test}) {
    const auto [lo, hi] = bounds.range(s);
    if (hi - lo < lookback + horizon) continue;
    // anchor t needs rows [t - lookback + 1, t + horizon] inside [lo, hi)
    for (std::size_t t = lo + lookback - 1; t + horizon < hi; ++t) {
      Sample sample;
      sample.split = s;
      sample.anchor = t;
      sample.anchor_date = dates[t];
      std::vector<real> w(lookback * cols);
      for (std::size_t i = 0; i < lookback; ++i)
        for (std::size_t c = 0; c < cols; ++c)
          w[i * cols + c] = static_cast<real>(normalized(t + 1 - lookback + i, c));
      sample.window = Tensor({lookback, cols}, std::move(w));
      for (std::size_t h = 1; h <= horizon; ++h) {
        sample.targets.push_back(static_cast<real>(normalized(t + h, target_feature)));
        sample.raw_targets.push_back(raw(t + h, target_feature));
      }
      ds.samples.push_back(std::move(sample));
    }
  }
  if (ds.samples.empty()) throw DataError("make_windows: not enough rows for any sample");
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic data

RawSeries synth_generate(std::uint64_t seed, std::size_t length, const FeatureSchema& schema, SynthOptions options) {
  if (length < kMinSynthLength) {
    throw ConfigError("synthetic series length must be at least " + std::to_string(kMinSynthLength) + ", got " +
                      std::to_string(length));
  }
  const auto col = [&](const std::string& name) {
    auto idx = schema.index_of(name);
    if (!idx) throw ConfigError("synthetic generator: schema lacks column " + name);
    return *idx;
  };
  const std::size_t c_tm = col("tm"), c_pre = col("pre"), c_tmax = col("tmax"), c_tmin = col("tmin"),
                    c_ssd = col("ssd"), c_win = col("win"), c_rhu = col("rhu"), c_wl = col("ch_wl");
  std::vector<std::size_t> gates;
  for (const char* g : {"ch", "qk", "zm", "ty", "xg", "zh", "zq", "lj", "jn", "nh", "tc"}) {
    gates.push_back(col(std::string(g) + "_pre"));
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::exponential_distribution<double> unit_exp(1.0);

  RawSeries s;
  s.columns = schema.names();
  s.values = Matrix(length, schema.size(), 0.0);
  const Date start{std::chrono::year{1980} / 1 / 1};
  constexpr double two_pi = 2.0 * std::numbers::pi;

  double temp_anomaly = 0, runoff = 0, evap = 0, noise = 0;
  for (std::size_t t = 0; t < length; ++t) {
    s.dates.push_back(start + std::chrono::days{static_cast<long>(t)});
    const double phase = two_pi * static_cast<double>(t) / 365.25;
    auto& v = s.values;

    // Temperature: annual cycle peaking in late July plus persistent anomalies.
    temp_anomaly = 0.8 * temp_anomaly + 1.5 * normal(rng);
    const double tm = 16.0 + 11.0 * std::sin(phase - 1.9) + temp_anomaly;
    v(t, c_tm) = tm;
    v(t, c_tmax) = tm + 4.5 + 1.2 * normal(rng);
    v(t, c_tmin) = tm - 4.0 - 1.2 * std::abs(normal(rng));

    // Basin-wide storms, wettest around June, with gate-to-gate variation.
    const double season = std::sin(phase - 1.3);
    const bool wet = uniform(rng) < 0.28 + 0.17 * season;
    const double intensity = (6.0 + 6.0 * std::max(0.0, season)) * unit_exp(rng);
    double gate_sum = 0;
    for (std::size_t g : gates) {
      const double spread = std::exp(0.35 * normal(rng) - 0.06);
      const double shower = uniform(rng) < 0.05 ? 3.0 * unit_exp(rng) : 0.0;
      double r = (wet ? intensity * spread : 0.0) + shower;
      r = std::round(r * 10.0) / 10.0;
      if (options.zero_rainfall) r = 0;
      v(t, g) = r;
      gate_sum += r;
    }
    const double gate_mean = gate_sum / static_cast<double>(gates.size());
    const double pre = std::max(0.0, gate_mean * (1.0 + 0.1 * normal(rng)));
    v(t, c_pre) = options.zero_rainfall ? 0.0 : pre;

    v(t, c_rhu) = std::clamp(72.0 + 8.0 * season + 10.0 * (wet ? 1.0 : 0.0) + 4.0 * normal(rng), 25.0, 100.0);
    v(t, c_ssd) = std::clamp(6.5 + 2.0 * std::sin(phase - 1.6) - 4.0 * (wet ? 1.0 : 0.0) + 1.2 * normal(rng), 0.0, 13.5);
    v(t, c_win) = std::max(0.2, 2.6 + 0.4 * std::sin(phase + 0.5) + 0.6 * normal(rng) + 0.8 * (wet ? 1.0 : 0.0));

    // Water level: annual cycle, decayed rainfall response, evaporation, AR(1) noise.
    runoff = 0.93 * runoff + 0.07 * gate_mean;
    evap = 0.97 * evap + 0.03 * (tm - 16.0);
    noise = 0.97 * noise + 0.015 * normal(rng);
    v(t, c_wl) = 8.6 + 0.35 * std::sin(phase - 2.2) + 0.09 * runoff - 0.025 * evap + noise;
  }
  return s;
}

// ---------------------------------------------------------------------------

PreparedData prepare(const RawSeries& raw, std::size_t lookback, std::size_t horizon, const SplitFractions& fractions,
                     const FeatureSchema& schema) {
  PreparedData p;
  p.series = fill_missing(raw);
  p.bounds = chronological_split(p.series.length(), fractions, lookback + horizon);
  p.normalizer = Normalizer::fit(p.series.values, p.bounds.train_end, p.series.columns);
  const Matrix normalized = p.normalizer.apply(p.series.values);
  p.dataset = make_windows(normalized, p.series.values, p.series.dates, schema.target_index(), lookback, horizon,
                           p.bounds);
  return p;
}

PreparedData prepare_with(const RawSeries& raw, const Normalizer& normalizer, std::size_t lookback,
                          std::size_t horizon, const SplitFractions& fractions, const FeatureSchema& schema) {
  if (normalizer.names() != raw.columns) {
    throw DataError("stored normalizer columns do not match the data file columns");
  }
  PreparedData p;
  p.series = fill_missing(raw);
  p.bounds = chronological_split(p.series.length(), fractions, lookback + horizon);
  p.normalizer = normalizer;
  const Matrix normalized = p.normalizer.apply(p.series.values);
  p.dataset = make_windows(normalized, p.series.values, p.series.dates, schema.target_index(), lookback, horizon,
                           p.bounds);
  return p;
}

}  // namespace hydro::data
