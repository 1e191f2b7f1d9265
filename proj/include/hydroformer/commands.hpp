#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hydroformer/checkpoint.hpp"
#include "hydroformer/config.hpp"
#include "hydroformer/shap.hpp"
#include "hydroformer/training.hpp"

namespace hydro::cli {

namespace fs = std::filesystem;

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

/// Writes a schema-conformant synthetic table.
void cmd_datagen(std::uint64_t seed, std::size_t length, const fs::path& out_file);

struct TrainResult {
  fs::path run_dir;
  fs::path checkpoint;
  std::string digest;  // SHA-256 of the checkpoint file
  training::LossCurve curve;
};

/// Writes checkpoint.bin, checkpoint.sha256, loss_curve.csv and config.resolved into `run_dir`.
TrainResult cmd_train(const RunConfig& config, const fs::path& run_dir, std::ostream* log = nullptr);

struct EvaluateOptions {
  fs::path checkpoint;
  fs::path data;
  std::optional<std::vector<std::size_t>> leads;  // default: leads stored with the run
  std::optional<metrics::R2Mode> r2_mode;
  std::string predictor = "model";  // model | persistence | oracle
  fs::path out_dir;
};

/// Test-split metrics (metrics.json) plus predictions_lead<L>.csv per lead.
metrics::MetricReport cmd_evaluate(const EvaluateOptions& options);

struct PredictOptions {
  fs::path checkpoint;
  fs::path data;
  std::optional<std::string> anchor_date;  // default: last row of the file
  fs::path out_file;
};

struct Forecast {
  std::vector<data::Date> dates;
  std::vector<double> values;
};

Forecast cmd_predict(const PredictOptions& options);

struct ExplainOptions {
  fs::path checkpoint;
  fs::path data;
  std::optional<std::string> instance_date;
  bool global = false;
  ShapSettings shap;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  fs::path out_dir;
};

struct ExplainResult {
  std::vector<data::Date> anchors;
  std::vector<shap::Explanation> explanations;
  std::optional<shap::GlobalImportance> global;
  std::optional<shap::ForceReport> force;
};

/// Per-instance force report and/or global importance + beeswarm tables.
ExplainResult cmd_explain(const ExplainOptions& options, std::ostream* log = nullptr);

struct BenchOptions {
  std::vector<std::size_t> lengths = {64, 128, 256};
  std::vector<std::string> ks = {"8", "L/4", "L"};  // integers or expressions of L: L, L/<int>
  std::size_t d_head = 32;
  std::size_t repeats = 5;
  std::size_t warmup = 2;
  std::uint64_t seed = 1;
  fs::path out_file;  // empty: no file
};

struct BenchRow {
  std::string mode;  // dense | sparse
  std::size_t length = 0;
  std::size_t k = 0;
  std::size_t repeats = 0;
  double min_ms = 0;
  double median_ms = 0;
  double max_abs_diff = 0;  // dense vs sparse outputs for this (L, k)
  std::string correctness;  // pass | fail (k >= L), n/a otherwise
};

/// Resolves "8", "L", "L/4" against a sequence length.
std::size_t resolve_bench_k(const std::string& expr, std::size_t length);

/// Forward+backward wall-clock of single-head attention, dense vs top-k.
std::vector<BenchRow> cmd_bench(const BenchOptions& options);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace hydro::cli
