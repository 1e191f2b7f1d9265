#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hydroformer/data.hpp"
#include "hydroformer/metrics.hpp"
#include "hydroformer/model.hpp"
#include "hydroformer/shap.hpp"
#include "hydroformer/training.hpp"

namespace hydro {

struct ShapSettings {
  shap::Estimator estimator = shap::Estimator::sampled;
  std::size_t permutations = 64;
  std::size_t exact_cap = 12;
  bool allow_large_exact = false;
  std::size_t lead = 1;
  std::size_t sample = 64;
};

/// Everything a run needs. Text form is one `section.key = value` per line;
/// '#' starts a comment. Unknown keys are rejected.
///
///   model.preset = desk            # paper (default) or desk; applied before other model keys
///   model.attention_mode = sparse
///   train.learning_rate = 1e-4
///   data.path = series.csv
///   eval.leads = 1,3,5,7
struct RunConfig {
  std::string model_preset = "paper";
  ModelConfig model;  // lookback/horizon come from data.*
  training::TrainConfig train;
  std::string data_path;
  std::size_t lookback = 30;
  std::size_t horizon = 7;
  data::SplitFractions fractions;
  std::vector<std::size_t> leads = {1, 3, 5, 7};
  metrics::R2Mode r2_mode = metrics::R2Mode::paper;
  ShapSettings shap;
  std::string out_dir = "run";

  /// Model config with lookback/horizon folded in, validated.
  ModelConfig resolved_model() const;
  void validate() const;

  std::map<std::string, std::string> to_kv() const;
  /// Sorted `key = value` lines; parse(resolved_text()) reproduces this config.
  std::string resolved_text() const;

  /// Applies `kv` on top of `base`.
  static RunConfig from_kv(const std::map<std::string, std::string>& kv, RunConfig base);
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  static const std::set<std::string>& known_keys();
};

/// Splits "key = value" lines; rejects malformed and duplicate lines.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::vector<std::size_t> parse_leads(const std::string& text);

}  // namespace hydro
