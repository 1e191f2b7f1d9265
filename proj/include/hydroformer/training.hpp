#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hydroformer/data.hpp"
#include "hydroformer/metrics.hpp"
#include "hydroformer/model.hpp"

namespace hydro::training {

/// Defaults: batch 32, learning rate 1e-4, 50 epochs, patience 5.
struct TrainConfig {
  std::size_t batch_size = 32;
  real learning_rate = real(1e-4);
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  real min_delta = 0;
  std::uint64_t seed = 1;
  bool shuffle = true;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv, TrainConfig base);
};

struct AdamConfig {
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

/// First/second moment buffers mirroring a fixed list of parameters.
class AdamState {
 public:
  explicit AdamState(const std::vector<Tensor>& params, AdamConfig config = {});
  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<real>>& first_moment() const { return m_; }
  const std::vector<std::vector<real>>& second_moment() const { return v_; }

 private:
  friend void adam_step(std::vector<Tensor>& params, AdamState& state, real lr);
  AdamConfig config_;
  std::vector<std::vector<real>> m_, v_;
  std::size_t step_ = 0;
};

/// Bias-corrected Adam update using each parameter's accumulated gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state, real lr);

/// Tracks validation loss. An epoch improves when loss < best - min_delta;
/// training stops once more than `patience` consecutive epochs fail to improve.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, real min_delta);
  /// Returns true when this epoch is the new best.
  bool update(real val_loss);
  bool should_stop() const { return stale_ > patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 0-based
  real best_loss() const { return best_; }

 private:
  std::size_t patience_;
  real min_delta_;
  real best_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t epochs_ = 0;
  std::size_t stale_ = 0;
};

struct EpochLoss {
  std::size_t epoch = 0;  // 1-based
  real train_loss = 0;
  real val_loss = 0;
};

struct LossCurve {
  std::vector<EpochLoss> epochs;
  std::size_t best_epoch = 0;  // 1-based epoch whose weights were restored
  bool stopped_early = false;

  real best_val_loss() const;
  /// "epoch,train_loss,val_loss" rows with full precision.
  void write_csv(std::ostream& out) const;
};

/// Mean teacher-forced MSE over `samples`, without recording gradients.
real evaluate_loss(const TransformerModel& model, const std::vector<const data::Sample*>& samples);

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Mini-batch Adam on the train split with early stopping on the val split.
/// The parameters of the best validation epoch are restored before returning.
LossCurve fit(TransformerModel& model, const data::WindowedDataset& dataset, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

/// Normalized-space forecaster: (sample, steps) -> `steps` predictions.
using Predictor = std::function<std::vector<real>(const data::Sample&, std::size_t)>;

Predictor model_predictor(const TransformerModel& model);
/// Repeats the last observed target value.
Predictor persistence_predictor(std::size_t target_feature);
/// Returns the true future targets (pipeline sanity check).
Predictor oracle_predictor();

struct LeadSeries {
  std::size_t lead = 0;
  std::vector<data::Date> dates;  // date being predicted
  std::vector<double> actual;
  std::vector<double> predicted;

  void write_csv(std::ostream& out) const;
};

struct Evaluation {
  metrics::MetricReport report;
  std::vector<LeadSeries> series;
};

/// Rolls out every sample of `split`, denormalizes step `lead` and scores it.
Evaluation evaluate_split(const Predictor& predictor, const data::WindowedDataset& dataset, data::Split split,
                          const std::vector<std::size_t>& leads, const data::Normalizer& normalizer,
                          metrics::R2Mode mode);

}  // namespace hydro::training
