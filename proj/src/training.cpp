#include "hydroformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "hydroformer/errors.hpp"

namespace hydro::training {

namespace {

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    if constexpr (std::is_floating_point_v<T>) {
      const double v = std::stod(value, &pos);
      if (pos != value.size() || !std::isfinite(v)) throw std::invalid_argument("bad");
      return static_cast<T>(v);
    } else {
      const long long v = std::stoll(value, &pos);
      if (pos != value.size() || v < 0) throw std::invalid_argument("bad");
      return static_cast<T>(v);
    }
  } catch (const std::exception&) {
    throw ConfigError(key + ": invalid value '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

Tensor decoder_inputs(const data::Sample& s, std::size_t target_feature) {
  std::vector<real> in;
  in.reserve(s.targets.size());
  in.push_back(s.window.at(s.window.rows() - 1, target_feature));
  for (std::size_t h = 0; h + 1 < s.targets.size(); ++h) in.push_back(s.targets[h]);
  const std::size_t n = in.size();
  return Tensor({n, 1}, std::move(in));
}

Tensor target_tensor(const data::Sample& s) { return Tensor({s.targets.size(), 1}, s.targets); }

}  // namespace

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(learning_rate >= 0)) throw ConfigError("train.learning_rate must be non-negative");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be positive");
  if (patience == 0) throw ConfigError("train.patience must be positive");
  if (!(min_delta >= 0)) throw ConfigError("train.min_delta must be non-negative");
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  return {
      {"train.batch_size", std::to_string(batch_size)},
      {"train.learning_rate", format_real(learning_rate)},
      {"train.max_epochs", std::to_string(max_epochs)},
      {"train.patience", std::to_string(patience)},
      {"train.min_delta", format_real(min_delta)},
      {"train.seed", std::to_string(seed)},
      {"train.shuffle", shuffle ? "true" : "false"},
  };
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) { return from_kv(kv, TrainConfig{}); }

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv, TrainConfig c) {
  for (const auto& [key, value] : kv) {
    if (key == "train.batch_size") c.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "train.learning_rate") c.learning_rate = parse_number<real>(key, value);
    else if (key == "train.max_epochs") c.max_epochs = parse_number<std::size_t>(key, value);
    else if (key == "train.patience") c.patience = parse_number<std::size_t>(key, value);
    else if (key == "train.min_delta") c.min_delta = parse_number<real>(key, value);
    else if (key == "train.seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "train.shuffle") c.shuffle = parse_bool(key, value);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.numel(), real{0});
    v_.emplace_back(p.numel(), real{0});
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& state, real lr) {
  if (params.size() != state.m_.size()) {
    throw ShapeError("adam_step: optimizer tracks " + std::to_string(state.m_.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].numel() != state.m_[i].size()) throw ShapeError("adam_step: parameter shape changed");
    if (!params[i].has_grad()) continue;
    for (real g : params[i].grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
    }
  }
  ++state.step_;
  const auto& c = state.config_;
  const real t = static_cast<real>(state.step_);
  const real bc1 = real(1) - std::pow(c.beta1, t);
  const real bc2 = real(1) - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::vector<real> g = params[i].grad();
    auto theta = params[i].mutable_data();
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = c.beta1 * m[j] + (real(1) - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (real(1) - c.beta2) * g[j] * g[j];
      const real m_hat = m[j] / bc1;
      const real v_hat = v[j] / bc2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

// ---------------------------------------------------------------------------

EarlyStopping::EarlyStopping(std::size_t patience, real min_delta) : patience_(patience), min_delta_(min_delta) {}

bool EarlyStopping::update(real val_loss) {
  const std::size_t epoch = epochs_++;
  if (epoch == 0 || val_loss < best_ - min_delta_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

real LossCurve::best_val_loss() const {
  if (epochs.empty()) throw std::logic_error("empty loss curve");
  return epochs.at(best_epoch - 1).val_loss;
}

void LossCurve::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : epochs) out << e.epoch << ',' << format_real(e.train_loss) << ',' << format_real(e.val_loss) << '\n';
}

real evaluate_loss(const TransformerModel& model, const std::vector<const data::Sample*>& samples) {
  if (samples.empty()) throw DataError("evaluate_loss: no samples");
  NoGradGuard no_grad;
  const std::size_t target = model.config().target_feature;
  real total = 0;
  for (const auto* s : samples) {
    total += ops::mse(model.forward(s->window, decoder_inputs(*s, target)), target_tensor(*s)).item();
  }
  return total / static_cast<real>(samples.size());
}

LossCurve fit(TransformerModel& model, const data::WindowedDataset& dataset, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  config.validate();
  const auto train = dataset.in(data::Split::train);
  const auto val = dataset.in(data::Split::val);
  if (train.empty() || val.empty()) throw DataError("fit: train and validation splits must be non-empty");
  if (dataset.horizon != model.config().horizon || dataset.lookback != model.config().lookback) {
    throw ConfigError("fit: dataset lookback/horizon (" + std::to_string(dataset.lookback) + "/" +
                      std::to_string(dataset.horizon) + ") do not match the model (" +
                      std::to_string(model.config().lookback) + "/" + std::to_string(model.config().horizon) + ")");
  }

  const std::size_t target = model.config().target_feature;
  std::vector<Tensor> params = model.parameter_list();
  AdamState adam(params);
  EarlyStopping stopper(config.patience, config.min_delta);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  LossCurve curve;
  auto best = model.snapshot();
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    real train_total = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Tape tape;
      Tensor batch_loss;
      try {
        for (std::size_t b = start; b < end; ++b) {
          const auto& s = *train[order[b]];
          Tensor loss = ops::mse(model.forward(s.window, decoder_inputs(s, target)), target_tensor(s));
          train_total += loss.item();
          batch_loss = batch_loss.defined() ? ops::add(batch_loss, loss) : loss;
        }
        batch_loss = ops::scale(batch_loss, real(1) / static_cast<real>(end - start));
        tape.backward(batch_loss);
        adam_step(params, adam, config.learning_rate);
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", batch starting at sample " +
                           std::to_string(start) + ": " + e.what());
      }
      for (auto& p : params) p.zero_grad();
    }

    EpochLoss row;
    row.epoch = epoch;
    row.train_loss = train_total / static_cast<real>(train.size());
    row.val_loss = evaluate_loss(model, val);
    if (!std::isfinite(row.val_loss)) throw NumericError("training aborted: non-finite validation loss");
    curve.epochs.push_back(row);
    if (on_epoch) on_epoch(row);

    if (stopper.update(row.val_loss)) best = model.snapshot();
    if (stopper.should_stop()) {
      curve.stopped_early = true;
      break;
    }
  }
  curve.best_epoch = stopper.best_epoch() + 1;
  model.load_values(best);
  return curve;
}

// ---------------------------------------------------------------------------

Predictor model_predictor(const TransformerModel& model) {
  return [&model](const data::Sample& s, std::size_t steps) { return model.predict(s.window, steps); };
}

Predictor persistence_predictor(std::size_t target_feature) {
  return [target_feature](const data::Sample& s, std::size_t steps) {
    return std::vector<real>(steps, s.window.at(s.window.rows() - 1, target_feature));
  };
}

Predictor oracle_predictor() {
  return [](const data::Sample& s, std::size_t steps) {
    return std::vector<real>(s.targets.begin(), s.targets.begin() + static_cast<std::ptrdiff_t>(steps));
  };
}

void LeadSeries::write_csv(std::ostream& out) const {
  out << "date,actual,predicted\n";
  for (std::size_t i = 0; i < dates.size(); ++i) {
    out << data::format_date(dates[i]) << ',' << format_real(actual[i]) << ',' << format_real(predicted[i]) << '\n';
  }
}

Evaluation evaluate_split(const Predictor& predictor, const data::WindowedDataset& dataset, data::Split split,
                          const std::vector<std::size_t>& leads, const data::Normalizer& normalizer,
                          metrics::R2Mode mode) {
  if (leads.empty()) throw ConfigError("evaluate: no lead times requested");
  std::size_t max_lead = 0;
  for (auto lead : leads) {
    if (lead < 1 || lead > dataset.horizon) {
      throw ConfigError("evaluate: lead " + std::to_string(lead) + " exceeds the horizon " +
                        std::to_string(dataset.horizon));
    }
    max_lead = std::max(max_lead, lead);
  }
  const auto samples = dataset.in(split);
  if (samples.size() < 2) throw DataError("evaluate: split " + data::to_string(split) + " has fewer than 2 samples");

  Evaluation ev;
  ev.report.split = data::to_string(split);
  for (auto lead : leads) ev.series.push_back(LeadSeries{lead, {}, {}, {}});
  for (const auto* s : samples) {
    const auto preds = predictor(*s, max_lead);
    for (std::size_t i = 0; i < leads.size(); ++i) {
      const std::size_t lead = leads[i];
      ev.series[i].dates.push_back(s->anchor_date + std::chrono::days{static_cast<long>(lead)});
      ev.series[i].actual.push_back(s->raw_targets[lead - 1]);
      ev.series[i].predicted.push_back(
          normalizer.invert_one(dataset.target_feature, static_cast<double>(preds[lead - 1])));
    }
  }
  for (const auto& series : ev.series) {
    ev.report.leads.push_back(metrics::compute(series.lead, series.actual, series.predicted, mode));
  }
  return ev;
}

}  // namespace hydro::training
