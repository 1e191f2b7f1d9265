#include "hydroformer/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <thread>

#include <json.hpp>

#include "hydroformer/attention.hpp"
#include "hydroformer/errors.hpp"

namespace hydro::cli {

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void ensure_dir(const fs::path& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

double config_double(const checkpoint::Checkpoint& ckpt, const std::string& key, double fallback) {
  auto it = ckpt.config.find(key);
  return it == ckpt.config.end() ? fallback : std::stod(it->second);
}

data::SplitFractions stored_fractions(const checkpoint::Checkpoint& ckpt) {
  data::SplitFractions f;
  f.train = config_double(ckpt, "data.train_fraction", f.train);
  f.val = config_double(ckpt, "data.val_fraction", f.val);
  f.test = config_double(ckpt, "data.test_fraction", f.test);
  return f;
}

struct LoadedRun {
  checkpoint::Checkpoint ckpt;
  TransformerModel model;
  data::PreparedData prep;
};

LoadedRun load_run(const fs::path& checkpoint_path, const fs::path& data_path) {
  auto ckpt = checkpoint::load(checkpoint_path);
  auto model = ckpt.restore_model();
  const auto& mc = model.config();
  auto prep = data::prepare_with(data::load_table(data_path), ckpt.normalizer, mc.lookback, mc.horizon,
                                 stored_fractions(ckpt));
  return LoadedRun{std::move(ckpt), std::move(model), std::move(prep)};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_datagen(std::uint64_t seed, std::size_t length, const fs::path& out_file) {
  const auto series = data::synth_generate(seed, length);
  if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
  data::save_table(out_file, series);
}

TrainResult cmd_train(const RunConfig& config, const fs::path& run_dir, std::ostream* log) {
  config.validate();
  if (config.data_path.empty()) throw ConfigError("data.path is not set");
  const auto prep = data::prepare(data::load_table(config.data_path), config.lookback, config.horizon, config.fractions);
  TransformerModel model(config.resolved_model(), config.train.seed);
  if (log) {
    *log << model.config().variant_name() << ": " << model.parameter_count() << " parameters, "
         << prep.dataset.count(data::Split::train) << " train / " << prep.dataset.count(data::Split::val) << " val / "
         << prep.dataset.count(data::Split::test) << " test windows\n";
  }
  ensure_dir(run_dir);
  write_file(run_dir / "config.resolved", config.resolved_text());

  TrainResult result;
  result.run_dir = run_dir;
  result.curve = training::fit(model, prep.dataset, config.train, [&](const training::EpochLoss& e) {
    if (log) *log << "epoch " << e.epoch << " train " << fmt(e.train_loss) << " val " << fmt(e.val_loss) << '\n';
  });
  if (log) *log << "best epoch " << result.curve.best_epoch << " (val " << fmt(result.curve.best_val_loss()) << ")\n";

  {
    auto out = open_out(run_dir / "loss_curve.csv");
    result.curve.write_csv(out);
  }
  result.checkpoint = run_dir / "checkpoint.bin";
  checkpoint::save(result.checkpoint, checkpoint::capture(model, prep.normalizer, config.to_kv()));
  result.digest = checkpoint::sha256_file(result.checkpoint);
  write_file(run_dir / "checkpoint.sha256", result.digest + "  checkpoint.bin\n");
  return result;
}

metrics::MetricReport cmd_evaluate(const EvaluateOptions& options) {
  auto run = load_run(options.checkpoint, options.data);
  const auto& mc = run.model.config();

  std::vector<std::size_t> leads = {1, 3, 5, 7};
  if (options.leads) {
    leads = *options.leads;
  } else if (auto it = run.ckpt.config.find("eval.leads"); it != run.ckpt.config.end()) {
    leads = parse_leads(it->second);
  }
  metrics::R2Mode mode = metrics::R2Mode::paper;
  if (options.r2_mode) {
    mode = *options.r2_mode;
  } else if (auto it = run.ckpt.config.find("eval.r2_mode"); it != run.ckpt.config.end()) {
    mode = metrics::parse_r2_mode(it->second);
  }

  training::Predictor predictor;
  std::string name = mc.variant_name();
  if (options.predictor == "model") {
    predictor = training::model_predictor(run.model);
  } else if (options.predictor == "persistence") {
    predictor = training::persistence_predictor(mc.target_feature);
    name = "persistence";
  } else if (options.predictor == "oracle") {
    predictor = training::oracle_predictor();
    name = "oracle";
  } else {
    throw ConfigError("unknown predictor '" + options.predictor + "' (expected model, persistence or oracle)");
  }

  auto ev = training::evaluate_split(predictor, run.prep.dataset, data::Split::test, leads, run.prep.normalizer, mode);
  ev.report.model = name;
  ensure_dir(options.out_dir);
  write_file(options.out_dir / "metrics.json", ev.report.to_json());
  for (const auto& s : ev.series) {
    auto out = open_out(options.out_dir / ("predictions_lead" + std::to_string(s.lead) + ".csv"));
    s.write_csv(out);
  }
  return ev.report;
}

Forecast cmd_predict(const PredictOptions& options) {
  const auto ckpt = checkpoint::load(options.checkpoint);
  const auto model = ckpt.restore_model();
  const auto& mc = model.config();
  const auto series = data::fill_missing(data::load_table(options.data));
  const auto normalized = ckpt.normalizer.apply(series.values);

  std::size_t anchor = series.length() - 1;
  if (options.anchor_date) {
    const auto d = data::parse_date(*options.anchor_date);
    const auto it = std::find(series.dates.begin(), series.dates.end(), d);
    if (it == series.dates.end()) throw DataError("date " + *options.anchor_date + " is not in " + options.data.string());
    anchor = static_cast<std::size_t>(it - series.dates.begin());
  }
  if (anchor + 1 < mc.lookback) {
    throw DataError("need " + std::to_string(mc.lookback) + " rows up to the anchor date, have " +
                    std::to_string(anchor + 1));
  }
  const std::size_t first = anchor + 1 - mc.lookback;
  std::vector<real> window;
  for (std::size_t r = first; r <= anchor; ++r) {
    for (std::size_t c = 0; c < normalized.cols; ++c) window.push_back(static_cast<real>(normalized(r, c)));
  }
  const auto preds = model.predict(Tensor({mc.lookback, normalized.cols}, std::move(window)), mc.horizon);

  Forecast f;
  for (std::size_t h = 0; h < preds.size(); ++h) {
    f.dates.push_back(series.dates[anchor] + std::chrono::days{static_cast<long>(h + 1)});
    f.values.push_back(ckpt.normalizer.invert_one(mc.target_feature, static_cast<double>(preds[h])));
  }
  if (!options.out_file.empty()) {
    if (options.out_file.has_parent_path()) ensure_dir(options.out_file.parent_path());
    auto out = open_out(options.out_file);
    out << "lead,date,prediction\n";
    for (std::size_t h = 0; h < f.values.size(); ++h) {
      out << h + 1 << ',' << data::format_date(f.dates[h]) << ',' << fmt(f.values[h]) << '\n';
    }
  }
  return f;
}

ExplainResult cmd_explain(const ExplainOptions& options, std::ostream* log) {
  if (!options.instance_date && !options.global) throw ConfigError("explain: pass --instance DATE or --global");
  if (options.jobs == 0) throw ConfigError("--jobs must be at least 1");
  const auto run = load_run(options.checkpoint, options.data);
  const auto& mc = run.model.config();
  const auto& schema = data::FeatureSchema::standard();
  const std::size_t lead = options.shap.lead;
  if (lead < 1 || lead > mc.horizon) {
    throw ConfigError("shap lead " + std::to_string(lead) + " outside [1, " + std::to_string(mc.horizon) + "]");
  }
  if (options.shap.estimator == shap::Estimator::exact && options.shap.allow_large_exact &&
      schema.size() > options.shap.exact_cap && log) {
    *log << "warning: exact Shapley over " << schema.size() << " features evaluates 2^" << schema.size()
         << " coalitions per instance; this is slow\n";
  }

  std::vector<const data::Sample*> chosen;
  if (options.instance_date) {
    const auto d = data::parse_date(*options.instance_date);
    for (const auto& s : run.prep.dataset.samples) {
      if (s.anchor_date == d) chosen.push_back(&s);
    }
    if (chosen.empty()) {
      throw DataError("no complete window is anchored at " + *options.instance_date +
                      " (the date must be the last day of a lookback window with " + std::to_string(mc.horizon) +
                      " days of targets inside the same split)");
    }
  } else {
    const auto test = run.prep.dataset.in(data::Split::test);
    if (test.empty()) throw DataError("test split has no windows");
    const std::size_t n = std::min(options.shap.sample, test.size());
    for (std::size_t j = 0; j < n; ++j) chosen.push_back(test[j * test.size() / n]);
  }

  std::vector<real> baseline(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    baseline[c] = static_cast<real>(run.prep.normalizer.apply_one(c, run.prep.normalizer.mean()[c]));
  }
  const auto& model = run.model;
  const auto& normalizer = run.prep.normalizer;
  const std::size_t target = mc.target_feature;
  shap::WindowFunction f = [&model, &normalizer, lead, target](const Tensor& w) {
    return normalizer.invert_one(target, static_cast<double>(model.predict(w, lead)[lead - 1]));
  };

  ExplainResult result;
  result.explanations.resize(chosen.size());
  auto explain_one = [&](std::size_t j) {
    shap::ValueFunction vf(f, chosen[j]->window, baseline);
    if (options.shap.estimator == shap::Estimator::exact) {
      result.explanations[j] = shap::exact_shapley(vf, {options.shap.exact_cap, options.shap.allow_large_exact});
    } else {
      result.explanations[j] = shap::sampled_shapley(vf, options.shap.permutations, options.seed + j);
    }
  };
  // Fail fast (cap errors etc.) before spawning workers.
  explain_one(0);
  const std::size_t workers = std::min(options.jobs, chosen.size());
  if (workers <= 1) {
    for (std::size_t j = 1; j < chosen.size(); ++j) explain_one(j);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t j = 1 + w; j < chosen.size(); j += workers) explain_one(j);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (const auto* s : chosen) result.anchors.push_back(s->anchor_date);

  std::vector<std::string> names, groups;
  for (const auto& spec : schema.features()) {
    names.push_back(spec.name);
    groups.push_back(data::to_string(spec.group));
  }

  ensure_dir(options.out_dir);
  nlohmann::ordered_json settings;
  settings["estimator"] = shap::to_string(options.shap.estimator);
  if (options.shap.estimator == shap::Estimator::sampled) {
    settings["permutations"] = options.shap.permutations;
    settings["seed"] = options.seed;
  } else {
    settings["exact_cap"] = options.shap.exact_cap;
    settings["allow_large_exact"] = options.shap.allow_large_exact;
  }
  settings["lead"] = lead;
  settings["baseline"] = "training mean";
  settings["instances"] = chosen.size();
  settings["mode"] = options.global ? "global" : "instance";

  if (options.instance_date) {
    const auto& e = result.explanations.front();
    result.force = shap::force_report(e, names);
    const auto tag = *options.instance_date;
    {
      auto out = open_out(options.out_dir / ("force_" + tag + ".csv"));
      result.force->write_csv(out);
    }
    auto out = open_out(options.out_dir / ("explanation_" + tag + ".csv"));
    shap::write_explanation(out, e, names);
    settings["additivity_gap"] = e.additivity_gap();
    settings["tolerance"] = e.tolerance();
  }
  if (options.global) {
    result.global = shap::global_importance(result.explanations, names, groups);
    {
      auto out = open_out(options.out_dir / "global_importance.csv");
      result.global->write_csv(out);
    }
    {
      auto out = open_out(options.out_dir / "group_shares.csv");
      out << "group,percent\n";
      for (const auto& g : result.global->group_shares) out << g.group << ',' << fmt(g.percent) << '\n';
    }
    // Raw value shown next to each attribution: the feature on the anchor day.
    std::vector<std::vector<double>> raw;
    for (const auto* s : chosen) {
      std::vector<double> row(schema.size());
      for (std::size_t c = 0; c < schema.size(); ++c) {
        row[c] = normalizer.invert_one(c, static_cast<double>(s->window.at(s->window.rows() - 1, c)));
      }
      raw.push_back(std::move(row));
    }
    auto out = open_out(options.out_dir / "beeswarm.csv");
    shap::write_beeswarm(out, shap::beeswarm_export(result.explanations, raw, names));
    double worst = 0;
    for (const auto& e : result.explanations) worst = std::max(worst, std::abs(e.additivity_gap()));
    settings["max_additivity_gap"] = worst;
  }
  write_file(options.out_dir / "explain_settings.json", settings.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------

std::size_t resolve_bench_k(const std::string& expr, std::size_t length) {
  std::size_t k = 0;
  if (expr == "L") {
    k = length;
  } else if (expr.rfind("L/", 0) == 0) {
    std::size_t div = 0;
    try {
      div = std::stoul(expr.substr(2));
    } catch (const std::exception&) {
    }
    if (div == 0) throw ConfigError("bench k '" + expr + "': bad divisor");
    k = length / div;
  } else {
    try {
      std::size_t pos = 0;
      k = std::stoul(expr, &pos);
      if (pos != expr.size()) k = 0;
    } catch (const std::exception&) {
      k = 0;
    }
  }
  if (k == 0) throw ConfigError("bench k '" + expr + "' must resolve to a positive integer (use N, L or L/N)");
  return k;
}

std::vector<BenchRow> cmd_bench(const BenchOptions& options) {
  if (options.lengths.empty() || options.ks.empty()) throw ConfigError("bench: empty sweep list");
  if (options.repeats == 0) throw ConfigError("bench: repeats must be positive");
  if (options.d_head == 0) throw ConfigError("bench: d_head must be positive");

  std::vector<BenchRow> rows;
  for (auto length : options.lengths) {
    if (length == 0) throw ConfigError("bench: lengths must be positive");
    std::mt19937_64 rng(options.seed + length);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto random_tensor = [&] {
      std::vector<real> v(length * options.d_head);
      for (auto& x : v) x = static_cast<real>(normal(rng));
      return Tensor({length, options.d_head}, std::move(v), true);
    };
    Tensor q = random_tensor(), k = random_tensor(), v = random_tensor();

    for (const auto& expr : options.ks) {
      const std::size_t top_k = resolve_bench_k(expr, length);
      double diff = 0;
      {
        NoGradGuard guard;
        const Tensor dense_out = attention::dense_attention(q, k, v);
        const Tensor sparse_out = attention::sparse_attention(q, k, v, top_k);
        const auto dense = dense_out.data();
        const auto sparse = sparse_out.data();
        for (std::size_t i = 0; i < dense.size(); ++i) {
          diff = std::max(diff, std::abs(static_cast<double>(dense[i]) - static_cast<double>(sparse[i])));
        }
      }
      const std::string correctness = top_k >= length ? (diff <= 1e-12 ? "pass" : "fail") : "n/a";

      for (const std::string mode : {"dense", "sparse"}) {
        const auto am =
            mode == "dense" ? attention::AttentionMode::dense() : attention::AttentionMode::top_k(top_k);
        std::vector<double> times;
        for (std::size_t it = 0; it < options.warmup + options.repeats; ++it) {
          const auto t0 = std::chrono::steady_clock::now();
          {
            Tape tape;
            tape.backward(ops::sum(attention::attend(q, k, v, am)));
          }
          const auto t1 = std::chrono::steady_clock::now();
          q.zero_grad();
          k.zero_grad();
          v.zero_grad();
          if (it >= options.warmup) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(times.begin(), times.end());
        const std::size_t n = times.size();
        const double median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
        rows.push_back({mode, length, top_k, n, times.front(), median, diff, correctness});
      }
    }
  }
  if (!options.out_file.empty()) {
    if (options.out_file.has_parent_path()) ensure_dir(options.out_file.parent_path());
    auto out = open_out(options.out_file);
    write_bench_csv(out, rows);
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "mode,L,k,repeats,min_ms,median_ms,max_abs_diff,correctness\n";
  for (const auto& r : rows) {
    out << r.mode << ',' << r.length << ',' << r.k << ',' << r.repeats << ',' << fmt(r.min_ms) << ','
        << fmt(r.median_ms) << ',' << fmt(r.max_abs_diff) << ',' << r.correctness << '\n';
  }
}

}  // namespace hydro::cli
