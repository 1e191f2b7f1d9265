// hydroformer: train, evaluate and explain encoder-decoder water level forecasters.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "hydroformer/commands.hpp"
#include "hydroformer/errors.hpp"

namespace fs = std::filesystem;
using namespace hydro;

namespace {

std::vector<std::size_t> split_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (auto lead : parse_leads(text)) out.push_back(lead);
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer water level forecasting with sparse attention and Shapley explanations"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::size_t jobs = 1;
  app.add_option("--config", config_path, "Run config (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for data generation, initialization, shuffling and sampling");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--jobs", jobs, "Maximum worker threads for Shapley estimation")->check(CLI::PositiveNumber);

  // datagen
  auto* datagen = app.add_subcommand("datagen", "Write a synthetic 19-feature daily series");
  std::size_t length = 2000;
  std::string datagen_file = "synthetic.csv";
  datagen->add_option("--length", length, "Number of days (>= 400)");
  datagen->add_option("--file", datagen_file, "File name inside --out");

  // train
  auto* train = app.add_subcommand("train", "Train the configured variant");
  std::string train_data;
  train->add_option("--data", train_data, "Data file (overrides data.path)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the test split");
  std::string eval_ckpt, eval_data, eval_leads, eval_mode, eval_predictor = "model";
  evaluate->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  evaluate->add_option("--data", eval_data, "Data file")->required();
  evaluate->add_option("--leads", eval_leads, "Comma-separated lead times, e.g. 1,3,5,7");
  evaluate->add_option("--r2-mode", eval_mode, "paper or standard");
  evaluate->add_option("--predictor", eval_predictor, "model, persistence or oracle")
      ->check(CLI::IsMember({"model", "persistence", "oracle"}));

  // predict
  auto* predict = app.add_subcommand("predict", "Forecast the horizon after one anchor date");
  std::string pred_ckpt, pred_data, pred_date;
  predict->add_option("--checkpoint", pred_ckpt, "Checkpoint file")->required();
  predict->add_option("--data", pred_data, "Data file")->required();
  predict->add_option("--date", pred_date, "Anchor date YYYY-MM-DD (default: last row)");

  // explain
  auto* explain = app.add_subcommand("explain", "Shapley attributions for one date or a test sample");
  std::string ex_ckpt, ex_data, ex_instance;
  bool ex_global = false, ex_exact = false, ex_allow_large = false;
  std::optional<std::size_t> ex_sample, ex_perms, ex_lead;
  explain->add_option("--checkpoint", ex_ckpt, "Checkpoint file")->required();
  explain->add_option("--data", ex_data, "Data file")->required();
  explain->add_option("--instance", ex_instance, "Anchor date of the explained window");
  explain->add_flag("--global", ex_global, "Global importance over test windows");
  explain->add_option("--sample", ex_sample, "Number of test windows for --global");
  explain->add_flag("--exact", ex_exact, "Exact coalition enumeration instead of sampling");
  explain->add_flag("--allow-large-exact", ex_allow_large, "Permit exact enumeration above the feature cap");
  explain->add_option("--permutations", ex_perms, "Permutations for the sampled estimator");
  explain->add_option("--lead", ex_lead, "Explained lead time");

  // bench
  auto* bench = app.add_subcommand("bench", "Time dense vs top-k attention (forward + backward)");
  std::string bench_lengths = "64,128,256", bench_ks = "8,L/4,L";
  std::size_t bench_repeats = 5, bench_warmup = 2, bench_dim = 32;
  bench->add_option("--lengths", bench_lengths, "Sequence lengths");
  bench->add_option("--ks", bench_ks, "k values: integers, L or L/N");
  bench->add_option("--repeats", bench_repeats, "Timed repeats per point");
  bench->add_option("--warmup", bench_warmup, "Untimed warmup iterations");
  bench->add_option("--dim", bench_dim, "Head dimension");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kConfigError;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (seed) {
      auto kv = config.to_kv();
      kv["train.seed"] = std::to_string(*seed);
      config = RunConfig::from_kv(kv, config);
    }
    const fs::path out = out_dir.empty() ? fs::path(config.out_dir) : fs::path(out_dir);
    const std::uint64_t run_seed = config.train.seed;

    if (*datagen) {
      cli::cmd_datagen(run_seed, length, out / datagen_file);
      std::cout << (out / datagen_file).string() << '\n';
    } else if (*train) {
      if (!train_data.empty()) config.data_path = train_data;
      auto result = cli::cmd_train(config, out, &std::cerr);
      std::cout << result.checkpoint.string() << ' ' << result.digest << '\n';
    } else if (*evaluate) {
      cli::EvaluateOptions o;
      o.checkpoint = eval_ckpt;
      o.data = eval_data;
      if (!eval_leads.empty()) o.leads = split_sizes(eval_leads);
      if (!eval_mode.empty()) o.r2_mode = metrics::parse_r2_mode(eval_mode);
      o.predictor = eval_predictor;
      o.out_dir = out;
      std::cout << cli::cmd_evaluate(o).to_json();
    } else if (*predict) {
      cli::PredictOptions o;
      o.checkpoint = pred_ckpt;
      o.data = pred_data;
      if (!pred_date.empty()) o.anchor_date = pred_date;
      o.out_file = out / "forecast.csv";
      const auto f = cli::cmd_predict(o);
      for (std::size_t h = 0; h < f.values.size(); ++h) {
        std::printf("%s %.4f\n", data::format_date(f.dates[h]).c_str(), f.values[h]);
      }
    } else if (*explain) {
      cli::ExplainOptions o;
      o.checkpoint = ex_ckpt;
      o.data = ex_data;
      if (!ex_instance.empty()) o.instance_date = ex_instance;
      o.global = ex_global;
      o.shap = config.shap;
      if (ex_exact) o.shap.estimator = shap::Estimator::exact;
      if (ex_allow_large) o.shap.allow_large_exact = true;
      if (ex_sample) o.shap.sample = *ex_sample;
      if (ex_perms) o.shap.permutations = *ex_perms;
      if (ex_lead) o.shap.lead = *ex_lead;
      o.seed = run_seed;
      o.jobs = jobs;
      o.out_dir = out;
      const auto r = cli::cmd_explain(o, &std::cerr);
      if (r.global) {
        for (const auto& g : r.global->group_shares) std::printf("%s %.2f%%\n", g.group.c_str(), g.percent);
        const auto top = r.global->ranking().front();
        std::printf("top feature %s %.2f%%\n", r.global->features[top].c_str(), r.global->percent[top]);
      }
      if (r.force) {
        std::printf("base %.4f -> prediction %.4f\n", r.force->base, r.force->fx);
      }
    } else if (*bench) {
      cli::BenchOptions o;
      o.lengths = split_sizes(bench_lengths);
      o.ks = split_list(bench_ks);
      o.repeats = bench_repeats;
      o.warmup = bench_warmup;
      o.d_head = bench_dim;
      o.seed = run_seed;
      o.out_file = out / "bench.csv";
      cli::write_bench_csv(std::cout, cli::cmd_bench(o));
    }
    return cli::kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return cli::kDataError;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return cli::kDataError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return cli::kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kFailure;
  }
}
