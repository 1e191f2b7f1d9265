#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hydroformer/commands.hpp"
#include "hydroformer/errors.hpp"

using namespace hydro;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / ("hydroformer_cli_test_" + std::to_string(::getpid())); }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    cli::cmd_datagen(1, 420, root() / "synth.csv");
    std::ofstream(root() / "run.cfg") << "# small run\n"
                                         "model.preset = desk\n"
                                         "model.d_model = 8\n"
                                         "model.d_ffn = 16\n"
                                         "model.attention_mode = sparse\n"
                                         "model.output_head = nonlinear\n"
                                         "data.path = "
                                      << (root() / "synth.csv").string()
                                      << "\n"
                                         "data.lookback = 8\n"
                                         "data.horizon = 3\n"
                                         "train.max_epochs = 2\n"
                                         "train.batch_size = 16\n"
                                         "train.learning_rate = 1e-3\n"
                                         "eval.leads = 1,3\n"
                                         "eval.r2_mode = standard\n"
                                         "shap.permutations = 8\n"
                                         "shap.sample = 6\n";
    trained_ = new cli::TrainResult(cli::cmd_train(RunConfig::load(root() / "run.cfg"), root() / "run"));
  }

  static void TearDownTestSuite() {
    delete trained_;
    trained_ = nullptr;
    fs::remove_all(root());
  }

  static cli::TrainResult* trained_;
};

cli::TrainResult* CliTest::trained_ = nullptr;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HYDROFORMER_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(RunConfig, ParseApplyPresetAndResolve) {
  const auto c = RunConfig::parse(
      "model.preset = desk\n"
      "model.attention_mode = sparse   # top-k\n"
      "model.k_sparse = 5\n"
      "train.seed = 9\n"
      "data.lookback = 14\n"
      "eval.leads = 1, 2\n"
      "shap.estimator = exact\n");
  const auto m = c.resolved_model();
  EXPECT_EQ(m.d_model, 32u);
  EXPECT_EQ(m.lookback, 14u);
  EXPECT_EQ(m.variant_name(), "Transformer-SPA");
  EXPECT_EQ(*m.attention.k, 5u);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.leads, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(c.shap.estimator, shap::Estimator::exact);

  const auto again = RunConfig::parse(c.resolved_text());
  EXPECT_EQ(again.resolved_text(), c.resolved_text());
  EXPECT_EQ(again.to_kv(), c.to_kv());
}

TEST(RunConfig, RejectsUnknownDuplicateAndMalformed) {
  try {
    RunConfig::parse("model.d_model = 16\nmodel.dmodel = 16\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.dmodel"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::parse("train.seed = 1\ntrain.seed = 2\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("train.seed\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("eval.leads = 0,1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("data.lookback = 8\neval.leads = 9\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("model.preset = huge\n"), ConfigError);
}

TEST(RunConfig, VariantSelectionIsTheTwoByTwoGrid) {
  const char* names[2][2] = {{"Transformer", "Transformer-NO"}, {"Transformer-SPA", "Transformer-EN"}};
  for (int sparse = 0; sparse < 2; ++sparse) {
    for (int nonlinear = 0; nonlinear < 2; ++nonlinear) {
      std::string text = "model.attention_mode = " + std::string(sparse ? "sparse" : "dense") +
                         "\nmodel.output_head = " + (nonlinear ? "nonlinear" : "linear") + "\n";
      EXPECT_EQ(RunConfig::parse(text).resolved_model().variant_name(), names[sparse][nonlinear]);
    }
  }
}

TEST(Datagen, ByteIdenticalPerSeedAndLengthGuard) {
  const auto dir = fs::temp_directory_path() / ("hydroformer_datagen_test_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  cli::cmd_datagen(5, 400, dir / "a.csv");
  cli::cmd_datagen(5, 400, dir / "b.csv");
  cli::cmd_datagen(6, 400, dir / "c.csv");
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_NE(slurp(dir / "a.csv"), slurp(dir / "c.csv"));
  const auto s = data::load_table(dir / "a.csv");
  EXPECT_EQ(s.length(), 400u);
  EXPECT_EQ(s.values.cols, 19u);
  EXPECT_THROW(cli::cmd_datagen(5, 100, dir / "d.csv"), ConfigError);
  fs::remove_all(dir);
}

TEST(Bench, KExpressionsAndSinglePoint) {
  EXPECT_EQ(cli::resolve_bench_k("8", 64), 8u);
  EXPECT_EQ(cli::resolve_bench_k("L", 64), 64u);
  EXPECT_EQ(cli::resolve_bench_k("L/4", 64), 16u);
  EXPECT_THROW(cli::resolve_bench_k("L/0", 64), ConfigError);
  EXPECT_THROW(cli::resolve_bench_k("k", 64), ConfigError);
  EXPECT_THROW(cli::resolve_bench_k("0", 64), ConfigError);

  cli::BenchOptions o;
  o.lengths = {16};
  o.ks = {"L"};
  o.repeats = 3;
  o.warmup = 1;
  o.d_head = 8;
  const auto rows = cli::cmd_bench(o);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].mode, "dense");
  EXPECT_EQ(rows[1].mode, "sparse");
  for (const auto& r : rows) {
    EXPECT_EQ(r.length, 16u);
    EXPECT_EQ(r.k, 16u);
    EXPECT_EQ(r.repeats, 3u);
    EXPECT_LE(r.min_ms, r.median_ms);
    EXPECT_EQ(r.correctness, "pass");
    EXPECT_LE(r.max_abs_diff, 1e-12);
  }
  o.ks = {"4"};
  for (const auto& r : cli::cmd_bench(o)) EXPECT_EQ(r.correctness, "n/a");
  std::ostringstream out;
  cli::write_bench_csv(out, rows);
  EXPECT_EQ(out.str().rfind("mode,L,k,repeats,min_ms,median_ms,max_abs_diff,correctness\n", 0), 0u);
}

TEST_F(CliTest, TrainWritesRunDirectory) {
  const auto dir = root() / "run";
  for (const char* f : {"config.resolved", "loss_curve.csv", "checkpoint.bin", "checkpoint.sha256"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(trained_->curve.epochs.size(), 2u);
  EXPECT_EQ(slurp(dir / "checkpoint.sha256"), trained_->digest + "  checkpoint.bin\n");
  const auto resolved = RunConfig::load(dir / "config.resolved");
  EXPECT_EQ(resolved.resolved_text(), slurp(dir / "config.resolved"));
  EXPECT_EQ(checkpoint::load(trained_->checkpoint).model_config().variant_name(), "Transformer-EN");
}

TEST_F(CliTest, RetrainingIsByteIdentical) {
  const auto again = cli::cmd_train(RunConfig::load(root() / "run.cfg"), root() / "run2");
  EXPECT_EQ(again.digest, trained_->digest);
  EXPECT_EQ(slurp(root() / "run2" / "loss_curve.csv"), slurp(root() / "run" / "loss_curve.csv"));
}

TEST_F(CliTest, EvaluateUsesStoredLeadsAndOraclePredictor) {
  cli::EvaluateOptions o;
  o.checkpoint = trained_->checkpoint;
  o.data = root() / "synth.csv";
  o.out_dir = root() / "eval";
  const auto rep = cli::cmd_evaluate(o);
  ASSERT_EQ(rep.leads.size(), 2u);
  EXPECT_EQ(rep.leads[1].lead, 3u);
  EXPECT_EQ(rep.leads[0].r2_mode, metrics::R2Mode::standard);
  EXPECT_EQ(rep.model, "Transformer-EN");
  EXPECT_TRUE(fs::exists(o.out_dir / "predictions_lead3.csv"));
  EXPECT_EQ(metrics::MetricReport::from_json(slurp(o.out_dir / "metrics.json")).leads.size(), 2u);

  o.predictor = "oracle";
  o.leads = std::vector<std::size_t>{1, 2, 3};
  o.r2_mode = metrics::R2Mode::paper;
  const auto oracle = cli::cmd_evaluate(o);
  ASSERT_EQ(oracle.leads.size(), 3u);
  for (const auto& l : oracle.leads) {
    EXPECT_NEAR(l.r2, 1, 1e-12);
    EXPECT_NEAR(l.rmse, 0, 1e-12);
  }

  o.leads = std::vector<std::size_t>{4};
  EXPECT_THROW(cli::cmd_evaluate(o), ConfigError);
}

TEST_F(CliTest, MalformedCheckpointIsAFormatError) {
  const auto bad = root() / "bad.bin";
  std::ofstream(bad, std::ios::binary) << "not a checkpoint";
  cli::EvaluateOptions o;
  o.checkpoint = bad;
  o.data = root() / "synth.csv";
  o.out_dir = root() / "eval_bad";
  EXPECT_THROW(cli::cmd_evaluate(o), FormatError);

  auto bytes = slurp(trained_->checkpoint);
  bytes[8] = 7;
  std::ofstream(bad, std::ios::binary) << bytes;
  try {
    cli::cmd_evaluate(o);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST_F(CliTest, PredictRollsOutTheHorizon) {
  cli::PredictOptions o;
  o.checkpoint = trained_->checkpoint;
  o.data = root() / "synth.csv";
  o.anchor_date = "1980-06-01";
  o.out_file = root() / "forecast.csv";
  const auto f = cli::cmd_predict(o);
  ASSERT_EQ(f.values.size(), 3u);
  EXPECT_EQ(data::format_date(f.dates[0]), "1980-06-02");
  for (double v : f.values) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(slurp(o.out_file).rfind("lead,date,prediction\n", 0), 0u);
  o.anchor_date = "1980-01-03";
  EXPECT_THROW(cli::cmd_predict(o), DataError);
}

TEST_F(CliTest, ExplainInstanceAndGlobal) {
  const auto ckpt = checkpoint::load(trained_->checkpoint);
  const auto model = ckpt.restore_model();
  const auto prep = data::prepare_with(data::load_table(root() / "synth.csv"), ckpt.normalizer, 8, 3);
  const auto anchor = data::format_date(prep.dataset.in(data::Split::test)[2]->anchor_date);

  cli::ExplainOptions o;
  o.checkpoint = trained_->checkpoint;
  o.data = root() / "synth.csv";
  o.instance_date = anchor;
  o.shap.permutations = 8;
  o.out_dir = root() / "explain_one";
  const auto one = cli::cmd_explain(o);
  ASSERT_TRUE(one.force);
  EXPECT_FALSE(one.global);
  ASSERT_EQ(one.explanations.size(), 1u);
  EXPECT_LE(std::abs(one.explanations[0].additivity_gap()), one.explanations[0].tolerance());
  EXPECT_NEAR(one.force->final_value(), one.force->fx, one.explanations[0].tolerance());
  EXPECT_TRUE(fs::exists(o.out_dir / ("force_" + anchor + ".csv")));
  const auto settings = nlohmann::json::parse(slurp(o.out_dir / "explain_settings.json"));
  EXPECT_EQ(settings["estimator"], "sampled");
  EXPECT_EQ(settings["permutations"], 8);

  o.instance_date.reset();
  o.global = true;
  o.shap.sample = 6;
  o.jobs = 3;
  o.out_dir = root() / "explain_global";
  const auto g = cli::cmd_explain(o);
  ASSERT_TRUE(g.global);
  EXPECT_EQ(g.explanations.size(), 6u);
  double total = 0, groups = 0;
  for (double p : g.global->percent) total += p;
  for (const auto& s : g.global->group_shares) groups += s.percent;
  EXPECT_NEAR(total, 100, 1e-9);
  EXPECT_NEAR(groups, 100, 1e-9);
  for (const char* f : {"global_importance.csv", "group_shares.csv", "beeswarm.csv"}) {
    EXPECT_TRUE(fs::exists(o.out_dir / f)) << f;
  }
  std::ifstream bees(o.out_dir / "beeswarm.csv");
  EXPECT_EQ(shap::read_beeswarm(bees).size(), 6u * 19u);

  // worker count does not change the result
  o.jobs = 1;
  o.out_dir = root() / "explain_serial";
  const auto serial = cli::cmd_explain(o);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(serial.explanations[j].phis, g.explanations[j].phis);

  o.shap.estimator = shap::Estimator::exact;
  try {
    cli::cmd_explain(o);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("--allow-large-exact"), std::string::npos) << e.what();
  }
}

TEST_F(CliTest, ExitCodes) {
  const std::string data = (root() / "synth.csv").string();
  const std::string out = (root() / "exit").string();
  EXPECT_EQ(run_cli("--out " + out + " datagen --length 400"), 0);
  EXPECT_EQ(run_cli("--out " + out + " datagen --length 100"), 2);
  EXPECT_EQ(run_cli("--bogus-flag datagen"), 2);
  EXPECT_EQ(run_cli("--out " + out + " evaluate --checkpoint " + trained_->checkpoint.string() + " --data " + data +
                    " --leads 1,3"),
            0);
  EXPECT_EQ(run_cli("--out " + out + " evaluate --checkpoint " + trained_->checkpoint.string() + " --data " + data +
                    " --leads 9"),
            2);
  EXPECT_EQ(run_cli("--out " + out + " evaluate --checkpoint " + (root() / "nope.bin").string() + " --data " + data),
            3);
  EXPECT_EQ(run_cli("--out " + out + " explain --checkpoint " + trained_->checkpoint.string() + " --data " + data +
                    " --global --exact"),
            2);
  EXPECT_EQ(run_cli("--out " + out + " bench --lengths 16 --ks 4,L --repeats 1 --warmup 0 --dim 4"), 0);
  EXPECT_TRUE(fs::exists(root() / "exit" / "bench.csv"));
}
