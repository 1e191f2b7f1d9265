// Acceptance run: one PASS/FAIL line per criterion on stdout, details on stderr.
// Usage: acceptance [work_dir]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hydroformer/commands.hpp"
#include "hydroformer/errors.hpp"
#include "hydroformer/grad_check.hpp"

using namespace hydro;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -2, double hi = 2) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<real> v(rows * cols);
  for (auto& x : v) x = static_cast<real>(u(rng));
  return Tensor({rows, cols}, std::move(v));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      std::cerr << "  failed: " << what << '\n';
    }
  }
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

ModelConfig tiny_model(std::size_t heads, attention::AttentionMode mode, OutputHeadConfig head) {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = heads;
  c.d_ffn = 16;
  c.n_features = 5;
  c.target_feature = 2;
  c.lookback = 6;
  c.horizon = 2;
  c.attention = mode;
  c.output_head = head;
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst_op = 0;
  auto check = [&](const std::string& name, const ScalarFn& fn, std::vector<Tensor> inputs) {
    const auto r = grad_check(fn, std::move(inputs));
    worst_op = std::max(worst_op, double(r.max_rel_error));
    o.require(r.max_rel_error < 1e-4, name + " rel error " + num(r.max_rel_error));
  };
  const auto w35 = random_tensor(rng, 3, 5);
  auto weighted = [&](const Tensor& t) { return ops::sum(ops::mul(t, w35)); };

  check("matmul", [&](const auto& in) { return weighted(ops::matmul(in[0], in[1])); },
        {random_tensor(rng, 3, 4), random_tensor(rng, 4, 5)});
  check("transpose", [&](const auto& in) { return weighted(ops::transpose(in[0])); }, {random_tensor(rng, 5, 3)});
  for (auto kind : {ElementwiseKind::add, ElementwiseKind::sub, ElementwiseKind::mul}) {
    check("elementwise", [&, kind](const auto& in) { return weighted(ops::elementwise(in[0], in[1], kind)); },
          {random_tensor(rng, 3, 5), random_tensor(rng, 3, 5)});
  }
  check("scale", [&](const auto& in) { return weighted(ops::scale(in[0], real(-1.3))); }, {random_tensor(rng, 3, 5)});
  check("add_bias", [&](const auto& in) { return weighted(ops::add_bias(in[0], in[1])); },
        {random_tensor(rng, 3, 5), Tensor({5}, {0.1, -0.2, 0.3, 0.4, -0.5})});
  for (auto kind : {ActivationKind::tanh, ActivationKind::relu, ActivationKind::sigmoid, ActivationKind::leaky_relu,
                    ActivationKind::elu, ActivationKind::softplus}) {
    auto x = random_tensor(rng, 3, 5);
    for (auto& v : x.mutable_data()) {
      if (std::abs(v) < 0.05) v += real(0.2);  // away from kinks
    }
    check("activation " + to_string(kind), [&, kind](const auto& in) { return weighted(ops::activation(in[0], kind)); },
          {x});
  }
  Mask m(3, 5, true);
  m.set(0, 2, false);
  m.set(2, 0, false);
  check("masked_softmax", [&](const auto& in) { return weighted(ops::masked_softmax(in[0], m)); },
        {random_tensor(rng, 3, 5)});
  check("layer_norm", [&](const auto& in) { return weighted(ops::layer_norm(in[0], in[1], in[2])); },
        {random_tensor(rng, 3, 5), random_tensor(rng, 1, 5), random_tensor(rng, 1, 5)});
  check("mse", [&](const auto& in) { return ops::mse(in[0], in[1]); },
        {random_tensor(rng, 3, 5), random_tensor(rng, 3, 5)});
  check("mean", [&](const auto& in) { return ops::mean(ops::mul(in[0], in[0])); }, {random_tensor(rng, 3, 5)});
  check("slice/concat",
        [&](const auto& in) {
          auto a = ops::slice_cols(in[0], 1, 4);
          auto b = ops::slice_rows(in[1], 0, 3);
          return weighted(ops::concat_cols({a, b}));
        },
        {random_tensor(rng, 3, 6), random_tensor(rng, 4, 2)});
  check("dense_attention", [&](const auto& in) { return weighted(attention::dense_attention(in[0], in[1], in[2])); },
        {random_tensor(rng, 3, 4), random_tensor(rng, 6, 4), random_tensor(rng, 6, 5)});
  check("sparse_attention",
        [&](const auto& in) { return weighted(attention::sparse_attention(in[0], in[1], in[2], 3)); },
        {random_tensor(rng, 3, 4), random_tensor(rng, 6, 4), random_tensor(rng, 6, 5)});

  // end to end on the tiny model
  double worst_e2e = 0;
  for (auto head : {OutputHeadConfig::linear(), OutputHeadConfig::nonlinear()}) {
    for (auto mode : {attention::AttentionMode::dense(), attention::AttentionMode::top_k(3)}) {
      TransformerModel model(tiny_model(1, mode, head), 7);
      const auto window = random_tensor(rng, 6, 5);
      const auto dec = random_tensor(rng, 2, 1);
      const auto target = random_tensor(rng, 2, 1);
      const auto r =
          grad_check([&](const std::vector<Tensor>&) { return ops::mse(model.forward(window, dec), target); },
                     model.parameter_list(), real(1e-6), real(1e-3));
      worst_e2e = std::max(worst_e2e, double(r.max_rel_error));
      o.require(r.coordinates == model.parameter_count(), "end-to-end check covers every parameter");
      o.require(r.max_rel_error < 1e-3, model.config().variant_name() + " end-to-end rel error " +
                                            num(r.max_rel_error));
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60, "runtime " + num(secs) + " s");
  o.detail = "max rel error ops " + num(worst_op) + ", end-to-end " + num(worst_e2e) + ", " + num(secs, 3) + " s";
  return o;
}

Outcome sparse_dense_equivalence() {
  Outcome o;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> len(1, 24), dim(1, 12), extra(0, 5);
  double worst_attn = 0, worst_e2e = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t lq = len(rng), lk = len(rng), dk = dim(rng), dv = dim(rng);
    const auto q = random_tensor(rng, lq, dk), k = random_tensor(rng, lk, dk), v = random_tensor(rng, lk, dv);
    const std::size_t top_k = lk + extra(rng);
    worst_attn = std::max(worst_attn, max_abs_diff(attention::dense_attention(q, k, v),
                                                   attention::sparse_attention(q, k, v, top_k)));
  }
  const auto dense_cfg = tiny_model(2, attention::AttentionMode::dense(), OutputHeadConfig::nonlinear());
  auto sparse_cfg = dense_cfg;
  sparse_cfg.attention = attention::AttentionMode::top_k(dense_cfg.lookback);
  for (int trial = 0; trial < 100; ++trial) {
    TransformerModel dense(dense_cfg, 300 + trial), sparse(sparse_cfg, 1);
    sparse.load_values(dense.snapshot());
    const auto window = random_tensor(rng, 6, 5);
    const auto dec = random_tensor(rng, 2, 1);
    worst_e2e = std::max(worst_e2e, max_abs_diff(dense.forward(window, dec), sparse.forward(window, dec)));
  }
  o.require(worst_attn <= 1e-12, "attention-level difference " + num(worst_attn));
  o.require(worst_e2e <= 1e-12, "forward() difference " + num(worst_e2e));
  o.detail = "max |dense - sparse| attention " + num(worst_attn) + ", forward " + num(worst_e2e);
  return o;
}

Outcome mask_laws() {
  Outcome o;
  std::mt19937_64 rng(303);
  std::size_t rows_checked = 0, tie_rows = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t lq = 1 + trial % 9, lk = 2 + trial % 13, dk = 4;
    auto q = random_tensor(rng, lq, dk), kk = random_tensor(rng, lk, dk), v = random_tensor(rng, lk, 3);
    const bool with_ties = trial % 4 == 0;
    if (with_ties) {
      // duplicate keys give duplicate scores in every row
      auto kd = kk.mutable_data();
      for (std::size_t j = 0; j < dk; ++j) kd[1 * dk + j] = kd[0 * dk + j];
    }
    const std::size_t top_k = 1 + trial % lk;
    const auto scores = attention::attention_scores(q, kk);
    const auto mask = attention::topk_mask(scores, top_k);
    const auto weights = ops::masked_softmax(scores, mask);
    const auto out = attention::sparse_attention(q, kk, v, top_k);
    o.require(max_abs_diff(out, ops::matmul(weights, v)) == 0, "sparse output equals softmax(Mask(P)) V");
    for (std::size_t r = 0; r < lq; ++r) {
      ++rows_checked;
      std::vector<real> row;
      for (std::size_t c = 0; c < lk; ++c) row.push_back(scores.at(r, c));
      std::vector<real> sorted = row;
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      const real t = sorted[top_k - 1];
      real min_kept = std::numeric_limits<real>::infinity(), max_dropped = -std::numeric_limits<real>::infinity();
      std::size_t kept = 0;
      double sum = 0;
      for (std::size_t c = 0; c < lk; ++c) {
        const bool keep = mask(r, c);
        o.require(keep == (row[c] >= t), "kept iff score >= k-th largest");
        if (keep) {
          ++kept;
          min_kept = std::min(min_kept, row[c]);
        } else {
          max_dropped = std::max(max_dropped, row[c]);
          o.require(weights.at(r, c) == 0, "masked weight is exactly 0");
        }
        sum += weights.at(r, c);
      }
      o.require(min_kept >= max_dropped, "every kept score >= every masked score");
      o.require(std::abs(sum - 1) <= 1e-12, "row sums to 1");
      const bool distinct = std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
      if (distinct) o.require(kept == top_k, "exactly k kept on distinct rows");
      if (!distinct && kept > top_k) ++tie_rows;
    }
  }
  o.require(tie_rows > 0, "tie case exercised");
  o.detail = std::to_string(rows_checked) + " rows, " + std::to_string(tie_rows) + " rows keeping > k through ties";
  return o;
}

Outcome causality() {
  Outcome o;
  std::mt19937_64 rng(404);
  std::size_t cases = 0;
  for (auto mode : {attention::AttentionMode::dense(), attention::AttentionMode::top_k(2),
                    attention::AttentionMode::top_k_auto()}) {
    auto cfg = tiny_model(2, mode, OutputHeadConfig::nonlinear());
    cfg.horizon = 5;
    for (int trial = 0; trial < 10; ++trial) {
      TransformerModel model(cfg, 500 + trial);
      const auto window = random_tensor(rng, 6, 5);
      const auto dec = random_tensor(rng, 5, 1);
      const auto base = model.forward(window, dec);
      for (std::size_t t = 0; t < 5; ++t) {
        auto changed = dec.detach();
        for (std::size_t s = t + 1; s < 5; ++s) changed.mutable_data()[s] += real(2.5) * real(s);
        const auto y = model.forward(window, changed);
        for (std::size_t s = 0; s <= t; ++s) o.require(y.at(s, 0) == base.at(s, 0), "step invariant to later inputs");
        ++cases;
      }
    }
  }
  o.detail = std::to_string(cases) + " perturbations across dense, top-k(2) and auto-k, exact equality";
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  using V = std::vector<double>;
  using metrics::R2Mode;
  o.require(metrics::r2(V{1, 2, 3}, V{2, 2, 2}, R2Mode::standard) == 0, "standard r2 of mean prediction is 0");
  bool raised = false;
  try {
    metrics::r2(V{1, 2, 3}, V{2, 2, 2}, R2Mode::paper);
  } catch (const metrics::DegenerateDenominatorError&) {
    raised = true;
  }
  o.require(raised, "paper r2 raises on constant prediction equal to the mean");
  o.require(metrics::r2(V{1, 2, 3}, V{1, 2, 4}, R2Mode::standard) == 0.5, "standard r2 = 0.5");
  o.require(std::abs(metrics::r2(V{1, 2, 3}, V{1, 2, 4}, R2Mode::paper) - 0.8) < 1e-15, "paper r2 = 0.8");
  o.require(metrics::mae(V{1, 2}, V{2, 4}) == 1.5, "mae 1.5");
  o.require(metrics::rmse(V{1, 2}, V{2, 4}) == std::sqrt(2.5), "rmse sqrt(2.5)");
  o.require(metrics::mbe(V{1, 2}, V{2, 4}) == -1.5, "mbe -1.5");
  for (auto mode : {R2Mode::paper, R2Mode::standard}) {
    o.require(metrics::r2(V{1, 4, 2}, V{1, 4, 2}, mode) == 1, "perfect prediction r2 = 1");
  }

  std::mt19937_64 rng(505);
  std::normal_distribution<double> d(0, 3);
  std::uniform_int_distribution<int> len(1, 50);
  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(len(rng));
    V y(n), yhat(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = d(rng);
      yhat[i] = d(rng);
    }
    const double a = metrics::mae(y, yhat), r = metrics::rmse(y, yhat), b = metrics::mbe(y, yhat);
    if (!(r + 1e-12 >= a && a >= 0 && r + 1e-12 >= std::abs(b))) ++violations;
  }
  o.require(violations == 0, std::to_string(violations) + " ordering violations");
  o.detail = "hand cases exact, 1000 random vectors with 0 ordering violations";
  return o;
}

// Two-layer tanh network on the time-mean of each feature.
shap::WindowFunction random_network(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 1);
  const std::size_t hidden = 8;
  std::vector<double> w1(hidden * n), b1(hidden), w2(hidden);
  for (auto& v : w1) v = d(rng);
  for (auto& v : b1) v = d(rng);
  for (auto& v : w2) v = d(rng);
  return [=](const Tensor& x) {
    double out = 0;
    for (std::size_t h = 0; h < hidden; ++h) {
      double a = b1[h];
      for (std::size_t j = 0; j < n; ++j) {
        double mean = 0;
        for (std::size_t t = 0; t < x.rows(); ++t) mean += x.at(t, j);
        a += w1[h * n + j] * mean / double(x.rows());
      }
      out += w2[h] * std::tanh(a);
    }
    return out;
  };
}

std::vector<real> random_baseline(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<real> b(n);
  for (auto& v : b) v = static_cast<real>(u(rng));
  return b;
}

Outcome shapley_axioms() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(606);
  std::normal_distribution<double> d(0, 1);
  double worst_linear = 0, worst_axiom = 0;

  for (std::size_t n = 1; n <= 5; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> w(n);
      for (auto& v : w) v = d(rng);
      const auto x = random_tensor(rng, 1, n);
      const auto mu = random_baseline(rng, n);
      shap::WindowFunction f = [w](const Tensor& t) {
        double s = 0;
        for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * t.at(0, j);
        return s;
      };
      const auto e = shap::exact_shapley(shap::ValueFunction(f, x, mu));
      for (std::size_t i = 0; i < n; ++i) {
        worst_linear = std::max(worst_linear, std::abs(e.phis[i] - w[i] * (x.at(0, i) - mu[i])));
      }
    }
  }
  o.require(worst_linear <= 1e-10, "linear closed form error " + num(worst_linear));

  // null player and symmetry: f depends on x0 + x1 and x3, ignores x2
  for (int trial = 0; trial < 20; ++trial) {
    const double c = d(rng);
    shap::WindowFunction f = [c](const Tensor& t) {
      const double s = t.at(0, 0) + t.at(0, 1);
      return std::tanh(s * c) * t.at(0, 3) + s * s * c;
    };
    auto x = random_tensor(rng, 1, 4);
    auto mu = random_baseline(rng, 4);
    mu[1] = mu[0];
    x.mutable_data()[1] = x.data()[0];
    const auto e = shap::exact_shapley(shap::ValueFunction(f, x, mu));
    o.require(e.phis[2] == 0, "null player exactly 0");
    worst_axiom = std::max(worst_axiom, std::abs(e.phis[0] - e.phis[1]));
    worst_axiom = std::max(worst_axiom, std::abs(e.additivity_gap()));
  }
  // linearity and local accuracy on random networks
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 6;
    const auto f1 = random_network(n, 700 + trial), f2 = random_network(n, 800 + trial);
    shap::WindowFunction sum = [&](const Tensor& t) { return f1(t) + f2(t); };
    const auto x = random_tensor(rng, 3, n);
    const auto mu = random_baseline(rng, n);
    const auto e1 = shap::exact_shapley(shap::ValueFunction(f1, x, mu));
    const auto e2 = shap::exact_shapley(shap::ValueFunction(f2, x, mu));
    const auto es = shap::exact_shapley(shap::ValueFunction(sum, x, mu));
    for (std::size_t i = 0; i < n; ++i) worst_axiom = std::max(worst_axiom, std::abs(es.phis[i] - e1.phis[i] - e2.phis[i]));
    for (const auto* e : {&e1, &e2, &es}) worst_axiom = std::max(worst_axiom, std::abs(e->additivity_gap()));
  }
  o.require(worst_axiom <= 1e-10, "axiom error " + num(worst_axiom));

  // sampled vs exact at n = 8
  std::size_t within = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 8;
    const auto f = random_network(n, 900 + seed);
    const auto x = random_tensor(rng, 4, n);
    const shap::ValueFunction vf(f, x, random_baseline(rng, n));
    const auto exact = shap::exact_shapley(vf);
    const auto est = shap::sampled_shapley(vf, 2000, seed);
    for (std::size_t i = 0; i < n; ++i) {
      ++total;
      if (std::abs(est.phis[i] - exact.phis[i]) <= 3 * est.standard_errors[i]) ++within;
    }
  }
  const double share = double(within) / double(total);
  o.require(share >= 0.95, "sampled within 3 SE share " + num(share));
  const double secs = seconds_since(t0);
  o.require(secs < 300, "runtime " + num(secs) + " s");
  o.detail = "linear " + num(worst_linear) + ", axioms " + num(worst_axiom) + ", sampled within 3 SE " +
             std::to_string(within) + "/" + std::to_string(total) + ", " + num(secs, 3) + " s";
  return o;
}

// Shared by criteria 7, 8 and 9.
struct EndToEnd {
  bool trained = false;
  fs::path data;
  cli::TrainResult result;
  double train_seconds = 0;
};

RunConfig acceptance_config(const fs::path& data) {
  return RunConfig::parse(
      "model.preset = desk\n"
      "model.attention_mode = sparse\n"
      "model.output_head = nonlinear\n"
      "data.path = " + data.string() + "\n"
      "data.lookback = 30\n"
      "data.horizon = 7\n"
      "train.batch_size = 32\n"
      "train.learning_rate = 1e-4\n"
      "train.max_epochs = 50\n"
      "train.patience = 5\n"
      "train.seed = 1\n"
      "eval.leads = 1,3,5,7\n"
      "eval.r2_mode = standard\n");
}

Outcome end_to_end_learning(const fs::path& work, EndToEnd& run) {
  Outcome o;
  const auto t0 = Clock::now();
  run.data = work / "synth_seed1.csv";
  cli::cmd_datagen(1, 2000, run.data);
  const auto config = acceptance_config(run.data);
  o.require(config.resolved_model().variant_name() == "Transformer-EN", "variant is Transformer-EN");
  std::ofstream log(work / "train_en.log");
  run.result = cli::cmd_train(config, work / "run_en", &log);
  run.trained = true;
  run.train_seconds = seconds_since(t0);

  cli::EvaluateOptions eo;
  eo.checkpoint = run.result.checkpoint;
  eo.data = run.data;
  eo.leads = std::vector<std::size_t>{1, 3, 5, 7};
  eo.r2_mode = metrics::R2Mode::standard;
  eo.out_dir = work / "eval_en";
  const auto report = cli::cmd_evaluate(eo);
  const double secs = seconds_since(t0);
  double r2_1 = std::nan(""), r2_7 = std::nan("");
  for (const auto& l : report.leads) {
    std::cerr << "  lead " << l.lead << ": r2 " << num(l.r2) << " mae " << num(l.mae) << " rmse " << num(l.rmse)
              << " mbe " << num(l.mbe) << " n " << l.n << '\n';
    if (l.lead == 1) r2_1 = l.r2;
    if (l.lead == 7) r2_7 = l.r2;
  }
  o.require(r2_1 >= 0.90, "lead-1 standard R2 " + num(r2_1));
  o.require(r2_7 >= 0.60, "lead-7 standard R2 " + num(r2_7));
  o.require(secs < 600, "runtime " + num(secs) + " s");
  o.detail = "Transformer-EN test R2 lead 1 = " + num(r2_1) + ", lead 7 = " + num(r2_7) + " (" +
             std::to_string(run.result.curve.epochs.size()) + " epochs, " + num(secs, 3) + " s)";
  return o;
}

Outcome loss_curve_shape(const EndToEnd& run) {
  Outcome o;
  if (!run.trained) {
    o.require(false, "criterion 7 run did not complete");
    return o;
  }
  const auto& curve = run.result.curve;
  const real first = curve.epochs.front().val_loss, last = curve.epochs.back().val_loss;
  real best = first;
  std::size_t best_epoch = 1;
  for (const auto& e : curve.epochs) {
    if (e.val_loss < best) {
      best = e.val_loss;
      best_epoch = e.epoch;
    }
  }
  o.require(last < first, "final val loss " + num(last) + " < first " + num(first));
  o.require(curve.best_epoch == best_epoch, "recorded best epoch is the argmin");

  const auto ckpt = checkpoint::load(run.result.checkpoint);
  const auto model = ckpt.restore_model();
  const auto& mc = model.config();
  const auto prep = data::prepare_with(data::load_table(run.data), ckpt.normalizer, mc.lookback, mc.horizon);
  const real restored = training::evaluate_loss(model, prep.dataset.in(data::Split::val));
  o.require(std::abs(double(restored) - double(best)) <= 1e-12 * std::max(1.0, double(best)),
            "restored weights reproduce the minimum val loss (" + num(restored, 17) + " vs " + num(best, 17) + ")");
  o.detail = "val loss " + num(first) + " -> " + num(last) + ", best " + num(best) + " at epoch " +
             std::to_string(best_epoch) + (curve.stopped_early ? " (early stop)" : "") + ", restored exactly";
  return o;
}

Outcome shap_signal(const fs::path& work, const EndToEnd& run) {
  Outcome o;
  if (!run.trained) {
    o.require(false, "criterion 7 run did not complete");
    return o;
  }
  const auto t0 = Clock::now();
  cli::ExplainOptions eo;
  eo.checkpoint = run.result.checkpoint;
  eo.data = run.data;
  eo.global = true;
  eo.shap.estimator = shap::Estimator::sampled;
  eo.shap.permutations = 64;
  eo.shap.sample = 64;
  eo.seed = 1;
  eo.jobs = std::max(1u, std::thread::hardware_concurrency());
  eo.out_dir = work / "explain_global";
  const auto g = cli::cmd_explain(eo);
  o.require(g.explanations.size() == 64, "64 instances explained");
  const auto rank = g.global->ranking();
  const std::string top = g.global->features[rank.front()];
  o.require(top == "ch_wl", "top feature " + top);
  double group_total = 0;
  for (const auto& s : g.global->group_shares) {
    group_total += s.percent;
    std::cerr << "  " << s.group << ' ' << num(s.percent) << "%\n";
  }
  o.require(std::abs(group_total - 100) <= 1e-9, "group shares sum " + num(group_total, 17));
  std::size_t accurate = 0;
  for (const auto& e : g.explanations) {
    const auto force = shap::force_report(e, g.global->features);
    if (std::abs(e.additivity_gap()) <= e.tolerance() && std::abs(force.final_value() - e.fx) <= e.tolerance()) {
      ++accurate;
    }
  }
  o.require(accurate == g.explanations.size(), "local accuracy on every force report");

  // one instance through the per-date path
  eo.global = false;
  eo.instance_date = data::format_date(g.anchors.front());
  eo.out_dir = work / "explain_instance";
  const auto one = cli::cmd_explain(eo);
  o.require(one.force && std::abs(one.force->final_value() - one.force->fx) <= one.explanations[0].tolerance(),
            "instance force report reaches f(x)");
  const double secs = seconds_since(t0);
  o.detail = "top feature " + top + " (" + num(g.global->percent[rank.front()], 3) + "%), groups sum to 100, " +
             std::to_string(accurate) + "/64 force reports additive, " + num(secs, 3) + " s";
  return o;
}

Outcome determinism(const fs::path& work) {
  Outcome o;
  const auto data = work / "synth_seed7.csv";
  cli::cmd_datagen(7, 600, data);
  auto config = RunConfig::parse(
      "model.preset = desk\n"
      "model.attention_mode = sparse\n"
      "model.output_head = nonlinear\n"
      "data.lookback = 14\n"
      "data.horizon = 3\n"
      "train.max_epochs = 3\n"
      "train.seed = 7\n"
      "eval.leads = 1,3\n");
  config.data_path = data.string();
  const auto a = cli::cmd_train(config, work / "det_a");
  const auto b = cli::cmd_train(config, work / "det_b");
  o.require(a.digest == b.digest, "checkpoint digests differ");
  o.require(slurp(work / "det_a" / "loss_curve.csv") == slurp(work / "det_b" / "loss_curve.csv"),
            "loss curves differ");
  for (const auto& dir : {work / "det_a", work / "det_b"}) {
    o.require(fs::exists(dir / "config.resolved"), "resolved config in " + dir.string());
    o.require(RunConfig::load(dir / "config.resolved").resolved_text() == config.resolved_text(),
              "resolved config reproduces the run config");
  }
  o.detail = "two runs, digest " + a.digest.substr(0, 16) + "..., identical loss curves, resolved config present";
  return o;
}

Outcome benchmark(const fs::path& work) {
  Outcome o;
  cli::BenchOptions bo;
  bo.lengths = {64, 128, 256};
  bo.ks = {"8", "L/4", "L"};
  bo.out_file = work / "bench.csv";
  const auto rows = cli::cmd_bench(bo);
  o.require(rows.size() == 18, "18 rows (3 L x 3 k x 2 modes)");
  std::size_t full_k = 0;
  for (const auto& r : rows) {
    o.require(std::isfinite(r.median_ms) && r.min_ms <= r.median_ms, "timing columns");
    if (r.k >= r.length) {
      ++full_k;
      o.require(r.correctness == "pass", "k = L correctness at L = " + std::to_string(r.length));
    }
  }
  o.require(full_k == 6, "k = L rows present");
  o.require(fs::exists(bo.out_file), "bench.csv written");
  cli::write_bench_csv(std::cerr, rows);
  o.detail = std::to_string(rows.size()) + " timing rows, k = L correctness " + std::to_string(full_k) +
             "/6 pass (medians in bench.csv)";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work");
  fs::remove_all(work);
  fs::create_directories(work);

  EndToEnd run;
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient integrity", gradient_integrity},
      {2, "sparse/dense equivalence", sparse_dense_equivalence},
      {3, "mask laws", mask_laws},
      {4, "causality", causality},
      {5, "metric oracles", metric_oracles},
      {6, "Shapley axioms", shapley_axioms},
      {7, "end-to-end learning", [&] { return end_to_end_learning(work, run); }},
      {8, "loss-curve shape", [&] { return loss_curve_shape(run); }},
      {9, "SHAP signal recovery", [&] { return shap_signal(work, run); }},
      {10, "determinism and provenance", [&] { return determinism(work); }},
      {11, "benchmark honesty", [&] { return benchmark(work); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::cerr << "[" << c.id << "] " << c.name << '\n';
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
