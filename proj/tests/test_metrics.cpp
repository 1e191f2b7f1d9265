#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hydroformer/metrics.hpp"

using namespace hydro;
using namespace hydro::metrics;

namespace {
using V = std::vector<double>;
}

TEST(R2, PerfectPredictionIsOneInBothModes) {
  const V y{1.5, -2, 7, 3};
  EXPECT_EQ(r2(y, y, R2Mode::paper), 1);
  EXPECT_EQ(r2(y, y, R2Mode::standard), 1);
}

TEST(R2, ConstantPredictionAtTheMean) {
  const V y{1, 2, 3}, yhat{2, 2, 2};
  EXPECT_DOUBLE_EQ(r2(y, yhat, R2Mode::standard), 0.0);
  EXPECT_THROW(r2(y, yhat, R2Mode::paper), DegenerateDenominatorError);
  EXPECT_THROW(r2(V{4, 4, 4}, V{1, 2, 3}, R2Mode::standard), DegenerateDenominatorError);
}

TEST(R2, HandArithmetic) {
  const V y{1, 2, 3}, yhat{1, 2, 4};
  EXPECT_DOUBLE_EQ(r2(y, yhat, R2Mode::standard), 0.5);
  EXPECT_DOUBLE_EQ(r2(y, yhat, R2Mode::paper), 0.8);
}

TEST(R2, Errors) {
  EXPECT_THROW(r2(V{1}, V{1}, R2Mode::standard), std::invalid_argument);
  EXPECT_THROW(r2(V{1, 2}, V{1, 2, 3}, R2Mode::standard), std::invalid_argument);
  EXPECT_THROW(parse_r2_mode("adjusted"), ConfigError);
  EXPECT_EQ(parse_r2_mode("paper"), R2Mode::paper);
  EXPECT_EQ(to_string(R2Mode::standard), "standard");
}

TEST(ErrorMetrics, HandArithmetic) {
  const V y{1, 2}, yhat{2, 4};
  EXPECT_DOUBLE_EQ(mae(y, yhat), 1.5);
  EXPECT_DOUBLE_EQ(rmse(y, yhat), std::sqrt(2.5));
  EXPECT_DOUBLE_EQ(mbe(y, yhat), -1.5);
  EXPECT_NEAR(rmse(y, yhat), 1.5811, 1e-4);
}

TEST(ErrorMetrics, ExactPredictionAndEmptyInput) {
  const V y{3, 1, 4, 1, 5};
  EXPECT_EQ(mae(y, y), 0);
  EXPECT_EQ(rmse(y, y), 0);
  EXPECT_EQ(mbe(y, y), 0);
  EXPECT_THROW(mae(V{}, V{}), std::invalid_argument);
  EXPECT_THROW(rmse(V{}, V{}), std::invalid_argument);
  EXPECT_THROW(mbe(V{1}, V{}), std::invalid_argument);
}

TEST(ErrorMetrics, ConstantOffset) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d(0, 2);
  for (double c : {0.5, -1.25, 3.0}) {
    V y(20), yhat(20);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = d(rng);
      yhat[i] = y[i] + c;
    }
    EXPECT_NEAR(mae(y, yhat), std::abs(c), 1e-12);
    EXPECT_NEAR(rmse(y, yhat), std::abs(c), 1e-12);
    EXPECT_NEAR(mbe(y, yhat), -c, 1e-12);
  }
}

TEST(Properties, OrderingTranslationAndIdentity) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(2, 40);
  std::normal_distribution<double> d(0, 5);
  std::uniform_real_distribution<double> shift(-100, 100);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = static_cast<std::size_t>(len(rng));
    V y(n), yhat(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = d(rng);
      yhat[i] = y[i] + d(rng) * 0.5 + 0.3;
    }
    const double a = mae(y, yhat), r = rmse(y, yhat), b = mbe(y, yhat);
    EXPECT_GE(r + 1e-12, a);
    EXPECT_GE(a, 0);
    EXPECT_GE(r + 1e-12, std::abs(b));

    const double c = shift(rng);
    V ys = y, yhs = yhat;
    for (std::size_t i = 0; i < n; ++i) {
      ys[i] += c;
      yhs[i] += c;
    }
    EXPECT_NEAR(mae(ys, yhs), a, 1e-9);
    EXPECT_NEAR(rmse(ys, yhs), r, 1e-9);
    EXPECT_NEAR(mbe(ys, yhs), b, 1e-9);
    EXPECT_NEAR(r2(ys, yhs, R2Mode::standard), r2(y, yhat, R2Mode::standard), 1e-7);
    EXPECT_NEAR(r2(ys, yhs, R2Mode::paper), r2(y, yhat, R2Mode::paper), 1e-7);

    double mean = 0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0;
    for (double v : y) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(r2(y, yhat, R2Mode::standard), 1 - r * r * static_cast<double>(n) / ss, 1e-12);
  }
}

TEST(Report, ComputeAndJsonRoundTrip) {
  const V y{1, 2, 3, 5}, yhat{1.5, 2, 2.5, 6};
  MetricReport rep;
  rep.model = "Transformer-EN";
  rep.split = "test";
  rep.leads.push_back(compute(1, y, yhat, R2Mode::standard));
  rep.leads.push_back(compute(3, y, V{1, 2, 3, 4}, R2Mode::paper));
  EXPECT_EQ(rep.leads[0].n, 4u);
  EXPECT_EQ(rep.leads[0].lead, 1u);
  EXPECT_DOUBLE_EQ(rep.leads[0].mae, mae(y, yhat));
  EXPECT_DOUBLE_EQ(rep.leads[0].r2, r2(y, yhat, R2Mode::standard));

  const auto json = rep.to_json();
  EXPECT_NE(json.find("\"r2_mode\""), std::string::npos);
  const auto back = MetricReport::from_json(json);
  EXPECT_EQ(back.model, rep.model);
  EXPECT_EQ(back.split, rep.split);
  ASSERT_EQ(back.leads.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.leads[i].lead, rep.leads[i].lead);
    EXPECT_EQ(back.leads[i].r2, rep.leads[i].r2);
    EXPECT_EQ(back.leads[i].mae, rep.leads[i].mae);
    EXPECT_EQ(back.leads[i].rmse, rep.leads[i].rmse);
    EXPECT_EQ(back.leads[i].mbe, rep.leads[i].mbe);
    EXPECT_EQ(back.leads[i].n, rep.leads[i].n);
    EXPECT_EQ(back.leads[i].r2_mode, rep.leads[i].r2_mode);
  }
}
