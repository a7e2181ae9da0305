#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tailflow/dist/distributions.hpp"
#include "tailflow/error.hpp"
#include "tailflow/tail/estimators.hpp"

using namespace tailflow;
using namespace tailflow::tail;

namespace {

constexpr std::size_t kN = 100000;

ad::Tensor columns_to_matrix(const std::vector<std::vector<double>>& cols) {
  ad::Tensor m({cols[0].size(), cols.size()});
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < cols[j].size(); ++i) m.at(i, j) = cols[j][i];
  return m;
}

int count_heavy(const std::function<std::vector<double>(Rng&)>& draw, int seeds) {
  int heavy = 0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(1000 + s);
    heavy += classify_marginal(draw(rng)).cls == TailClass::heavy;
  }
  return heavy;
}

}  // namespace

TEST(Hill, HandComputedExample) {
  const std::vector<double> s{1.0, -8.0, 2.0, 4.0};
  EXPECT_NEAR(hill_estimate(s, 3), 1.0 / (2.0 * std::log(2.0)), 1e-14);
}

TEST(Hill, ParetoAndStudentOracles) {
  Rng rng(1);
  const auto p = oracle::pareto(rng, 2.0, kN);
  const double a = hill_estimate(p, threshold_count(kN, 2.0 / 3.0));
  EXPECT_GE(a, 1.7);
  EXPECT_LE(a, 2.3);
  const auto t2 = dist::sample_student_t(rng, 2.0, kN);
  const double b = hill_estimate(t2, threshold_count(kN, 2.0 / 3.0));
  EXPECT_GE(b, 1.5);
  EXPECT_LE(b, 2.8);
}

TEST(Hill, ScaleInvariant) {
  Rng rng(2);
  auto s = dist::sample_student_t(rng, 3.0, 5000);
  const double base = hill_estimate(s, 200);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    std::vector<double> scaled(s);
    for (auto& v : scaled) v *= c;
    EXPECT_NEAR(hill_estimate(scaled, 200), base, 1e-10 * base);
  }
}

TEST(Hill, RejectsBadThresholds) {
  const std::vector<double> s{3.0, 2.0, 0.0, 0.0};
  EXPECT_THROW(hill_estimate(s, 0), Error);
  EXPECT_THROW(hill_estimate(s, 4), Error);
  try {
    hill_estimate(s, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::domain_error);
  }
}

TEST(Moments, DomainOracles) {
  Rng rng(3);
  const std::size_t k = threshold_count(kN, 0.6);
  const double g_pareto = moments_estimate(oracle::pareto(rng, 2.0, kN), k);
  EXPECT_GE(g_pareto, 0.35);
  EXPECT_LE(g_pareto, 0.65);
  EXPECT_LE(moments_estimate(dist::sample_normal(rng, kN), k), 0.1);
  const double g_exp = moments_estimate(oracle::exponential(rng, kN), k);
  EXPECT_GE(g_exp, -0.15);
  EXPECT_LE(g_exp, 0.15);
}

TEST(Moments, DegenerateIsStructured) {
  std::vector<double> s(100, 2.0);
  s[0] = 5.0;
  s[1] = 5.0;
  s[99] = 1.0;
  try {
    moments_estimate(s, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate);
  }
}

TEST(Classify, Examples) {
  Rng rng(4);
  EXPECT_EQ(classify_marginal(dist::sample_normal(rng, kN)).cls, TailClass::light);
  const auto t2 = classify_marginal(dist::sample_student_t(rng, 2.0, kN));
  ASSERT_EQ(t2.cls, TailClass::heavy);
  EXPECT_GE(*t2.index, 1.5);
  EXPECT_LE(*t2.index, 2.8);
  EXPECT_EQ(t2.k_used, threshold_count(kN, 2.0 / 3.0));
  const auto t50 = classify_marginal(dist::sample_student_t(rng, 50.0, kN));
  EXPECT_EQ(t50.cls, TailClass::light);
  EXPECT_FALSE(t50.index.has_value());
  EXPECT_THROW(classify_marginal(dist::sample_normal(rng, 499)), Error);
}

TEST(Classify, SeededRatesOverTwentyRuns) {
  for (double nu : {1.0, 2.0, 3.0}) {
    EXPECT_GE(count_heavy([nu](Rng& r) { return dist::sample_student_t(r, nu, kN); }, 20), 18) << "t" << nu;
  }
  EXPECT_LE(count_heavy([](Rng& r) { return dist::sample_normal(r, kN); }, 20), 2);
  EXPECT_LE(count_heavy([](Rng& r) { return oracle::exponential(r, kN); }, 20), 2);
}

TEST(Classify, ThresholdCountIsExactOnPowers) {
  EXPECT_EQ(threshold_count(1000, 2.0 / 3.0), 100u);
  EXPECT_EQ(threshold_count(100000, 0.6), 1000u);
  EXPECT_EQ(threshold_count(100000, 0.7), 3162u);
}

TEST(TailReport, GaussianAndMixedColumns) {
  Rng rng(5);
  std::vector<std::vector<double>> cols;
  for (int j = 0; j < 8; ++j) cols.push_back(dist::sample_normal(rng, 20000));
  auto all_light = build_tail_report(columns_to_matrix(cols));
  EXPECT_EQ(all_light.d_l, 8u);
  EXPECT_EQ(all_light.reorder, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));

  for (int j = 4; j < 8; ++j) cols[j] = dist::sample_student_t(rng, 2.0, 20000);
  auto mixed = build_tail_report(columns_to_matrix(cols));
  EXPECT_EQ(mixed.d_l, 4u);
  EXPECT_EQ(mixed.reorder, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(mixed.heavy_indices().size(), 4u);
  for (const auto& m : mixed.marginals) EXPECT_EQ(m.index.has_value(), m.cls == TailClass::heavy);
}

TEST(TailReport, InterleavedColumnsReorderStablyAndInvert) {
  Rng rng(6);
  std::vector<std::vector<double>> cols;
  for (int j = 0; j < 6; ++j)
    cols.push_back(j % 2 ? dist::sample_student_t(rng, 2.0, 20000) : dist::sample_normal(rng, 20000));
  const auto data = columns_to_matrix(cols);
  const auto report = build_tail_report(data);
  EXPECT_EQ(report.d_l, 3u);
  EXPECT_EQ(report.reorder, (std::vector<std::size_t>{0, 2, 4, 1, 3, 5}));

  ad::Tensor permuted(data.shape());
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t p = 0; p < 6; ++p) permuted.at(i, p) = data.at(i, report.reorder[p]);
  ad::Tensor restored(data.shape());
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t p = 0; p < 6; ++p) restored.at(i, report.reorder[p]) = permuted.at(i, p);
  EXPECT_EQ(restored, data);
}

TEST(Confusion, SelfConsistencyAndAllLight) {
  Rng rng(7);
  std::vector<std::vector<double>> cols;
  std::vector<TailClass> truth;
  for (int j = 0; j < 8; ++j) {
    const bool heavy = j >= 4;
    cols.push_back(heavy ? dist::sample_student_t(rng, 2.0, 20000) : dist::sample_normal(rng, 20000));
    truth.push_back(heavy ? TailClass::heavy : TailClass::light);
  }
  const auto c = synthetic_tail_confusion(truth, columns_to_matrix(cols));
  EXPECT_GE(diagonal(c), 7u);

  for (int j = 4; j < 8; ++j) cols[j] = dist::sample_normal(rng, 20000);
  const auto light = synthetic_tail_confusion(std::vector<TailClass>(8, TailClass::light), columns_to_matrix(cols));
  EXPECT_EQ(light[0][0], 8u);
  EXPECT_EQ(light[0][1] + light[1][0] + light[1][1], 0u);
  EXPECT_THROW(synthetic_tail_confusion(std::vector<TailClass>(3, TailClass::light), columns_to_matrix(cols)), Error);
}
