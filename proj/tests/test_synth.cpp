#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <unistd.h>

#include "oracles.hpp"
#include "tailflow/dist/distributions.hpp"
#include "tailflow/error.hpp"
#include "tailflow/io/csv.hpp"
#include "tailflow/synth/synth.hpp"
#include "tailflow/tail/estimators.hpp"

using namespace tailflow;
using namespace tailflow::synth;
using Kind = MarginalModel::Kind;

namespace {

SynthSpec independent_spec(std::vector<MarginalModel> marginals) {
  SynthSpec s;
  s.dim = marginals.size();
  s.marginals = std::move(marginals);
  s.R.assign(s.dim * s.dim, 0.0);
  for (std::size_t i = 0; i < s.dim; ++i) s.R[i * s.dim + i] = 1.0;
  return s;
}

MarginalModel mixture(Kind kind, std::vector<std::pair<double, double>> loc_scale, double dof = 0.0) {
  MarginalModel m;
  m.kind = kind;
  for (auto [l, s] : loc_scale) m.components.push_back({1.0 / static_cast<double>(loc_scale.size()), l, s, dof});
  return m;
}

// Mixture density integrated numerically; independent of the library cdf.
double quadrature_cdf(const MarginalModel& m, double x) {
  auto pdf = [&](double t) {
    double s = 0.0;
    for (const auto& c : m.components) {
      const double z = (t - c.location) / c.scale;
      double q;
      if (m.kind == Kind::t_mixture) {
        const double nu = c.dof;
        q = std::exp(std::lgamma(0.5 * (nu + 1)) - std::lgamma(0.5 * nu)) / std::sqrt(nu * std::numbers::pi) *
            std::pow(1.0 + z * z / nu, -0.5 * (nu + 1));
      } else {
        q = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      }
      s += c.weight * q / c.scale;
    }
    return s;
  };
  using boost::math::quadrature::gauss_kronrod;
  // Integrate over (-inf, x] via t = x - u/(1-u).
  return gauss_kronrod<double, 61>::integrate(
      [&](double u) { return u >= 1.0 ? 0.0 : pdf(x - u / (1.0 - u)) / ((1.0 - u) * (1.0 - u)); }, 0.0, 1.0, 15, 1e-14);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tailflow_synth_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::create_directories(p);
  return p;
}

std::vector<double> column(const ad::Tensor& t, std::size_t j) {
  std::vector<double> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out[i] = t.at(i, j);
  return out;
}

}  // namespace

TEST(MakeSpec, EightDimensionalLayout) {
  const auto spec = make_spec(8, 4, 2.0, 42);
  ASSERT_EQ(spec.marginals.size(), 8u);
  const Kind kinds[] = {Kind::gaussian, Kind::gaussian, Kind::gaussian_mixture, Kind::gaussian_mixture,
                        Kind::t_mixture, Kind::t_mixture, Kind::t_mixture, Kind::t_mixture};
  const std::size_t counts[] = {1, 1, 2, 3, 2, 2, 2, 2};
  for (std::size_t j = 0; j < 8; ++j) {
    const auto& m = spec.marginals[j];
    EXPECT_EQ(m.kind, kinds[j]) << j;
    ASSERT_EQ(m.components.size(), counts[j]) << j;
    for (const auto& c : m.components) {
      EXPECT_EQ(c.weight, 1.0 / static_cast<double>(counts[j]));
      EXPECT_GE(c.location, -4.0);
      EXPECT_LE(c.location, 4.0);
      EXPECT_GE(c.scale, 1.0);
      EXPECT_LE(c.scale, 2.0);
      if (m.kind == Kind::t_mixture) EXPECT_EQ(c.dof, 2.0);
    }
  }
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(spec.R[i * 8 + i], 1.0);
    for (std::size_t j = i + 1; j < 8; ++j) {
      EXPECT_EQ(spec.R[i * 8 + j], spec.R[j * 8 + i]);
      EXPECT_LE(std::abs(spec.R[i * 8 + j]), 0.25 + 1e-12);
      pairs += spec.R[i * 8 + j] != 0.0;
    }
  }
  EXPECT_EQ(pairs, 16u);
  EXPECT_GT(oracle::symmetric_eigenvalues(spec.R, 8).front(), 0.0);
}

TEST(MakeSpec, DeterministicAndLightOnlyWithoutHeavyCount) {
  const auto a = make_spec(8, 4, 2.0, 7);
  const auto b = make_spec(8, 4, 2.0, 7);
  EXPECT_EQ(spec_to_json(a).dump(), spec_to_json(b).dump());
  EXPECT_NE(spec_to_json(a).dump(), spec_to_json(make_spec(8, 4, 2.0, 8)).dump());
  const auto light = make_spec(8, 0, 2.0, 7);
  for (const auto& m : light.marginals) EXPECT_NE(m.kind, Kind::t_mixture);
  EXPECT_THROW(make_spec(8, 9, 2.0, 1), Error);
}

TEST(MakeSpec, FiftyDimensionalLayoutIsPositiveDefinite) {
  const auto spec = make_spec(50, 10, 2.0, 3);
  for (std::size_t j = 0; j < 50; ++j) {
    EXPECT_EQ(spec.marginals[j].kind, j < 40 ? Kind::gaussian_mixture : Kind::t_mixture);
    EXPECT_EQ(spec.marginals[j].components.size(), 2u);
  }
  EXPECT_GT(oracle::symmetric_eigenvalues(spec.R, 50).front(), 0.0);
  EXPECT_NO_THROW(validate(spec));
}

TEST(NearestCorrelation, RepairsIndefiniteMatrix) {
  // Three mutually strongly anticorrelated variables are impossible.
  const std::vector<double> R{1, -0.9, -0.9, -0.9, 1, -0.9, -0.9, -0.9, 1};
  EXPECT_FALSE(is_positive_definite(R, 3));
  const auto fixed = nearest_correlation(R, 3);
  EXPECT_TRUE(is_positive_definite(fixed, 3));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(fixed[i * 3 + i], 1.0);
  EXPECT_GT(oracle::symmetric_eigenvalues(fixed, 3).front(), 0.0);
}

TEST(Marginal, SymmetricMixtureAndGaussianQuantile) {
  const auto sym = mixture(Kind::gaussian_mixture, {{-2.0, 1.3}, {2.0, 1.3}});
  EXPECT_NEAR(marginal_cdf(sym, 0.0), 0.5, 1e-15);
  EXPECT_NEAR(marginal_icdf(sym, 0.5), 0.0, 1e-12);
  const auto g = MarginalModel::standard_gaussian();
  const double ref = oracle::bisect(oracle::std_normal_cdf, 0.975, -10.0, 10.0);
  EXPECT_NEAR(ref, 1.959964, 1e-6);
  EXPECT_NEAR(marginal_icdf(g, 0.975), ref, 1e-12);
}

TEST(Marginal, CdfMatchesQuadratureForGaussianAndTMixtures) {
  const auto gm = mixture(Kind::gaussian_mixture, {{-1.0, 1.5}, {3.0, 1.1}, {0.5, 2.0}});
  const auto tm = mixture(Kind::t_mixture, {{-2.0, 1.2}, {1.5, 1.8}}, 2.0);
  const auto t5 = mixture(Kind::t_mixture, {{0.3, 1.0}}, 5.0);
  for (const auto* m : {&gm, &tm, &t5})
    for (double x : {-30.0, -4.0, -1.0, 0.0, 0.7, 2.5, 9.0}) EXPECT_NEAR(marginal_cdf(*m, x), quadrature_cdf(*m, x), 1e-10) << x;
}

TEST(Marginal, QuantileRoundTripAndTails) {
  Rng rng(5);
  const auto tm = mixture(Kind::t_mixture, {{-2.0, 1.2}, {1.5, 1.8}}, 2.0);
  const auto gm = mixture(Kind::gaussian_mixture, {{-1.0, 1.5}, {3.0, 1.1}, {0.5, 2.0}});
  for (const auto* m : {&tm, &gm}) {
    for (int i = 0; i < 1000; ++i) {
      const double x = rng.uniform(-10.0, 10.0);
      EXPECT_NEAR(marginal_icdf(*m, marginal_cdf(*m, x)), x, 1e-9);
    }
  }
  // t_2 tails reach far beyond the initial bracket.
  const double q = marginal_isf(tm, 1e-6);
  EXPECT_GT(q, 700.0);
  EXPECT_NEAR(marginal_sf(tm, q) / 1e-6, 1.0, 1e-10);
  EXPECT_THROW(marginal_icdf(tm, 0.0), Error);
  EXPECT_THROW(marginal_icdf(tm, 1.0), Error);
  EXPECT_THROW(marginal_icdf(tm, std::nan("")), Error);
}

TEST(SampleSpec, IndependentGaussiansAreUncorrelated) {
  const auto spec = independent_spec(std::vector<MarginalModel>(4, MarginalModel::standard_gaussian()));
  Rng rng(6);
  const auto x = sample_spec(spec, rng, 100000);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LT(oracle::ks_distance(column(x, i), oracle::std_normal_cdf), 0.005);
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_LT(std::abs(oracle::correlation(column(x, i), column(x, j))), 0.02);
  }
}

TEST(SampleSpec, MarginalsMatchAndCopulaIsPreserved) {
  const auto spec = make_spec(8, 4, 2.0, 11);
  Rng rng(7);
  const auto x = sample_spec(spec, rng, 100000);
  std::vector<std::vector<double>> scores;
  for (std::size_t j = 0; j < 8; ++j) {
    const auto col = column(x, j);
    // marginal_cdf itself is checked against quadrature above.
    EXPECT_LT(oracle::ks_distance(col, [&](double v) { return marginal_cdf(spec.marginals[j], v); }), 0.005) << j;
    scores.push_back(oracle::rank_normal_scores(col));
  }
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j)
      EXPECT_NEAR(oracle::correlation(scores[i], scores[j]), spec.R[i * 8 + j], 0.03) << i << "," << j;
  for (std::size_t j = 4; j < 8; ++j) EXPECT_EQ(tail::classify_marginal(column(x, j)).cls, tail::TailClass::heavy) << j;
}

TEST(SampleSpec, HeavyMarginalMakesRowNormsHeavy) {
  int heavy = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto spec = make_spec(8, 1, 2.0, 100 + seed);
    Rng rng(200 + seed);
    const auto x = sample_spec(spec, rng, 20000);
    std::vector<double> norms(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (double v : x.row_span(i)) s += v * v;
      norms[i] = std::sqrt(s);
    }
    heavy += tail::classify_marginal(norms).cls == tail::TailClass::heavy;
  }
  EXPECT_GE(heavy, 18);
}

TEST(ExactLogpdf, CorrelatedGaussianAtOrigin) {
  auto spec = independent_spec(std::vector<MarginalModel>(2, MarginalModel::standard_gaussian()));
  spec.R = {1.0, 0.7, 0.7, 1.0};
  const double c = 1.0 / std::sqrt(1.0 - 0.49);
  EXPECT_NEAR(c, 1.40028, 1e-5);
  const std::vector<double> x{0.0, 0.0};
  EXPECT_NEAR(exact_logpdf(spec, x), std::log(c) - std::log(2.0 * std::numbers::pi), 1e-14);
  // Against the bivariate normal density away from the origin.
  const std::vector<double> y{0.8, -1.3};
  const double q = (0.64 - 2 * 0.7 * 0.8 * -1.3 + 1.69) / 0.51;
  EXPECT_NEAR(exact_logpdf(spec, y), -std::log(2 * std::numbers::pi) - 0.5 * std::log(0.51) - 0.5 * q, 1e-12);
}

TEST(ExactLogpdf, IndependenceCopulaIsSumOfMarginals) {
  const auto tm = mixture(Kind::t_mixture, {{-2.0, 1.2}, {1.5, 1.8}}, 2.0);
  const auto gm = mixture(Kind::gaussian_mixture, {{-1.0, 1.5}, {3.0, 1.1}});
  const auto spec = independent_spec({tm, gm});
  for (double a : {-50.0, -1.0, 0.0, 3.0, 400.0}) {
    const std::vector<double> x{a, 0.5 * a};
    EXPECT_NEAR(exact_logpdf(spec, x), marginal_logpdf(tm, a) + marginal_logpdf(gm, 0.5 * a), 1e-12);
  }
}

TEST(ExactLogpdf, IntegratesToOneOnTwoDimensionalSpec) {
  const auto spec = make_spec(2, 1, 3.0, 9);
  constexpr double kLo = -60.0, kHi = 60.0, kH = 0.1;
  const auto n = static_cast<std::size_t>((kHi - kLo) / kH);
  ad::Tensor grid({n * n, 2});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      grid.at(i * n + j, 0) = kLo + (i + 0.5) * kH;
      grid.at(i * n + j, 1) = kLo + (j + 0.5) * kH;
    }
  double mass = 0.0;
  for (double lp : exact_logpdf(spec, grid)) mass += std::exp(lp);
  EXPECT_NEAR(mass * kH * kH, 1.0, 2e-2);
}

TEST(ExactLogpdf, EntropyEstimateIsStableAcrossSampleSeeds) {
  const auto spec = make_spec(8, 4, 2.0, 13);
  std::vector<double> means;
  for (int seed = 0; seed < 3; ++seed) {
    Rng rng(300 + seed);
    means.push_back(oracle::mean(exact_logpdf(spec, sample_spec(spec, rng, 100000))));
  }
  for (double m : means) EXPECT_NEAR(m, means[0], 0.05);
}

TEST(SpecJson, RoundTripAndSchemaErrors) {
  const auto spec = make_spec(8, 4, 2.0, 21);
  const auto back = spec_from_json(spec_to_json(spec));
  EXPECT_EQ(spec_to_json(back).dump(), spec_to_json(spec).dump());
  EXPECT_EQ(back.R, spec.R);
  auto doc = spec_to_json(spec);
  doc["version"] = 2;
  EXPECT_THROW(spec_from_json(doc), Error);
  doc = spec_to_json(spec);
  doc["R"][0][1] = 0.9;
  EXPECT_THROW(spec_from_json(doc), Error);
  doc = spec_to_json(spec);
  doc["marginals"][0].erase("kind");
  EXPECT_THROW(spec_from_json(doc), Error);
}

TEST(EmitDatasets, SizesDeterminismAndParseBack) {
  const auto spec = make_spec(8, 4, 2.0, 31);
  const DatasetSizes sizes{300, 200, 500};
  const auto dir_a = temp_dir("a"), dir_b = temp_dir("b");
  emit_datasets(spec, sizes, default_paths(dir_a));
  emit_datasets(spec, sizes, default_paths(dir_b));
  for (const char* name : {"train.csv", "val.csv", "test.csv", "spec.json"})
    EXPECT_EQ(io::read_text(dir_a / name), io::read_text(dir_b / name)) << name;
  EXPECT_EQ(io::read_matrix_csv(dir_a / "train.csv").rows(), 300u);
  EXPECT_EQ(io::read_matrix_csv(dir_a / "val.csv").rows(), 200u);
  const auto test = io::read_matrix_csv(dir_a / "test.csv");
  EXPECT_EQ(test.rows(), 500u);
  EXPECT_EQ(test.cols(), 8u);
  for (double v : test.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(spec_to_json(spec_from_json(nlohmann::json::parse(io::read_text(dir_a / "spec.json")))).dump(),
            spec_to_json(spec).dump());
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST(Csv, MatrixHeaderAndErrors) {
  const auto dir = temp_dir("csv");
  const auto m = ad::Tensor::matrix({{0.1, -2.5e-300}, {1.0 / 3.0, 7.0}});
  io::write_matrix_csv(dir / "h.csv", m, true);
  EXPECT_EQ(io::read_text(dir / "h.csv").substr(0, 6), "c0,c1\n");
  const auto back = io::read_matrix_csv(dir / "h.csv");
  EXPECT_TRUE(std::equal(back.data().begin(), back.data().end(), m.data().begin()));
  io::write_text_atomic(dir / "ragged.csv", "1,2\n3\n");
  EXPECT_THROW(io::read_matrix_csv(dir / "ragged.csv"), Error);
  io::write_text_atomic(dir / "nan.csv", "1,nan\n");
  EXPECT_THROW(io::read_matrix_csv(dir / "nan.csv"), Error);
  EXPECT_THROW(io::read_matrix_csv(dir / "missing.csv"), Error);
  io::write_table_csv(dir / "t.csv", {"name", "note"}, {{"a,b", "say \"hi\""}, {"x", ""}});
  const auto rows = io::read_table_csv(dir / "t.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "a,b");
  EXPECT_EQ(rows[1][1], "say \"hi\"");
  EXPECT_EQ(rows[2][1], "");
  std::filesystem::remove_all(dir);
}
