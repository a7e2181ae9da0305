#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "tailflow/ad/tensor.hpp"
#include "tailflow/rng.hpp"

namespace tailflow::synth {

struct Component {
  double weight = 1.0;
  double location = 0.0;
  double scale = 1.0;
  double dof = 0.0;  // used by t mixtures only
};

struct MarginalModel {
  enum class Kind { gaussian, gaussian_mixture, t_mixture };
  Kind kind = Kind::gaussian;
  std::vector<Component> components;

  static MarginalModel standard_gaussian();
};

const char* to_string(MarginalModel::Kind kind) noexcept;
MarginalModel::Kind parse_marginal_kind(const std::string& name);

/// Gaussian copula with mixture marginals.
struct SynthSpec {
  std::size_t dim = 0;
  std::size_t d_h = 0;
  double nu = 0.0;
  std::uint64_t seed = 0;
  std::vector<MarginalModel> marginals;
  /// Row-major dim x dim correlation matrix.
  std::vector<double> R;
};

/// Throws invalid_argument when scales are nonpositive, weights do not sum to
/// one, a t component lacks dof, or R is not a symmetric unit-diagonal PD matrix.
void validate(const SynthSpec& spec);

/// Number of correlated pairs drawn for dimension `dim`.
std::size_t correlated_pair_count(std::size_t dim);

/// Randomized target: D=50 uses 2-mixture Gaussians followed by d_h t
/// 2-mixtures; every other D follows the D=8 layout (two Gaussians, a
/// 2-mixture, a 3-mixture, 2-mixtures, with the last d_h replaced by t
/// 2-mixtures). Correlated pairs get R = 0.25.
SynthSpec make_spec(std::size_t dim, std::size_t d_h, double nu, std::uint64_t seed);

/// Symmetrizes, clips eigenvalues at `floor` and rescales to unit diagonal.
std::vector<double> nearest_correlation(const std::vector<double>& R, std::size_t dim, double floor = 1e-3);
bool is_positive_definite(const std::vector<double>& R, std::size_t dim);

double marginal_logpdf(const MarginalModel& m, double x);
double marginal_cdf(const MarginalModel& m, double x);
/// 1 - cdf, computed without cancellation in the upper tail.
double marginal_sf(const MarginalModel& m, double x);
/// Requires u in (0, 1).
double marginal_icdf(const MarginalModel& m, double u);
/// Solves sf(x) = p for small upper-tail probabilities.
double marginal_isf(const MarginalModel& m, double p);

ad::Tensor sample_spec(const SynthSpec& spec, Rng& rng, std::size_t n);

/// Gaussian copula log density plus marginal log densities. CDF values are
/// clamped to [1e-15, 1 - 1e-15] before the normal-score transform.
double exact_logpdf(const SynthSpec& spec, std::span<const double> x);
std::vector<double> exact_logpdf(const SynthSpec& spec, const ad::Tensor& x);

nlohmann::json spec_to_json(const SynthSpec& spec);
SynthSpec spec_from_json(const nlohmann::json& doc);

struct DatasetSizes {
  std::size_t train = 15000;
  std::size_t val = 10000;
  std::size_t test = 75000;
};

struct DatasetPaths {
  std::filesystem::path train, val, test, spec;
};

DatasetPaths default_paths(const std::filesystem::path& dir);

/// Draws train, val and test from one stream seeded by spec.seed and writes
/// them plus the spec document.
void emit_datasets(const SynthSpec& spec, const DatasetSizes& sizes, const DatasetPaths& paths, bool header = false);

}  // namespace tailflow::synth
