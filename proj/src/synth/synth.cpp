#include "tailflow/synth/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tailflow/dist/distributions.hpp"
#include "tailflow/dist/special.hpp"
#include "tailflow/error.hpp"
#include "tailflow/io/csv.hpp"

namespace tailflow::synth {

using json = nlohmann::json;

namespace {

constexpr double kCdfClamp = 1e-15;
constexpr int kMaxAttempts = 10;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix as_matrix(const std::vector<double>& R, std::size_t dim) {
  return Eigen::Map<const Matrix>(R.data(), static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
}

std::vector<double> as_vector(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

bool is_t(const MarginalModel& m) { return m.kind == MarginalModel::Kind::t_mixture; }

double component_cdf(const MarginalModel& m, const Component& c, double z) {
  return is_t(m) ? dist::student_t_cdf(z, c.dof) : dist::normal_cdf(z);
}

double component_logpdf(const MarginalModel& m, const Component& c, double z) {
  return is_t(m) ? dist::student_t_logpdf(z, c.dof) : dist::normal_logpdf(z);
}

MarginalModel random_mixture(Rng& rng, MarginalModel::Kind kind, std::size_t n_comp, double nu) {
  MarginalModel m;
  m.kind = kind;
  for (std::size_t c = 0; c < n_comp; ++c) {
    Component comp;
    comp.weight = 1.0 / static_cast<double>(n_comp);
    comp.location = rng.uniform(-4.0, 4.0);
    comp.scale = rng.uniform(1.0, 2.0);
    if (kind == MarginalModel::Kind::t_mixture) comp.dof = nu;
    m.components.push_back(comp);
  }
  return m;
}

// Solves tail(x) = p where tail is the cdf (lower) or survival function
// (upper), by safeguarded Newton steps inside an expanding bracket.
double solve_tail(const MarginalModel& m, double p, bool upper) {
  auto tail = [&](double x) { return upper ? marginal_sf(m, x) : marginal_cdf(m, x); };
  // g is increasing in x for both sides.
  auto g = [&](double x) { return upper ? p - tail(x) : tail(x) - p; };
  double lo = -64.0, hi = 64.0;
  while (g(lo) > 0.0) {
    lo *= 2.0;
    if (!std::isfinite(lo) || lo < -1e300) throw Error(Errc::domain_error, "marginal quantile: bracket overflow");
  }
  while (g(hi) < 0.0) {
    hi *= 2.0;
    if (!std::isfinite(hi) || hi > 1e300) throw Error(Errc::domain_error, "marginal quantile: bracket overflow");
  }
  double loc = 0.0, scale = 0.0;
  for (const auto& c : m.components) {
    loc += c.weight * c.location;
    scale += c.weight * c.scale;
  }
  double x = std::clamp(loc + scale * (upper ? -dist::normal_icdf(p) : dist::normal_icdf(p)), lo, hi);
  for (int it = 0; it < 300; ++it) {
    const double gx = g(x);
    if (std::abs(gx) <= 1e-12 * p) return x;
    if (gx < 0.0) lo = x; else hi = x;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) return x;
    const double slope = std::exp(marginal_logpdf(m, x));
    double next = x - gx / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

double normal_score(const MarginalModel& m, double x) {
  const double F = marginal_cdf(m, x);
  if (F < 0.5) return dist::normal_icdf(std::max(F, kCdfClamp));
  const double S = std::clamp(marginal_sf(m, x), kCdfClamp, 0.5);
  return -dist::normal_icdf(S);
}

struct CopulaTerms {
  Matrix precision_minus_identity;
  double half_log_det = 0.0;
};

CopulaTerms copula_terms(const SynthSpec& spec) {
  const Matrix R = as_matrix(spec.R, spec.dim);
  Eigen::LLT<Matrix> llt(R);
  if (llt.info() != Eigen::Success) throw Error(Errc::invalid_argument, "synth spec: R is not positive definite");
  CopulaTerms t;
  t.precision_minus_identity = llt.solve(Matrix::Identity(R.rows(), R.cols())) - Matrix::Identity(R.rows(), R.cols());
  t.half_log_det = llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return t;
}

double logpdf_with(const SynthSpec& spec, const CopulaTerms& t, std::span<const double> x) {
  if (x.size() != spec.dim) {
    throw Error(Errc::shape_mismatch, "exact_logpdf: expected " + std::to_string(spec.dim) + " values, got " +
                                          std::to_string(x.size()));
  }
  Eigen::VectorXd w(static_cast<Eigen::Index>(spec.dim));
  double marginal = 0.0;
  for (std::size_t j = 0; j < spec.dim; ++j) {
    if (!std::isfinite(x[j])) throw Error(Errc::non_finite, "exact_logpdf: coordinate " + std::to_string(j) + " is not finite");
    marginal += marginal_logpdf(spec.marginals[j], x[j]);
    w[static_cast<Eigen::Index>(j)] = normal_score(spec.marginals[j], x[j]);
  }
  return -t.half_log_det - 0.5 * w.dot(t.precision_minus_identity * w) + marginal;
}

}  // namespace

MarginalModel MarginalModel::standard_gaussian() {
  MarginalModel m;
  m.components.push_back({1.0, 0.0, 1.0, 0.0});
  return m;
}

const char* to_string(MarginalModel::Kind kind) noexcept {
  switch (kind) {
    case MarginalModel::Kind::gaussian: return "gaussian";
    case MarginalModel::Kind::gaussian_mixture: return "gaussian_mixture";
    case MarginalModel::Kind::t_mixture: return "t_mixture";
  }
  return "?";
}

MarginalModel::Kind parse_marginal_kind(const std::string& name) {
  if (name == "gaussian") return MarginalModel::Kind::gaussian;
  if (name == "gaussian_mixture") return MarginalModel::Kind::gaussian_mixture;
  if (name == "t_mixture") return MarginalModel::Kind::t_mixture;
  throw Error(Errc::parse_error, "unknown marginal kind '" + name + "'");
}

void validate(const SynthSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_argument, "synth spec: " + msg); };
  if (spec.dim == 0) fail("dimension must be positive");
  if (spec.marginals.size() != spec.dim) fail("expected " + std::to_string(spec.dim) + " marginals");
  if (spec.R.size() != spec.dim * spec.dim) fail("R must be dim x dim");
  for (std::size_t j = 0; j < spec.dim; ++j) {
    const auto& m = spec.marginals[j];
    const std::string where = "marginal " + std::to_string(j) + ": ";
    if (m.components.empty()) fail(where + "no components");
    double total = 0.0;
    for (const auto& c : m.components) {
      if (!(c.scale > 0.0) || !std::isfinite(c.scale)) fail(where + "scale must be positive");
      if (!std::isfinite(c.location)) fail(where + "location must be finite");
      if (!(c.weight > 0.0)) fail(where + "weights must be positive");
      if (is_t(m) && !(c.dof > 0.0)) fail(where + "t components need positive dof");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) fail(where + "weights must sum to 1");
  }
  for (std::size_t i = 0; i < spec.dim; ++i) {
    if (spec.R[i * spec.dim + i] != 1.0) fail("R must have unit diagonal");
    for (std::size_t j = 0; j < i; ++j)
      if (spec.R[i * spec.dim + j] != spec.R[j * spec.dim + i]) fail("R must be symmetric");
  }
  if (!is_positive_definite(spec.R, spec.dim)) fail("R must be positive definite");
}

std::size_t correlated_pair_count(std::size_t dim) {
  const std::size_t all = dim * (dim - 1) / 2;
  if (dim == 50) return 200;
  return std::min(2 * dim, all);
}

bool is_positive_definite(const std::vector<double>& R, std::size_t dim) {
  Eigen::LLT<Matrix> llt(as_matrix(R, dim));
  return llt.info() == Eigen::Success;
}

std::vector<double> nearest_correlation(const std::vector<double>& R, std::size_t dim, double floor) {
  Matrix m = as_matrix(R, dim);
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  Eigen::VectorXd values = eig.eigenvalues().cwiseMax(floor);
  Matrix clipped = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::VectorXd inv_sd = clipped.diagonal().cwiseSqrt().cwiseInverse();
  Matrix out = inv_sd.asDiagonal() * clipped * inv_sd.asDiagonal();
  out = 0.5 * (out + out.transpose()).eval();
  out.diagonal().setOnes();
  return as_vector(out);
}

SynthSpec make_spec(std::size_t dim, std::size_t d_h, double nu, std::uint64_t seed) {
  if (dim == 0) throw Error(Errc::invalid_argument, "make_spec: dimension must be positive");
  if (d_h > dim) throw Error(Errc::invalid_argument, "make_spec: d_h must not exceed D");
  if (d_h > 0 && !(nu > 0.0)) throw Error(Errc::invalid_argument, "make_spec: nu must be positive");
  SynthSpec spec;
  spec.dim = dim;
  spec.d_h = d_h;
  spec.nu = nu;
  spec.seed = seed;
  Rng rng(seed);
  using Kind = MarginalModel::Kind;
  for (std::size_t j = 0; j < dim; ++j) {
    if (j >= dim - d_h) {
      spec.marginals.push_back(random_mixture(rng, Kind::t_mixture, 2, nu));
    } else if (dim == 50) {
      spec.marginals.push_back(random_mixture(rng, Kind::gaussian_mixture, 2, nu));
    } else if (j < 2) {
      spec.marginals.push_back(random_mixture(rng, Kind::gaussian, 1, nu));
    } else if (j == 3) {
      spec.marginals.push_back(random_mixture(rng, Kind::gaussian_mixture, 3, nu));
    } else {
      spec.marginals.push_back(random_mixture(rng, Kind::gaussian_mixture, 2, nu));
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> all_pairs;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i + 1; j < dim; ++j) all_pairs.emplace_back(i, j);
  const std::size_t n_pairs = correlated_pair_count(dim);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng pair_rng = rng.split();
    auto pairs = all_pairs;
    for (std::size_t k = 0; k < n_pairs; ++k) std::swap(pairs[k], pairs[k + pair_rng.below(pairs.size() - k)]);
    std::vector<double> R(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) R[i * dim + i] = 1.0;
    for (std::size_t k = 0; k < n_pairs; ++k) {
      const auto [i, j] = pairs[k];
      R[i * dim + j] = R[j * dim + i] = 0.25;
    }
    if (!is_positive_definite(R, dim)) R = nearest_correlation(R, dim);
    if (is_positive_definite(R, dim)) {
      spec.R = std::move(R);
      return spec;
    }
  }
  throw Error(Errc::degenerate, "make_spec: no positive definite correlation matrix after " +
                                    std::to_string(kMaxAttempts) + " attempts");
}

double marginal_logpdf(const MarginalModel& m, double x) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(m.components.size());
  for (const auto& c : m.components) {
    const double t = std::log(c.weight) - std::log(c.scale) + component_logpdf(m, c, (x - c.location) / c.scale);
    terms.push_back(t);
    best = std::max(best, t);
  }
  if (!std::isfinite(best)) return best;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - best);
  return best + std::log(s);
}

double marginal_cdf(const MarginalModel& m, double x) {
  double F = 0.0;
  for (const auto& c : m.components) F += c.weight * component_cdf(m, c, (x - c.location) / c.scale);
  return F;
}

double marginal_sf(const MarginalModel& m, double x) {
  double S = 0.0;
  for (const auto& c : m.components) S += c.weight * component_cdf(m, c, (c.location - x) / c.scale);
  return S;
}

double marginal_icdf(const MarginalModel& m, double u) {
  if (!(u > 0.0 && u < 1.0)) throw Error(Errc::domain_error, "marginal_icdf: u must lie in (0, 1), got " + io::format_double(u));
  return u <= 0.5 ? solve_tail(m, u, false) : solve_tail(m, 1.0 - u, true);
}

double marginal_isf(const MarginalModel& m, double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::domain_error, "marginal_isf: p must lie in (0, 1), got " + io::format_double(p));
  return p <= 0.5 ? solve_tail(m, p, true) : solve_tail(m, 1.0 - p, false);
}

ad::Tensor sample_spec(const SynthSpec& spec, Rng& rng, std::size_t n) {
  const std::size_t d = spec.dim;
  const Matrix R = as_matrix(spec.R, d);
  Eigen::LLT<Matrix> llt(R);
  if (llt.info() != Eigen::Success) throw Error(Errc::invalid_argument, "sample_spec: R is not positive definite");
  const Matrix L = llt.matrixL();
  ad::Tensor out({n, d});
  Eigen::VectorXd e(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) e[static_cast<Eigen::Index>(j)] = rng.normal();
    const Eigen::VectorXd w = L * e;
    for (std::size_t j = 0; j < d; ++j) {
      const double wj = w[static_cast<Eigen::Index>(j)];
      // Solve on the side of the smaller tail probability.
      out.at(i, j) = wj <= 0.0 ? solve_tail(spec.marginals[j], dist::normal_cdf(wj), false)
                               : solve_tail(spec.marginals[j], dist::normal_cdf(-wj), true);
    }
  }
  return out;
}

double exact_logpdf(const SynthSpec& spec, std::span<const double> x) {
  return logpdf_with(spec, copula_terms(spec), x);
}

std::vector<double> exact_logpdf(const SynthSpec& spec, const ad::Tensor& x) {
  if (x.rank() != 2 || x.cols() != spec.dim) {
    throw Error(Errc::shape_mismatch, "exact_logpdf: expected [n x " + std::to_string(spec.dim) + "], got " +
                                          ad::to_string(x.shape()));
  }
  const auto terms = copula_terms(spec);
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = logpdf_with(spec, terms, x.row_span(i));
  return out;
}

json spec_to_json(const SynthSpec& spec) {
  json marginals = json::array();
  for (const auto& m : spec.marginals) {
    json comps = json::array();
    for (const auto& c : m.components) {
      json jc = {{"weight", c.weight}, {"location", c.location}, {"scale", c.scale}};
      if (is_t(m)) jc["dof"] = c.dof;
      comps.push_back(std::move(jc));
    }
    marginals.push_back({{"kind", to_string(m.kind)}, {"components", std::move(comps)}});
  }
  json R = json::array();
  for (std::size_t i = 0; i < spec.dim; ++i)
    R.push_back(std::vector<double>(spec.R.begin() + static_cast<std::ptrdiff_t>(i * spec.dim),
                                    spec.R.begin() + static_cast<std::ptrdiff_t>((i + 1) * spec.dim)));
  return {{"schema", "tailflow-synth-spec"}, {"version", 1}, {"dim", spec.dim}, {"d_h", spec.d_h},
          {"nu", spec.nu}, {"seed", spec.seed}, {"marginals", std::move(marginals)}, {"R", std::move(R)}};
}

SynthSpec spec_from_json(const json& doc) {
  try {
    if (doc.at("schema") != "tailflow-synth-spec") throw Error(Errc::schema_mismatch, "not a synth spec document");
    if (doc.at("version") != 1) {
      throw Error(Errc::schema_mismatch, "unsupported synth spec version " + doc.at("version").dump());
    }
    SynthSpec spec;
    spec.dim = doc.at("dim").get<std::size_t>();
    spec.d_h = doc.at("d_h").get<std::size_t>();
    spec.nu = doc.at("nu").get<double>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& jm : doc.at("marginals")) {
      MarginalModel m;
      m.kind = parse_marginal_kind(jm.at("kind").get<std::string>());
      for (const auto& jc : jm.at("components")) {
        Component c;
        c.weight = jc.at("weight").get<double>();
        c.location = jc.at("location").get<double>();
        c.scale = jc.at("scale").get<double>();
        if (is_t(m)) c.dof = jc.at("dof").get<double>();
        m.components.push_back(c);
      }
      spec.marginals.push_back(std::move(m));
    }
    for (const auto& row : doc.at("R")) {
      if (row.size() != spec.dim) throw Error(Errc::schema_mismatch, "R rows must have dim entries");
      for (const auto& v : row) spec.R.push_back(v.get<double>());
    }
    validate(spec);
    return spec;
  } catch (const json::exception& e) {
    throw Error(Errc::schema_mismatch, std::string("synth spec: ") + e.what());
  }
}

DatasetPaths default_paths(const std::filesystem::path& dir) {
  return {dir / "train.csv", dir / "val.csv", dir / "test.csv", dir / "spec.json"};
}

void emit_datasets(const SynthSpec& spec, const DatasetSizes& sizes, const DatasetPaths& paths, bool header) {
  validate(spec);
  Rng rng(spec.seed);
  Rng data_rng = rng.split();
  const ad::Tensor train = sample_spec(spec, data_rng, sizes.train);
  const ad::Tensor val = sample_spec(spec, data_rng, sizes.val);
  const ad::Tensor test = sample_spec(spec, data_rng, sizes.test);
  io::write_matrix_csv(paths.train, train, header);
  io::write_matrix_csv(paths.val, val, header);
  io::write_matrix_csv(paths.test, test, header);
  io::write_text_atomic(paths.spec, spec_to_json(spec).dump(1) + "\n");
}

}  // namespace tailflow::synth
