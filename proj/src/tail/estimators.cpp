#include "tailflow/tail/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "tailflow/error.hpp"

namespace tailflow::tail {
namespace {

// Top k+1 order statistics of |samples|, descending.
std::vector<double> top_order_statistics(std::span<const double> samples, std::size_t k, const char* where) {
  const std::size_t n = samples.size();
  if (k < 1 || k >= n) {
    throw Error(Errc::out_of_range,
                std::string(where) + ": k must satisfy 1 <= k < n, got k=" + std::to_string(k) + " n=" + std::to_string(n));
  }
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::abs(samples[i]);
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), a.end(), std::greater<>());
  std::sort(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), std::greater<>());
  a.resize(k + 1);
  if (!(a[k] > 0.0)) throw Error(Errc::domain_error, std::string(where) + ": threshold order statistic is not positive");
  if (!std::isfinite(a[0])) throw Error(Errc::non_finite, std::string(where) + ": non-finite sample");
  return a;
}

}  // namespace

double hill_estimate(std::span<const double> samples, std::size_t k) {
  const auto top = top_order_statistics(samples, k, "hill_estimate");
  const double log_threshold = std::log(top[k]);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::log(top[i]) - log_threshold;
  if (!(s > 0.0)) throw Error(Errc::degenerate, "hill_estimate: top order statistics are all equal");
  return static_cast<double>(k) / s;
}

double moments_estimate(std::span<const double> samples, std::size_t k) {
  const auto top = top_order_statistics(samples, k, "moments_estimate");
  const double log_threshold = std::log(top[k]);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double e = std::log(top[i]) - log_threshold;
    m1 += e;
    m2 += e * e;
  }
  m1 /= static_cast<double>(k);
  m2 /= static_cast<double>(k);
  const double ratio = 1.0 - m1 * m1 / m2;
  if (!(m2 > 0.0) || !(ratio > 0.0)) throw Error(Errc::degenerate, "moments_estimate: M2 equals M1^2");
  return m1 + 1.0 - 0.5 / ratio;
}

std::size_t threshold_count(std::size_t n, double power) {
  return static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), power) + 1e-9));
}

MarginalTail classify_marginal(std::span<const double> samples, const ClassifierOptions& opts) {
  const std::size_t n = samples.size();
  if (n < 500) throw Error(Errc::invalid_argument, "classify_marginal: need at least 500 samples, got " + std::to_string(n));
  const double g1 = moments_estimate(samples, threshold_count(n, opts.moments_power_1));
  const double g2 = moments_estimate(samples, threshold_count(n, opts.moments_power_2));
  const std::size_t k = threshold_count(n, opts.hill_power);
  MarginalTail out;
  out.k_used = k;
  if (g1 <= opts.gamma_min && g2 <= opts.gamma_min) return out;
  const double alpha = hill_estimate(samples, k);
  if (alpha > opts.max_index) return out;
  out.cls = TailClass::heavy;
  out.index = std::clamp(alpha, opts.min_index, opts.max_index);
  return out;
}

std::vector<TailClass> TailReport::classes() const {
  std::vector<TailClass> out;
  out.reserve(marginals.size());
  for (const auto& m : marginals) out.push_back(m.cls);
  return out;
}

std::vector<double> TailReport::heavy_indices() const {
  std::vector<double> out;
  for (std::size_t p : reorder) {
    if (marginals[p].cls == TailClass::heavy) out.push_back(*marginals[p].index);
  }
  return out;
}

std::vector<std::size_t> light_first_order(const std::vector<TailClass>& classes) {
  std::vector<std::size_t> order;
  order.reserve(classes.size());
  for (std::size_t j = 0; j < classes.size(); ++j)
    if (classes[j] == TailClass::light) order.push_back(j);
  for (std::size_t j = 0; j < classes.size(); ++j)
    if (classes[j] == TailClass::heavy) order.push_back(j);
  return order;
}

TailReport build_tail_report(const ad::Tensor& data, const ClassifierOptions& opts) {
  if (data.rank() != 2) throw Error(Errc::shape_mismatch, "build_tail_report: expected a matrix, got " + ad::to_string(data.shape()));
  TailReport report;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    const auto col = data.column(j);
    try {
      report.marginals.push_back(classify_marginal(col, opts));
    } catch (const Error& e) {
      throw Error(e.code(), "column " + std::to_string(j) + ": " + e.message());
    }
    if (report.marginals.back().cls == TailClass::light) ++report.d_l;
  }
  report.reorder = light_first_order(report.classes());
  return report;
}

Confusion synthetic_tail_confusion(const std::vector<TailClass>& truth, const ad::Tensor& flow_samples,
                                   const ClassifierOptions& opts) {
  if (flow_samples.rank() != 2 || flow_samples.cols() != truth.size()) {
    throw Error(Errc::shape_mismatch, "synthetic_tail_confusion: " + std::to_string(truth.size()) +
                                          " classes but samples of shape " + ad::to_string(flow_samples.shape()));
  }
  Confusion c{};
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const auto pred = classify_marginal(flow_samples.column(j), opts).cls;
    ++c[truth[j] == TailClass::heavy][pred == TailClass::heavy];
  }
  return c;
}

std::size_t diagonal(const Confusion& c) noexcept { return c[0][0] + c[1][1]; }

}  // namespace tailflow::tail
