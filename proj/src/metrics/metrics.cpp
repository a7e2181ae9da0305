#include "tailflow/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "tailflow/error.hpp"

namespace tailflow::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ceil(x) with slack for products like 0.05 * 100 landing just above an integer.
std::size_t guarded_ceil(double x) { return static_cast<std::size_t>(std::ceil(x - 1e-9)); }

std::vector<double> sorted_abs_descending(std::span<const double> v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::abs(x); });
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

// Empirical complementary-CDF inverse at p: the ceil(p N)-th largest value.
double survival_quantile(const std::vector<double>& desc, double p) {
  const std::size_t N = desc.size();
  const std::size_t k = std::clamp<std::size_t>(guarded_ceil(p * static_cast<double>(N)), 1, N);
  return desc[k - 1];
}

std::vector<double> column(const ad::Tensor& t, std::size_t j) {
  std::vector<double> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out[i] = t.at(i, j);
  return out;
}

double mean_or_nan(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}


}  // namespace

double tvar(std::span<const double> samples, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::domain_error, "tvar: alpha must lie in (0, 1)");
  const std::size_t n = samples.size();
  const std::size_t m = std::min(n, guarded_ceil((1.0 - alpha) * static_cast<double>(n)));
  if (m == 0) throw Error(Errc::invalid_argument, "tvar: no samples above the alpha quantile");
  std::vector<double> v(samples.begin(), samples.end());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n - m), v.end());
  double s = 0.0;
  for (std::size_t i = n - m; i < n; ++i) s += v[i];
  return s / static_cast<double>(m);
}

double tvar_diff(std::span<const double> data, std::span<const double> flow, double alpha) {
  return std::abs(tvar(data, alpha) - tvar(flow, alpha));
}

AreaResult area_loglog(std::span<const double> data, std::span<const double> flow, std::optional<std::size_t> n) {
  const std::size_t limit = std::min(data.size(), flow.size());
  const std::size_t terms = n ? *n : std::min(limit, kAreaMaxTerms);
  if (terms == 0) throw Error(Errc::invalid_argument, "area_loglog: need at least one point per column");
  if (terms > limit) {
    throw Error(Errc::invalid_argument, "area_loglog: n = " + std::to_string(terms) + " exceeds column length " +
                                            std::to_string(limit));
  }
  const auto d = sorted_abs_descending(data);
  const auto f = sorted_abs_descending(flow);
  AreaResult r;
  const double nn = static_cast<double>(terms);
  for (std::size_t i = 1; i <= terms; ++i) {
    const double p = static_cast<double>(i) / nn;
    const double qd = survival_quantile(d, p);
    const double qf = survival_quantile(f, p);
    if (!(qd > 0.0) || !(qf > 0.0)) {
      ++r.skipped;
      continue;
    }
    r.area += std::abs(std::log(qd) - std::log(qf)) * std::log1p(1.0 / static_cast<double>(i));
    ++r.terms;
  }
  return r;
}

MetricSummary summarize_samples(const ad::Tensor& flow_samples, const ad::Tensor& test_data,
                                const std::vector<bool>& heavy_mask, double nll) {
  if (flow_samples.rank() != 2 || test_data.rank() != 2 || flow_samples.cols() != test_data.cols() ||
      heavy_mask.size() != test_data.cols()) {
    throw Error(Errc::shape_mismatch, "summarize: flow " + ad::to_string(flow_samples.shape()) + ", test " +
                                          ad::to_string(test_data.shape()) + ", mask of " +
                                          std::to_string(heavy_mask.size()));
  }
  MetricSummary s;
  s.nll = nll;
  std::vector<double> area_l, area_h, tvar_l, tvar_h;
  std::vector<tail::TailClass> truth;
  for (std::size_t j = 0; j < test_data.cols(); ++j) {
    const auto dc = column(test_data, j);
    const auto fc = column(flow_samples, j);
    ColumnMetrics c;
    c.heavy = heavy_mask[j];
    c.tvar_diff = tvar_diff(dc, fc);
    const auto a = area_loglog(dc, fc);
    c.area = a.area;
    c.area_skipped = a.skipped;
    (c.heavy ? area_h : area_l).push_back(c.area);
    (c.heavy ? tvar_h : tvar_l).push_back(c.tvar_diff);
    truth.push_back(c.heavy ? tail::TailClass::heavy : tail::TailClass::light);
    s.columns.push_back(c);
  }
  s.area_light = mean_or_nan(area_l);
  s.area_heavy = mean_or_nan(area_h);
  s.tvar_light = mean_or_nan(tvar_l);
  s.tvar_heavy = mean_or_nan(tvar_h);
  s.confusion = tail::synthetic_tail_confusion(truth, flow_samples);
  return s;
}

MetricSummary summarize(const model::FlowModel& model, const ad::Tensor& flow_samples, const ad::Tensor& test_data,
                        const std::vector<bool>& heavy_mask) {
  return summarize_samples(flow_samples, test_data, heavy_mask, model.nll(test_data));
}

nlohmann::json summary_to_json(const MetricSummary& s) {
  // NaN has no JSON spelling; absent classes become null.
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns)
    cols.push_back({{"heavy", c.heavy}, {"tvar_diff", num(c.tvar_diff)}, {"area", num(c.area)},
                    {"area_skipped", c.area_skipped}});
  return {{"nll", num(s.nll)},
          {"area_light", num(s.area_light)},
          {"area_heavy", num(s.area_heavy)},
          {"tvar_light", num(s.tvar_light)},
          {"tvar_heavy", num(s.tvar_heavy)},
          {"confusion", {{s.confusion[0][0], s.confusion[0][1]}, {s.confusion[1][0], s.confusion[1][1]}}},
          {"confusion_diagonal", tail::diagonal(s.confusion)},
          {"columns", std::move(cols)}};
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(Errc::invalid_argument, "quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(Errc::domain_error, "quantile: level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<ProjectionStat> projection_stats(const ad::Tensor& data, const ad::Tensor& flow, std::size_t n_proj,
                                             Rng& rng) {
  if (data.rank() != 2 || flow.rank() != 2 || data.cols() != flow.cols()) {
    throw Error(Errc::shape_mismatch, "projection_stats: data " + ad::to_string(data.shape()) + " vs flow " +
                                          ad::to_string(flow.shape()));
  }
  const std::size_t d = data.cols();
  auto project = [d](const ad::Tensor& x, const std::vector<double>& w) {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += w[j] * x.at(i, j);
      out[i] = s;
    }
    return out;
  };
  auto mean_std = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
  };
  std::vector<ProjectionStat> out;
  out.reserve(n_proj);
  std::vector<double> w(d);
  for (std::size_t k = 0; k < n_proj; ++k) {
    for (auto& v : w) v = rng.uniform(0.0, 1.0);
    const auto pd = project(data, w);
    const auto pf = project(flow, w);
    const auto [dm, ds] = mean_std(pd);
    const auto [fm, fs] = mean_std(pf);
    out.push_back({dm, fm, ds, fs, quantile(pd, 0.01), quantile(pf, 0.01)});
  }
  return out;
}

std::vector<QQPoint> qq_data(std::span<const double> data, std::span<const double> flow, std::size_t points) {
  if (points == 0) throw Error(Errc::invalid_argument, "qq_data: need at least one point");
  std::vector<double> d(data.begin(), data.end()), f(flow.begin(), flow.end());
  if (d.empty() || f.empty()) throw Error(Errc::invalid_argument, "qq_data: empty column");
  std::sort(d.begin(), d.end());
  std::sort(f.begin(), f.end());
  auto at = [](const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  std::vector<QQPoint> out;
  for (std::size_t i = 0; i < points; ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(points);
    out.push_back({q, at(d, q), at(f, q)});
  }
  return out;
}

}  // namespace tailflow::metrics
