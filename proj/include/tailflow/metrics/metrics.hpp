#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "tailflow/ad/tensor.hpp"
#include "tailflow/model/flow_model.hpp"
#include "tailflow/rng.hpp"
#include "tailflow/tail/estimators.hpp"

namespace tailflow::metrics {

inline constexpr double kTvarLevel = 0.95;
inline constexpr std::size_t kAreaMaxTerms = 100000;

/// Mean of the upper ceil((1 - alpha) n) order statistics.
double tvar(std::span<const double> samples, double alpha = kTvarLevel);
double tvar_diff(std::span<const double> data, std::span<const double> flow, double alpha = kTvarLevel);

struct AreaResult {
  double area = 0.0;
  std::size_t terms = 0;
  /// Terms dropped because a quantile of |values| was zero.
  std::size_t skipped = 0;
};

/// Log-log tail area between two columns, over absolute values. `n` defaults
/// to the shorter column length, capped at kAreaMaxTerms.
AreaResult area_loglog(std::span<const double> data, std::span<const double> flow,
                       std::optional<std::size_t> n = std::nullopt);

struct ColumnMetrics {
  bool heavy = false;
  double tvar_diff = 0.0;
  double area = 0.0;
  std::size_t area_skipped = 0;
};

struct MetricSummary {
  double nll = 0.0;
  /// NaN when the class has no columns.
  double area_light = 0.0, area_heavy = 0.0, tvar_light = 0.0, tvar_heavy = 0.0;
  tail::Confusion confusion{};
  std::vector<ColumnMetrics> columns;
};

/// Per-column tail metrics of flow samples against test data, averaged within
/// the classes given by `heavy_mask`. The confusion matrix classifies the
/// flow samples against the mask.
MetricSummary summarize_samples(const ad::Tensor& flow_samples, const ad::Tensor& test_data,
                                const std::vector<bool>& heavy_mask, double nll);

/// Same, with NLL = mean -log_prob of the model on the test data.
MetricSummary summarize(const model::FlowModel& model, const ad::Tensor& flow_samples, const ad::Tensor& test_data,
                        const std::vector<bool>& heavy_mask);

nlohmann::json summary_to_json(const MetricSummary& s);

struct ProjectionStat {
  double data_mean, flow_mean;
  double data_std, flow_std;
  double data_q01, flow_q01;
};

/// Statistics of <w, x> for n_proj weight vectors w ~ U([0,1]^D).
std::vector<ProjectionStat> projection_stats(const ad::Tensor& data, const ad::Tensor& flow, std::size_t n_proj,
                                             Rng& rng);

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

struct QQPoint {
  double level, data, flow;
};

/// `points` evenly spaced quantile levels in (0, 1) for one column pair.
std::vector<QQPoint> qq_data(std::span<const double> data, std::span<const double> flow, std::size_t points);

}  // namespace tailflow::metrics
