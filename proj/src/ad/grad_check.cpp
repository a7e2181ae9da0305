#include "tailflow/ad/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "tailflow/error.hpp"

namespace tailflow::ad {

GradCheckReport grad_check(const std::function<Var()>& f, std::span<const Parameter> params, double h,
                           double rtol, double scale_floor) {
  if (!(h > 0.0)) throw Error(Errc::invalid_argument, "grad_check: step must be positive");

  std::vector<Parameter> ps(params.begin(), params.end());
  for (auto& p : ps) p.var.zero_grad();
  {
    Var root = f();
    backward(root);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(ps.size());
  for (auto& p : ps) {
    analytic.push_back(p.var.grad());
    p.var.zero_grad();
  }

  GradCheckReport report;
  report.pass = true;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    GradCheckEntry entry;
    entry.name = ps[k].name;
    Tensor& value = ps[k].var.leaf_value();
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double fp = f().item();
      value[i] = saved - h;
      const double fm = f().item();
      value[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        entry.non_finite.push_back(i);
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), scale_floor});
      const double dev = std::abs(a - numeric) / denom;
      if (dev > entry.max_rel_dev || std::isnan(dev)) {
        entry.max_rel_dev = dev;
        entry.worst_index = i;
        entry.analytic_at_worst = a;
        entry.numeric_at_worst = numeric;
      }
    }
    report.max_rel_dev = std::max(report.max_rel_dev, entry.max_rel_dev);
    if (!(entry.max_rel_dev <= rtol)) report.pass = false;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace tailflow::ad
