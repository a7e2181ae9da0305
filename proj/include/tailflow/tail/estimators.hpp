#pragma once
// Tail-index estimation and light/heavy classification of marginals. All
// estimators work on absolute values, so either tail counts.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tailflow/ad/tensor.hpp"

namespace tailflow::tail {

enum class TailClass { light, heavy };

/// alpha = k / sum_{i<=k} ln(X_(i) / X_(k+1)) over descending order
/// statistics of |samples|. Requires 1 <= k < n and X_(k+1) > 0.
double hill_estimate(std::span<const double> samples, std::size_t k);

/// Dekkers-Einmahl-de Haan extreme value index gamma = M1 + 1 - 1/(2(1 - M1^2/M2)).
/// Throws `degenerate` when M2 == M1^2.
double moments_estimate(std::span<const double> samples, std::size_t k);

struct ClassifierOptions {
  /// gamma = 1/nu, so 0.1 puts the moments boundary at the same nu = 10 as
  /// max_index. Exponential data gives gamma-hat up to about 0.09 at n = 1e5.
  double gamma_min = 0.1;
  double moments_power_1 = 0.6;
  double moments_power_2 = 0.7;
  double hill_power = 2.0 / 3.0;
  double max_index = 10.0;
  double min_index = 0.5;
};

struct MarginalTail {
  TailClass cls = TailClass::light;
  std::optional<double> index;  // present iff heavy
  std::size_t k_used = 0;
};

/// floor(n^power), guarded against pow rounding just below an integer.
std::size_t threshold_count(std::size_t n, double power);

/// Light iff both moments votes give gamma <= gamma_min; otherwise Hill decides
/// (above max_index is Light, else Heavy with the index clipped). n >= 500.
MarginalTail classify_marginal(std::span<const double> samples, const ClassifierOptions& opts = {});

struct TailReport {
  std::vector<MarginalTail> marginals;
  std::size_t d_l = 0;
  /// reorder[i] is the original column placed at position i; Light first,
  /// stable within each class.
  std::vector<std::size_t> reorder;

  std::vector<TailClass> classes() const;
  /// Index estimates of the heavy marginals in reordered position order.
  std::vector<double> heavy_indices() const;
};

TailReport build_tail_report(const ad::Tensor& data, const ClassifierOptions& opts = {});

/// Stable Light-first ordering for the given classes.
std::vector<std::size_t> light_first_order(const std::vector<TailClass>& classes);

/// counts[true][predicted], with light = 0 and heavy = 1.
using Confusion = std::array<std::array<std::size_t, 2>, 2>;
Confusion synthetic_tail_confusion(const std::vector<TailClass>& truth, const ad::Tensor& flow_samples,
                                   const ClassifierOptions& opts = {});

std::size_t diagonal(const Confusion& c) noexcept;

}  // namespace tailflow::tail
