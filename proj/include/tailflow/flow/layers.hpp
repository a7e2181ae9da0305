#pragma once
// Invertible layers. `forward` maps base-side z to data-side x (sampling),
// `inverse` maps x back to z (density evaluation). Both return the log
// absolute Jacobian determinant of the map they apply, either per row
// ([n x 1]) or as a single element shared by every row.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tailflow/ad/graph.hpp"
#include "tailflow/flow/conditioner.hpp"
#include "tailflow/rng.hpp"

namespace tailflow::flow {

struct FlowResult {
  ad::Var out;
  ad::Var logdet;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual FlowResult forward(const ad::Var& z) const = 0;
  virtual FlowResult inverse(const ad::Var& x) const = 0;
  virtual std::vector<ad::Parameter> parameters() const = 0;
};

struct ConditionerShape {
  std::vector<std::size_t> hidden{30, 30};
};

/// x_j = mu_j(z_<j) + exp(s_j(z_<j)) z_j with s = 5 tanh(raw / 5).
class AffineARLayer final : public Layer {
 public:
  static constexpr double kScaleClamp = 5.0;

  AffineARLayer(std::size_t dim, const ConditionerShape& shape, Rng& rng, const std::string& prefix);

  std::string kind() const override { return "affine"; }
  std::size_t dim() const override { return cond_.dim(); }
  FlowResult forward(const ad::Var& z) const override;
  /// Sequential, one conditioner pass per coordinate.
  FlowResult inverse(const ad::Var& x) const override;
  std::vector<ad::Parameter> parameters() const override { return cond_.parameters(); }
  const MaskedConditioner& conditioner() const noexcept { return cond_; }

 private:
  MaskedConditioner cond_;
};

/// Monotone rational-quadratic spline on [-B, B] with identity tails.
class RQSplineARLayer final : public Layer {
 public:
  static constexpr double kMinBinWidth = 1e-3;
  static constexpr double kMinBinHeight = 1e-3;
  static constexpr double kMinDerivative = 1e-3;

  RQSplineARLayer(std::size_t dim, std::size_t bins, double tail_bound, const ConditionerShape& shape, Rng& rng,
                  const std::string& prefix);

  std::string kind() const override { return "rqs"; }
  std::size_t dim() const override { return cond_.dim(); }
  std::size_t bins() const noexcept { return bins_; }
  double tail_bound() const noexcept { return bound_; }
  FlowResult forward(const ad::Var& z) const override;
  FlowResult inverse(const ad::Var& x) const override;
  std::vector<ad::Parameter> parameters() const override { return cond_.parameters(); }
  const MaskedConditioner& conditioner() const noexcept { return cond_; }

 private:
  MaskedConditioner cond_;
  std::size_t bins_;
  double bound_;
};

/// Elementwise spline on a column. `params` is [n x (3K - 1)]: K width
/// logits, K height logits, K - 1 interior derivative pre-activations.
FlowResult rq_spline(const ad::Var& input, const ad::Var& params, std::size_t bins, double bound, bool inverse);

/// out[:, i] = in[:, perm[i]]; perm must keep {0..d_l-1} and {d_l..D-1}
/// within themselves.
class GroupPermutation final : public Layer {
 public:
  GroupPermutation(std::vector<std::size_t> perm, std::size_t d_l);
  /// Uniformly random within each group.
  static GroupPermutation random(std::size_t dim, std::size_t d_l, Rng& rng);

  std::string kind() const override { return "permutation"; }
  std::size_t dim() const override { return perm_.size(); }
  std::size_t d_l() const noexcept { return d_l_; }
  const std::vector<std::size_t>& perm() const noexcept { return perm_; }
  FlowResult forward(const ad::Var& z) const override;
  FlowResult inverse(const ad::Var& x) const override;
  std::vector<ad::Parameter> parameters() const override { return {}; }

 private:
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> inv_;
  std::size_t d_l_;
};

/// x = W z with W = [[A, 0], [B, C]], A = L_A U_A (d_l x d_l) and
/// C = L_C U_C; L unit lower triangular, U upper triangular with diagonal
/// exp(raw). With d_l equal to 0 or D there is a single full LU block.
class TailLULayer final : public Layer {
 public:
  TailLULayer(std::size_t dim, std::size_t d_l, const std::string& prefix);

  std::string kind() const override { return "lu"; }
  std::size_t dim() const override { return dim_; }
  std::size_t d_l() const noexcept { return d_l_; }
  FlowResult forward(const ad::Var& z) const override;
  FlowResult inverse(const ad::Var& x) const override;
  std::vector<ad::Parameter> parameters() const override;

  /// Assembled W, for tests and diagnostics.
  ad::Tensor dense() const;

 private:
  struct Block {
    ad::Parameter lower;     // strict lower triangle used
    ad::Parameter upper;     // strict upper triangle used
    ad::Parameter log_diag;  // [1 x m]
    ad::Tensor strict_upper_mask;
    ad::Tensor strict_lower_mask;
    ad::Tensor identity;
    std::size_t size = 0;
  };
  static Block make_block(std::size_t m, const std::string& prefix);
  static ad::Var upper_matrix(const Block& b);
  static ad::Var lower_matrix(const Block& b);
  static ad::Var apply_forward(const Block& b, const ad::Var& z);
  static ad::Var apply_inverse(const Block& b, const ad::Var& x);

  std::size_t dim_;
  std::size_t d_l_;
  std::vector<Block> blocks_;           // one (full) or two (A then C)
  std::optional<ad::Parameter> cross_;  // B, [d_h x d_l]
};

}  // namespace tailflow::flow
