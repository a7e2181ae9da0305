#pragma once
// The four flow variants. A model is a stack of blocks, each an
// autoregressive transform followed by a within-group permutation and an LU
// linear layer, on top of a mean-field base.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tailflow/ad/graph.hpp"
#include "tailflow/dist/distributions.hpp"
#include "tailflow/flow/layers.hpp"
#include "tailflow/rng.hpp"
#include "tailflow/tail/estimators.hpp"

namespace tailflow::model {

enum class Variant { vanilla, taf, gtaf, mtaf };
enum class TransformKind { affine, rqs };

std::string to_string(Variant v);
std::string to_string(TransformKind k);
Variant parse_variant(const std::string& s);
TransformKind parse_transform(const std::string& s);

struct Architecture {
  std::vector<std::size_t> hidden{30, 30};
  std::size_t bins = 3;
  double tail_bound = 2.0;
  std::uint64_t seed = 0;
  /// mTAF keeps its estimated dof fixed unless this is set.
  bool mtaf_trainable_dof = false;
  /// Overrides every initial dof (TAF/gTAF/mTAF) when present.
  std::optional<double> initial_dof;
};

/// Everything needed to rebuild a model's structure.
struct ModelConfig {
  Variant variant = Variant::vanilla;
  TransformKind transform = TransformKind::affine;
  std::size_t dim = 0;
  std::size_t n_layers = 0;
  Architecture arch;
  std::size_t d_l = 0;
  std::vector<std::size_t> reorder;
  /// Initial nu per heavy base position (one shared value for TAF).
  std::vector<double> initial_dof;
  bool dof_trainable = false;
};

/// Smallest initial dof; the 1 + softplus parameterisation cannot reach 1.
inline constexpr double kMinInitialDof = 1.05;
/// Initial dof for marginals without heavy-tail evidence.
inline constexpr double kDefaultDof = 30.0;

class FlowModel {
 public:
  explicit FlowModel(const ModelConfig& config);
  FlowModel(FlowModel&&) noexcept = default;
  FlowModel& operator=(FlowModel&&) noexcept = default;

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t dim() const noexcept { return config_.dim; }
  const dist::BaseSpec& base() const noexcept { return base_; }
  const std::vector<std::size_t>& reorder() const noexcept { return config_.reorder; }
  const std::vector<std::unique_ptr<flow::Layer>>& layers() const noexcept { return layers_; }

  /// Row-wise log density of x [n x D] in data ordering; result [n x 1].
  ad::Var log_prob(const ad::Var& x) const;
  /// Gradient-free convenience; evaluates in chunks.
  std::vector<double> log_prob(const ad::Tensor& x) const;
  /// Mean negative log-likelihood without gradients.
  double nll(const ad::Tensor& x) const;

  ad::Tensor sample(Rng& rng, std::size_t n) const;

  /// All parameters, in a fixed order; names are unique.
  std::vector<ad::Parameter> parameters() const;
  std::vector<ad::Parameter> trainable_parameters() const;

  std::vector<ad::Tensor> snapshot() const;
  void restore(const std::vector<ad::Tensor>& values);

  /// Adds N(0, sigma^2) noise to every parameter except the degrees of freedom.
  void jitter(Rng& rng, double sigma);

  /// Permutation layers in block order; replaced wholesale on checkpoint load.
  std::vector<std::vector<std::size_t>> permutations() const;
  void set_permutations(const std::vector<std::vector<std::size_t>>& perms);

 private:
  ModelConfig config_;
  dist::BaseSpec base_;
  std::vector<std::unique_ptr<flow::Layer>> layers_;
};

/// Assembles a model. mTAF requires a tail report and takes d_l, the reorder
/// and the fixed dof from it; gTAF and TAF use it only to initialise their
/// dof when given; vanilla ignores it.
FlowModel build_model(Variant variant, TransformKind transform, std::size_t dim, std::size_t n_layers,
                      const tail::TailReport* report, const Architecture& arch = {});

}  // namespace tailflow::model
