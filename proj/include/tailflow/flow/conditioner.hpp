#pragma once
// MADE-style masked MLP. Output block j (P columns) depends only on inputs
// 0..j-1, so block 0 is a function of the biases alone.

#include <cstddef>
#include <string>
#include <vector>

#include "tailflow/ad/graph.hpp"
#include "tailflow/rng.hpp"

namespace tailflow::flow {

class MaskedConditioner {
 public:
  /// Masked weights for one evaluation; binding once lets the D passes of a
  /// sequential inverse share the masking work.
  struct Bound {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
  };

  MaskedConditioner() = default;
  /// Hidden weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the output layer
  /// starts at zero.
  MaskedConditioner(std::size_t dim, std::vector<std::size_t> hidden, std::size_t block, Rng& rng,
                    const std::string& prefix);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t block() const noexcept { return block_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }

  Bound bind() const;
  /// [n x D] -> [n x D*P].
  ad::Var operator()(const Bound& w, const ad::Var& x) const;
  /// Columns [jP, (j+1)P) of the full output, computed without the others.
  ad::Var block_output(const Bound& w, const ad::Var& x, std::size_t j) const;

  std::vector<ad::Parameter> parameters() const;
  /// Binary connectivity of layer l, shaped like its weight [in x out].
  const ad::Tensor& mask(std::size_t l) const { return masks_[l]; }

 private:
  ad::Var hidden_features(const Bound& w, const ad::Var& x) const;

  std::size_t dim_ = 0;
  std::size_t block_ = 0;
  std::vector<std::size_t> hidden_;
  std::vector<ad::Parameter> weights_;
  std::vector<ad::Parameter> biases_;
  std::vector<ad::Tensor> masks_;
};

}  // namespace tailflow::flow
