#include "tailflow/flow/conditioner.hpp"

#include <algorithm>
#include <cmath>

#include "tailflow/ad/ops.hpp"
#include "tailflow/error.hpp"

namespace tailflow::flow {

MaskedConditioner::MaskedConditioner(std::size_t dim, std::vector<std::size_t> hidden, std::size_t block, Rng& rng,
                                     const std::string& prefix)
    : dim_(dim), block_(block), hidden_(std::move(hidden)) {
  if (dim == 0 || block == 0 || hidden_.empty()) {
    throw Error(Errc::invalid_argument, "MaskedConditioner: dimension, block size and hidden widths must be positive");
  }
  for (std::size_t h : hidden_)
    if (h == 0) throw Error(Errc::invalid_argument, "MaskedConditioner: hidden width 0");

  // Degrees: input j has j+1, hidden units cycle through 1..max(1, D-1),
  // output block j has j+1.
  const std::size_t cycle = std::max<std::size_t>(1, dim - 1);
  std::vector<std::size_t> prev(dim);
  for (std::size_t j = 0; j < dim; ++j) prev[j] = j + 1;
  std::vector<std::size_t> widths{dim};
  widths.insert(widths.end(), hidden_.begin(), hidden_.end());
  widths.push_back(dim * block);

  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    const bool last = l + 2 == widths.size();
    std::vector<std::size_t> next(out);
    for (std::size_t k = 0; k < out; ++k) next[k] = last ? k / block + 1 : k % cycle + 1;
    ad::Tensor mask({in, out});
    for (std::size_t a = 0; a < in; ++a)
      for (std::size_t b = 0; b < out; ++b) mask.at(a, b) = (last ? next[b] > prev[a] : next[b] >= prev[a]) ? 1.0 : 0.0;
    masks_.push_back(std::move(mask));

    ad::Tensor w({in, out});
    if (!last) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    }
    ad::Tensor b({1, out});
    if (!last) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      for (auto& v : b.data()) v = rng.uniform(-bound, bound);
    }
    const std::string id = std::to_string(l);
    weights_.push_back(ad::Parameter::make(prefix + ".w" + id, std::move(w), ad::ParamGroup::weight));
    biases_.push_back(ad::Parameter::make(prefix + ".b" + id, std::move(b), ad::ParamGroup::bias));
    prev = std::move(next);
  }
}

MaskedConditioner::Bound MaskedConditioner::bind() const {
  Bound out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.weights.push_back(weights_[l].var * ad::Var::constant(masks_[l]));
    out.biases.push_back(biases_[l].var);
  }
  return out;
}

ad::Var MaskedConditioner::hidden_features(const Bound& w, const ad::Var& x) const {
  if (x.value().rank() != 2 || x.value().cols() != dim_) {
    throw Error(Errc::shape_mismatch,
                "MaskedConditioner: expected [n x " + std::to_string(dim_) + "], got " + ad::to_string(x.shape()));
  }
  const std::size_t n = x.value().rows();
  ad::Var h = x;
  for (std::size_t l = 0; l + 1 < w.weights.size(); ++l) {
    h = ad::relu(ad::matmul(h, w.weights[l]) + ad::tile_rows(w.biases[l], n));
  }
  return h;
}

ad::Var MaskedConditioner::operator()(const Bound& w, const ad::Var& x) const {
  const ad::Var h = hidden_features(w, x);
  return ad::matmul(h, w.weights.back()) + ad::tile_rows(w.biases.back(), x.value().rows());
}

ad::Var MaskedConditioner::block_output(const Bound& w, const ad::Var& x, std::size_t j) const {
  if (j >= dim_) throw Error(Errc::out_of_range, "MaskedConditioner: block " + std::to_string(j) + " out of range");
  const ad::Var h = hidden_features(w, x);
  const ad::Var wj = ad::slice_cols(w.weights.back(), j * block_, (j + 1) * block_);
  const ad::Var bj = ad::slice_cols(w.biases.back(), j * block_, (j + 1) * block_);
  return ad::matmul(h, wj) + ad::tile_rows(bj, x.value().rows());
}

std::vector<ad::Parameter> MaskedConditioner::parameters() const {
  std::vector<ad::Parameter> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

}  // namespace tailflow::flow
