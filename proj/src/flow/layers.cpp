#include "tailflow/flow/layers.hpp"

#include <algorithm>
#include <cmath>

#include "tailflow/ad/ops.hpp"
#include "tailflow/dist/distributions.hpp"
#include "tailflow/error.hpp"

namespace tailflow::flow {
namespace {

using ad::Tensor;
using ad::Var;

Var filled(std::size_t rows, std::size_t cols, double v) { return Var::constant(Tensor({rows, cols}, v)); }

void require_input(const Var& v, std::size_t dim, const char* layer) {
  if (v.value().rank() != 2 || v.value().cols() != dim) {
    throw Error(Errc::shape_mismatch, std::string(layer) + ": expected [n x " + std::to_string(dim) + "], got " +
                                          ad::to_string(v.shape()));
  }
}

// Conditioner outputs are laid out in blocks of `block` columns per
// coordinate, starting at coordinate `first`.
void require_finite(const Var& out, std::size_t block, std::size_t first, const char* layer) {
  const Tensor& t = out.value();
  const std::size_t bad = t.first_non_finite();
  if (bad == t.numel()) return;
  const std::size_t coord = first + (bad % t.cols()) / block;
  throw Error(Errc::non_finite,
              std::string(layer) + ": non-finite conditioner output for coordinate " + std::to_string(coord));
}

Var clamp_log_scale(const Var& raw) {
  return AffineARLayer::kScaleClamp * ad::tanh(raw / AffineARLayer::kScaleClamp);
}

// Base input for pass j of a sequential inverse: solved columns then zeros.
Var partial_input(const std::vector<Var>& solved, std::size_t n, std::size_t dim) {
  std::vector<Var> parts(solved);
  if (solved.size() < dim) parts.push_back(filled(n, dim - solved.size(), 0.0));
  return parts.size() == 1 ? parts[0] : ad::concat_cols(parts);
}

std::vector<std::size_t> strided(std::size_t count, std::size_t stride, std::size_t offset) {
  std::vector<std::size_t> out(count);
  for (std::size_t j = 0; j < count; ++j) out[j] = j * stride + offset;
  return out;
}

// Knot positions [n x (K+1)] and bin sizes [n x K] from unnormalised logits.
std::pair<Var, Var> spline_knots(const Var& logits, double min_size, double bound) {
  const std::size_t n = logits.value().rows();
  const std::size_t k = logits.value().cols();
  Tensor shift({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.value().row_span(i);
    shift[i] = *std::max_element(row.begin(), row.end());
  }
  const Var e = ad::exp(logits - ad::tile_cols(Var::constant(shift), k));
  const Var p = e / ad::tile_cols(ad::sum(e, 1), k);
  const Var sizes = min_size + (1.0 - min_size * static_cast<double>(k)) * p;
  std::vector<Var> parts{filled(n, 1, -bound)};
  if (k > 1) parts.push_back(2.0 * bound * ad::slice_cols(ad::cumsum_cols(sizes), 0, k - 1) - bound);
  parts.push_back(filled(n, 1, bound));
  const Var knots = ad::concat_cols(parts);
  return {knots, ad::slice_cols(knots, 1, k + 1) - ad::slice_cols(knots, 0, k)};
}

}  // namespace

FlowResult rq_spline(const Var& input, const Var& params, std::size_t bins, double bound, bool inverse) {
  const std::size_t n = input.value().rows();
  const std::size_t k = bins;
  if (k == 0) throw Error(Errc::invalid_argument, "rq_spline: at least one bin required");
  if (input.value().rank() != 2 || input.value().cols() != 1 || params.value().rank() != 2 ||
      params.value().rows() != n || params.value().cols() != 3 * k - 1) {
    throw Error(Errc::shape_mismatch, "rq_spline: input " + ad::to_string(input.shape()) + " and parameters " +
                                          ad::to_string(params.shape()) + " do not match " + std::to_string(k) + " bins");
  }

  std::vector<std::uint8_t> inside(n);
  for (std::size_t i = 0; i < n; ++i) inside[i] = input.value()[i] >= -bound && input.value()[i] <= bound;
  const Var zeros = filled(n, 1, 0.0);
  // Rows outside the interval run the spline at 0 and are discarded.
  const Var v = ad::where(inside, input, zeros);

  const auto [cumw, widths] = spline_knots(ad::slice_cols(params, 0, k), RQSplineARLayer::kMinBinWidth, bound);
  const auto [cumh, heights] = spline_knots(ad::slice_cols(params, k, 2 * k), RQSplineARLayer::kMinBinHeight, bound);

  std::vector<Var> dparts{filled(n, 1, 1.0)};
  if (k > 1) {
    // Shift so that a zero pre-activation gives derivative exactly 1.
    const double shift = std::log(std::expm1(1.0 - RQSplineARLayer::kMinDerivative));
    dparts.push_back(RQSplineARLayer::kMinDerivative + ad::softplus(ad::slice_cols(params, 2 * k, 3 * k - 1) + shift));
  }
  dparts.push_back(filled(n, 1, 1.0));
  const Var derivs = ad::concat_cols(dparts);

  const Tensor& search = inverse ? cumh.value() : cumw.value();
  std::vector<std::size_t> idx(n), idx1(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t b = 0; b <= k; ++b) count += v.value()[i] >= search.at(i, b);
    idx[i] = std::min(count == 0 ? 0 : count - 1, k - 1);
    idx1[i] = idx[i] + 1;
  }
  const Var w = ad::gather_cols(widths, idx);
  const Var h = ad::gather_cols(heights, idx);
  const Var cw = ad::gather_cols(cumw, idx);
  const Var ch = ad::gather_cols(cumh, idx);
  const Var d0 = ad::gather_cols(derivs, idx);
  const Var d1 = ad::gather_cols(derivs, idx1);
  const Var delta = h / w;
  const Var slope_sum = d0 + d1 - 2.0 * delta;

  Var out, theta;
  if (!inverse) {
    theta = (v - cw) / w;
    const Var tt = theta * (1.0 - theta);
    out = ch + h * (delta * theta * theta + d0 * tt) / (delta + slope_sum * tt);
  } else {
    const Var r = v - ch;
    const Var a = r * slope_sum + h * (delta - d0);
    const Var b = h * d0 - r * slope_sum;
    const Var c = -delta * r;
    const Var disc = ad::relu(b * b - 4.0 * a * c);
    theta = 2.0 * c / (-b - ad::sqrt(disc));
    out = theta * w + cw;
  }
  const Var tt = theta * (1.0 - theta);
  const Var one_minus = 1.0 - theta;
  const Var dnum = delta * delta * (d1 * theta * theta + 2.0 * delta * tt + d0 * one_minus * one_minus);
  const Var den = delta + slope_sum * tt;
  Var lad = ad::log(dnum) - 2.0 * ad::log(den);
  if (inverse) lad = -lad;
  return {ad::where(inside, out, input), ad::where(inside, lad, zeros)};
}

AffineARLayer::AffineARLayer(std::size_t dim, const ConditionerShape& shape, Rng& rng, const std::string& prefix)
    : cond_(dim, shape.hidden, 2, rng, prefix) {}

FlowResult AffineARLayer::forward(const Var& z) const {
  require_input(z, dim(), "affine forward");
  const auto w = cond_.bind();
  const Var out = cond_(w, z);
  require_finite(out, 2, 0, "affine forward");
  const std::size_t d = dim();
  const Var mu = ad::select_cols(out, strided(d, 2, 0));
  const Var s = clamp_log_scale(ad::select_cols(out, strided(d, 2, 1)));
  return {mu + ad::exp(s) * z, ad::sum(s, 1)};
}

FlowResult AffineARLayer::inverse(const Var& x) const {
  require_input(x, dim(), "affine inverse");
  const std::size_t n = x.value().rows();
  const std::size_t d = dim();
  const auto w = cond_.bind();
  std::vector<Var> solved, scales;
  for (std::size_t j = 0; j < d; ++j) {
    const Var out = cond_.block_output(w, partial_input(solved, n, d), j);
    require_finite(out, 2, j, "affine inverse");
    const Var s = clamp_log_scale(ad::slice_cols(out, 1, 2));
    solved.push_back((ad::slice_cols(x, j, j + 1) - ad::slice_cols(out, 0, 1)) * ad::exp(-s));
    scales.push_back(s);
  }
  const Var z = d == 1 ? solved[0] : ad::concat_cols(solved);
  const Var s_all = d == 1 ? scales[0] : ad::concat_cols(scales);
  return {z, -ad::sum(s_all, 1)};
}

RQSplineARLayer::RQSplineARLayer(std::size_t dim, std::size_t bins, double tail_bound, const ConditionerShape& shape,
                                 Rng& rng, const std::string& prefix)
    : cond_(dim, shape.hidden, 3 * std::max<std::size_t>(bins, 1) - 1, rng, prefix), bins_(bins), bound_(tail_bound) {
  if (bins == 0) throw Error(Errc::invalid_argument, "RQSplineARLayer: at least one bin required");
  if (!(tail_bound > 0.0)) throw Error(Errc::invalid_argument, "RQSplineARLayer: tail bound must be positive");
}

FlowResult RQSplineARLayer::forward(const Var& z) const {
  require_input(z, dim(), "spline forward");
  const std::size_t d = dim();
  const std::size_t p = cond_.block();
  const auto w = cond_.bind();
  const Var out = cond_(w, z);
  require_finite(out, p, 0, "spline forward");
  std::vector<Var> xs, lds;
  for (std::size_t j = 0; j < d; ++j) {
    auto r = rq_spline(ad::slice_cols(z, j, j + 1), ad::slice_cols(out, j * p, (j + 1) * p), bins_, bound_, false);
    xs.push_back(r.out);
    lds.push_back(r.logdet);
  }
  if (d == 1) return {xs[0], lds[0]};
  return {ad::concat_cols(xs), ad::sum(ad::concat_cols(lds), 1)};
}

FlowResult RQSplineARLayer::inverse(const Var& x) const {
  require_input(x, dim(), "spline inverse");
  const std::size_t n = x.value().rows();
  const std::size_t d = dim();
  const auto w = cond_.bind();
  std::vector<Var> solved, lds;
  for (std::size_t j = 0; j < d; ++j) {
    const Var out = cond_.block_output(w, partial_input(solved, n, d), j);
    require_finite(out, cond_.block(), j, "spline inverse");
    auto r = rq_spline(ad::slice_cols(x, j, j + 1), out, bins_, bound_, true);
    solved.push_back(r.out);
    lds.push_back(r.logdet);
  }
  if (d == 1) return {solved[0], lds[0]};
  return {ad::concat_cols(solved), ad::sum(ad::concat_cols(lds), 1)};
}

GroupPermutation::GroupPermutation(std::vector<std::size_t> perm, std::size_t d_l) : perm_(std::move(perm)), d_l_(d_l) {
  const std::size_t d = perm_.size();
  if (d_l_ > d) throw Error(Errc::invalid_argument, "GroupPermutation: d_l exceeds the dimension");
  if (!dist::is_permutation(perm_, d)) throw Error(Errc::invalid_argument, "GroupPermutation: not a permutation");
  for (std::size_t i = 0; i < d; ++i) {
    if ((i < d_l_) != (perm_[i] < d_l_)) {
      throw Error(Errc::invalid_argument, "GroupPermutation: position " + std::to_string(i) + " takes coordinate " +
                                              std::to_string(perm_[i]) + " across the d_l=" + std::to_string(d_l_) +
                                              " boundary");
    }
  }
  inv_.resize(d);
  for (std::size_t i = 0; i < d; ++i) inv_[perm_[i]] = i;
}

GroupPermutation GroupPermutation::random(std::size_t dim, std::size_t d_l, Rng& rng) {
  std::vector<std::size_t> perm(dim);
  for (std::size_t i = 0; i < dim; ++i) perm[i] = i;
  auto shuffle = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = hi; i > lo + 1; --i) std::swap(perm[i - 1], perm[lo + rng.below(i - lo)]);
  };
  shuffle(0, std::min(d_l, dim));
  shuffle(std::min(d_l, dim), dim);
  return GroupPermutation(std::move(perm), d_l);
}

FlowResult GroupPermutation::forward(const Var& z) const {
  require_input(z, dim(), "permutation forward");
  return {ad::select_cols(z, perm_), Var::constant(0.0)};
}

FlowResult GroupPermutation::inverse(const Var& x) const {
  require_input(x, dim(), "permutation inverse");
  return {ad::select_cols(x, inv_), Var::constant(0.0)};
}

TailLULayer::Block TailLULayer::make_block(std::size_t m, const std::string& prefix) {
  Block b;
  b.size = m;
  b.lower = ad::Parameter::make(prefix + ".lower", Tensor({m, m}), ad::ParamGroup::weight);
  b.upper = ad::Parameter::make(prefix + ".upper", Tensor({m, m}), ad::ParamGroup::weight);
  b.log_diag = ad::Parameter::make(prefix + ".log_diag", Tensor({1, m}), ad::ParamGroup::weight);
  b.strict_upper_mask = Tensor({m, m});
  b.strict_lower_mask = Tensor({m, m});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = r + 1; c < m; ++c) {
      b.strict_upper_mask.at(r, c) = 1.0;
      b.strict_lower_mask.at(c, r) = 1.0;
    }
  b.identity = Tensor::identity(m);
  return b;
}

TailLULayer::TailLULayer(std::size_t dim, std::size_t d_l, const std::string& prefix) : dim_(dim), d_l_(d_l) {
  if (dim == 0 || d_l > dim) throw Error(Errc::invalid_argument, "TailLULayer: need 0 <= d_l <= D and D > 0");
  if (d_l == 0 || d_l == dim) {
    blocks_.push_back(make_block(dim, prefix + ".A"));
  } else {
    blocks_.push_back(make_block(d_l, prefix + ".A"));
    blocks_.push_back(make_block(dim - d_l, prefix + ".C"));
    cross_ = ad::Parameter::make(prefix + ".B", Tensor({dim - d_l, d_l}), ad::ParamGroup::weight);
  }
}

Var TailLULayer::upper_matrix(const Block& b) {
  const Var diag = ad::tile_rows(ad::exp(b.log_diag.var), b.size) * Var::constant(b.identity);
  return b.upper.var * Var::constant(b.strict_upper_mask) + diag;
}

Var TailLULayer::lower_matrix(const Block& b) {
  return b.lower.var * Var::constant(b.strict_lower_mask) + Var::constant(b.identity);
}

Var TailLULayer::apply_forward(const Block& b, const Var& z) {
  // Rows: x = A z, i.e. X = Z U^T L^T.
  return ad::matmul(ad::matmul(z, ad::transpose(upper_matrix(b))), ad::transpose(lower_matrix(b)));
}

Var TailLULayer::apply_inverse(const Block& b, const Var& x) {
  const Var y = ad::solve_triangular(b.lower.var, x, true, true);
  return ad::solve_triangular(upper_matrix(b), y, false, false);
}

FlowResult TailLULayer::forward(const Var& z) const {
  require_input(z, dim_, "lu forward");
  Var logdet = ad::sum(blocks_[0].log_diag.var);
  if (blocks_.size() == 1) return {apply_forward(blocks_[0], z), logdet};
  logdet = logdet + ad::sum(blocks_[1].log_diag.var);
  const Var zl = ad::slice_cols(z, 0, d_l_);
  const Var zh = ad::slice_cols(z, d_l_, dim_);
  const Var xl = apply_forward(blocks_[0], zl);
  const Var xh = ad::matmul(zl, ad::transpose(cross_->var)) + apply_forward(blocks_[1], zh);
  return {ad::concat_cols(std::vector<Var>{xl, xh}), logdet};
}

FlowResult TailLULayer::inverse(const Var& x) const {
  require_input(x, dim_, "lu inverse");
  Var logdet = ad::sum(blocks_[0].log_diag.var);
  if (blocks_.size() == 1) return {apply_inverse(blocks_[0], x), -logdet};
  logdet = logdet + ad::sum(blocks_[1].log_diag.var);
  const Var zl = apply_inverse(blocks_[0], ad::slice_cols(x, 0, d_l_));
  const Var rest = ad::slice_cols(x, d_l_, dim_) - ad::matmul(zl, ad::transpose(cross_->var));
  const Var zh = apply_inverse(blocks_[1], rest);
  return {ad::concat_cols(std::vector<Var>{zl, zh}), -logdet};
}

std::vector<ad::Parameter> TailLULayer::parameters() const {
  std::vector<ad::Parameter> out;
  for (const auto& b : blocks_) {
    out.push_back(b.lower);
    out.push_back(b.upper);
    out.push_back(b.log_diag);
  }
  if (cross_) out.push_back(*cross_);
  return out;
}

Tensor TailLULayer::dense() const {
  ad::NoGradGuard guard;
  Tensor w({dim_, dim_});
  auto place = [&](const Tensor& m, std::size_t r0, std::size_t c0) {
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) w.at(r0 + r, c0 + c) = m.at(r, c);
  };
  auto block_matrix = [](const Block& b) {
    return ad::matmul(lower_matrix(b), upper_matrix(b)).value();
  };
  place(block_matrix(blocks_[0]), 0, 0);
  if (blocks_.size() == 2) {
    place(block_matrix(blocks_[1]), d_l_, d_l_);
    place(cross_->var.value(), d_l_, 0);
  }
  return w;
}

}  // namespace tailflow::flow
