#pragma once
// Differentiable operations. Binary elementwise ops accept equal shapes or a
// single-element operand broadcast against the other; nothing else
// broadcasts, so conditioners reshape explicitly with tile_rows/tile_cols.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tailflow/ad/graph.hpp"

namespace tailflow::ad {

enum class ElementwiseOp { add, sub, mul, div, exp, log, neg, pow_const, tanh, softplus, relu, abs, sqrt };
enum class ReduceOp { sum, mean };

/// Tag-dispatched elementwise op. Binary tags need `b`; `pow_const` reads
/// `exponent`. log/sqrt of nonpositive input yield NaN/-inf rather than
/// throwing.
Var elementwise(ElementwiseOp op, const Var& a, const std::optional<Var>& b = std::nullopt,
                double exponent = 1.0);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var exp(const Var& a);
Var log(const Var& a);
Var neg(const Var& a);
Var pow(const Var& a, double exponent);
Var tanh(const Var& a);
/// max(x, 0) + log1p(exp(-|x|)).
Var softplus(const Var& a);
Var relu(const Var& a);
Var abs(const Var& a);
Var sqrt(const Var& a);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(const Var& a, double b);
Var operator-(double a, const Var& b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator/(const Var& a, double b);
Var operator/(double a, const Var& b);

/// [m x k] * [k x n].
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

/// Full reduction gives a rank-0 scalar. With an axis the reduced extent is
/// kept as 1, so reducing [n x c] over axis 1 gives [n x 1].
Var reduce(ReduceOp op, const Var& a, std::optional<int> axis = std::nullopt);
Var sum(const Var& a, std::optional<int> axis = std::nullopt);
Var mean(const Var& a, std::optional<int> axis = std::nullopt);

Var reshape(const Var& a, Shape shape);

/// Columns `cols` of a rank-2 tensor, in the given order (repeats allowed).
Var select_cols(const Var& a, std::span<const std::size_t> cols);
/// Contiguous column range [begin, end).
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
/// [1 x c] -> [n x c].
Var tile_rows(const Var& a, std::size_t n);
/// [n x 1] -> [n x c].
Var tile_cols(const Var& a, std::size_t c);
/// Running sum along each row.
Var cumsum_cols(const Var& a);
/// out[r] = a[r, index[r]], shape [n x 1].
Var gather_cols(const Var& a, std::span<const std::size_t> index);
/// mask[i] ? a[i] : b[i]; gradients flow only to the selected side.
Var where(std::span<const std::uint8_t> mask, const Var& a, const Var& b);

/// Solves T y_r = x_r for every row x_r of `x` [n x d] with triangular T
/// [d x d]. Only the referenced triangle of T is read, and with
/// `unit_diagonal` the diagonal is taken as 1.
Var solve_triangular(const Var& t, const Var& x, bool lower, bool unit_diagonal);

}  // namespace tailflow::ad
