#include "tailflow/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tailflow/error.hpp"
#include "tailflow/simd/kernels.hpp"

namespace tailflow::ad {
namespace {

enum class Bin { add, sub, mul, div };

const char* bin_name(Bin op) {
  switch (op) {
    case Bin::add: return "add";
    case Bin::sub: return "sub";
    case Bin::mul: return "mul";
    case Bin::div: return "div";
  }
  return "?";
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(Errc::shape_mismatch, std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

void require_rank2(const char* op, const Var& a) {
  if (a.value().rank() != 2) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": expected a rank-2 tensor, got " + to_string(a.shape()));
  }
}

Var binary(Bin op, const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Shape out_shape;
  if (av.shape() == bv.shape()) {
    out_shape = av.shape();
  } else if (av.numel() == 1 && bv.numel() == 1) {
    out_shape = av.rank() >= bv.rank() ? av.shape() : bv.shape();
  } else if (bv.numel() == 1) {
    out_shape = av.shape();
  } else if (av.numel() == 1) {
    out_shape = bv.shape();
  } else {
    shape_error(bin_name(op), av.shape(), bv.shape());
  }
  Tensor out(out_shape);
  const std::size_t n = out.numel();
  const bool a_bc = av.numel() != n;
  const bool b_bc = bv.numel() != n;
  const double* pa = av.data().data();
  const double* pb = bv.data().data();
  double* po = out.data().data();
  const auto& k = simd::kernels();
  if (!a_bc && !b_bc && op == Bin::add) {
    k.add(pa, pb, po, n);
  } else if (!a_bc && !b_bc && op == Bin::mul) {
    k.mul(pa, pb, po, n);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double x = a_bc ? pa[0] : pa[i];
      const double y = b_bc ? pb[0] : pb[i];
      switch (op) {
        case Bin::add: po[i] = x + y; break;
        case Bin::sub: po[i] = x - y; break;
        case Bin::mul: po[i] = x * y; break;
        case Bin::div: po[i] = x / y; break;
      }
    }
  }
  return make_node(std::move(out), {a, b}, [op, a_bc, b_bc](Node& self) {
    const auto& pa_node = self.parents[0];
    const auto& pb_node = self.parents[1];
    const double* g = self.grad.data().data();
    const std::size_t n = self.grad.numel();
    const double* x = pa_node->value.data().data();
    const double* y = pb_node->value.data().data();
    const auto& k = simd::kernels();
    if (pa_node->requires_grad) {
      double* ga = pa_node->grad_buffer().data().data();
      if (!a_bc && !b_bc && (op == Bin::add || op == Bin::sub)) {
        k.axpy(1.0, g, ga, n);
      } else if (!a_bc && !b_bc && op == Bin::mul) {
        k.mul_acc(g, y, ga, n);
      } else {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double d = 0.0;
          const double yi = b_bc ? y[0] : y[i];
          switch (op) {
            case Bin::add: d = g[i]; break;
            case Bin::sub: d = g[i]; break;
            case Bin::mul: d = g[i] * yi; break;
            case Bin::div: d = g[i] / yi; break;
          }
          if (a_bc) acc += d; else ga[i] += d;
        }
        if (a_bc) ga[0] += acc;
      }
    }
    if (pb_node->requires_grad) {
      double* gb = pb_node->grad_buffer().data().data();
      if (!a_bc && !b_bc && op == Bin::add) {
        k.axpy(1.0, g, gb, n);
      } else if (!a_bc && !b_bc && op == Bin::sub) {
        k.axpy(-1.0, g, gb, n);
      } else if (!a_bc && !b_bc && op == Bin::mul) {
        k.mul_acc(g, x, gb, n);
      } else {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double d = 0.0;
          const double xi = a_bc ? x[0] : x[i];
          const double yi = b_bc ? y[0] : y[i];
          switch (op) {
            case Bin::add: d = g[i]; break;
            case Bin::sub: d = -g[i]; break;
            case Bin::mul: d = g[i] * xi; break;
            case Bin::div: d = -g[i] * xi / (yi * yi); break;
          }
          if (b_bc) acc += d; else gb[i] += d;
        }
        if (b_bc) gb[0] += acc;
      }
    }
  });
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Unary op given a value map f and a local derivative df(x, y).
template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  const auto src = av.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return make_node(std::move(out), {a}, [df](Node& self) {
    const auto& p = self.parents[0];
    const auto x = p->value.data();
    const auto y = self.value.data();
    const auto g = self.grad.data();
    auto gp = p->grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] != 0.0) gp[i] += g[i] * df(x[i], y[i]);
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(Bin::add, a, b); }
Var sub(const Var& a, const Var& b) { return binary(Bin::sub, a, b); }
Var mul(const Var& a, const Var& b) { return binary(Bin::mul, a, b); }
Var div(const Var& a, const Var& b) { return binary(Bin::div, a, b); }

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var neg(const Var& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var pow(const Var& a, double exponent) {
  return unary(
      a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return sigmoid(x); });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sqrt(const Var& a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var elementwise(ElementwiseOp op, const Var& a, const std::optional<Var>& b, double exponent) {
  auto need_b = [&]() -> const Var& {
    if (!b || !*b) throw Error(Errc::invalid_argument, "binary elementwise op needs a second operand");
    return *b;
  };
  switch (op) {
    case ElementwiseOp::add: return add(a, need_b());
    case ElementwiseOp::sub: return sub(a, need_b());
    case ElementwiseOp::mul: return mul(a, need_b());
    case ElementwiseOp::div: return div(a, need_b());
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::log: return log(a);
    case ElementwiseOp::neg: return neg(a);
    case ElementwiseOp::pow_const: return pow(a, exponent);
    case ElementwiseOp::tanh: return tanh(a);
    case ElementwiseOp::softplus: return softplus(a);
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::abs: return abs(a);
    case ElementwiseOp::sqrt: return sqrt(a);
  }
  throw Error(Errc::invalid_argument, "unknown elementwise op");
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator-(const Var& a) { return neg(a); }
Var operator+(const Var& a, double b) { return add(a, Var::constant(b)); }
Var operator+(double a, const Var& b) { return add(Var::constant(a), b); }
Var operator-(const Var& a, double b) { return sub(a, Var::constant(b)); }
Var operator-(double a, const Var& b) { return sub(Var::constant(a), b); }
Var operator*(const Var& a, double b) { return mul(a, Var::constant(b)); }
Var operator*(double a, const Var& b) { return mul(Var::constant(a), b); }
Var operator/(const Var& a, double b) { return mul(a, Var::constant(1.0 / b)); }
Var operator/(double a, const Var& b) { return div(Var::constant(a), b); }

Var matmul(const Var& a, const Var& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.value().rows();
  const std::size_t k = a.value().cols();
  const std::size_t n = b.value().cols();
  if (b.value().rows() != k) shape_error("matmul", a.shape(), b.shape());
  Tensor out({m, n});
  simd::kernels().gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n, false);
  return make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    const auto& kern = simd::kernels();
    const double* g = self.grad.data().data();
    if (pa->requires_grad) {
      // dA = G * B^T
      kern.gemm_nt(g, pb->value.data().data(), pa->grad_buffer().data().data(), m, n, k, true);
    }
    if (pb->requires_grad) {
      // dB = A^T * G
      kern.gemm_tn(pa->value.data().data(), g, pb->grad_buffer().data().data(), k, m, n, true);
    }
  });
}

Var transpose(const Var& a) {
  require_rank2("transpose", a);
  const std::size_t r = a.value().rows();
  const std::size_t c = a.value().cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
  return make_node(std::move(out), {a}, [r, c](Node& self) {
    Tensor& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gp.at(i, j) += self.grad.at(j, i);
  });
}

Var reduce(ReduceOp op, const Var& a, std::optional<int> axis) {
  const Tensor& av = a.value();
  const double scale_all = op == ReduceOp::mean ? 1.0 / static_cast<double>(av.numel()) : 1.0;
  if (!axis) {
    const double s = simd::kernels().sum(av.data().data(), av.numel());
    return make_node(Tensor::scalar(s * scale_all), {a}, [scale_all](Node& self) {
      const double g = self.grad[0] * scale_all;
      for (auto& v : self.parents[0]->grad_buffer().data()) v += g;
    });
  }
  if (av.rank() != 2 || (*axis != 0 && *axis != 1)) {
    throw Error(Errc::out_of_range, "reduce: axis " + std::to_string(*axis) + " invalid for shape " + to_string(av.shape()));
  }
  const std::size_t r = av.rows();
  const std::size_t c = av.cols();
  if (*axis == 0) {
    const double scale = op == ReduceOp::mean ? 1.0 / static_cast<double>(r) : 1.0;
    Tensor out({1, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += av.at(i, j);
    for (auto& v : out.data()) v *= scale;
    return make_node(std::move(out), {a}, [r, c, scale](Node& self) {
      Tensor& gp = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gp.at(i, j) += self.grad[j] * scale;
    });
  }
  const double scale = op == ReduceOp::mean ? 1.0 / static_cast<double>(c) : 1.0;
  Tensor out({r, 1});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av.at(i, j);
    out[i] = s * scale;
  }
  return make_node(std::move(out), {a}, [r, c, scale](Node& self) {
    Tensor& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      const double g = self.grad[i] * scale;
      for (std::size_t j = 0; j < c; ++j) gp.at(i, j) += g;
    }
  });
}

Var sum(const Var& a, std::optional<int> axis) { return reduce(ReduceOp::sum, a, axis); }
Var mean(const Var& a, std::optional<int> axis) { return reduce(ReduceOp::mean, a, axis); }

Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.value().numel()) shape_error("reshape", a.shape(), shape);
  std::vector<double> data(a.value().data().begin(), a.value().data().end());
  return make_node(Tensor(std::move(shape), std::move(data)), {a}, [](Node& self) {
    auto gp = self.parents[0]->grad_buffer().data();
    simd::kernels().axpy(1.0, self.grad.data().data(), gp.data(), gp.size());
  });
}

Var select_cols(const Var& a, std::span<const std::size_t> cols) {
  require_rank2("select_cols", a);
  const std::size_t r = a.value().rows();
  const std::size_t c = a.value().cols();
  for (auto j : cols) {
    if (j >= c) throw Error(Errc::out_of_range, "select_cols: column " + std::to_string(j) + " of shape " + to_string(a.shape()));
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  const std::size_t m = idx.size();
  Tensor out({r, m});
  const double* src = a.value().data().data();
  double* dst = out.data().data();
  for (std::size_t i = 0; i < r; ++i, src += c, dst += m)
    for (std::size_t j = 0; j < m; ++j) dst[j] = src[idx[j]];
  return make_node(std::move(out), {a}, [idx = std::move(idx), r](Node& self) {
    Tensor& gp = self.parents[0]->grad_buffer();
    const std::size_t m = idx.size();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < m; ++j) gp.at(i, idx[j]) += self.grad.at(i, j);
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_cols", a);
  if (begin > end || end > a.value().cols()) {
    throw Error(Errc::out_of_range, "slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                        ") of shape " + to_string(a.shape()));
  }
  const std::size_t r = a.value().rows();
  const std::size_t c = a.value().cols();
  const std::size_t m = end - begin;
  Tensor out({r, m});
  for (std::size_t i = 0; i < r; ++i) {
    const double* src = a.value().data().data() + i * c + begin;
    std::copy(src, src + m, out.data().data() + i * m);
  }
  return make_node(std::move(out), {a}, [r, c, m, begin](Node& self) {
    double* gp = self.parents[0]->grad_buffer().data().data();
    const double* g = self.grad.data().data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < m; ++j) gp[i * c + begin + j] += g[i * m + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(Errc::invalid_argument, "concat_cols: no inputs");
  for (const auto& p : parts) require_rank2("concat_cols", p);
  const std::size_t r = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.value().rows() != r) shape_error("concat_cols", parts[0].shape(), p.shape());
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({r, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = widths[k];
    for (std::size_t i = 0; i < r; ++i) {
      const double* src = parts[k].value().data().data() + i * w;
      std::copy(src, src + w, out.data().data() + i * total + off);
    }
    off += w;
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_node(std::move(out), std::move(parents), [widths = std::move(widths), r, total](Node& self) {
    std::size_t off = 0;
    const double* g = self.grad.data().data();
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const auto& p = self.parents[k];
      const std::size_t w = widths[k];
      if (p->requires_grad) {
        double* gp = p->grad_buffer().data().data();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off + j];
      }
      off += w;
    }
  });
}

Var tile_rows(const Var& a, std::size_t n) {
  const Tensor& av = a.value();
  if (av.rows() != 1) throw Error(Errc::shape_mismatch, "tile_rows: expected [1 x c], got " + to_string(av.shape()));
  const std::size_t c = av.cols();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) std::copy(av.data().begin(), av.data().end(), out.data().begin() + i * c);
  return make_node(std::move(out), {a}, [n, c](Node& self) {
    double* gp = self.parents[0]->grad_buffer().data().data();
    const double* g = self.grad.data().data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) gp[j] += g[i * c + j];
  });
}

Var tile_cols(const Var& a, std::size_t c) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.cols() != 1) {
    throw Error(Errc::shape_mismatch, "tile_cols: expected [n x 1], got " + to_string(av.shape()));
  }
  const std::size_t n = av.rows();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = av[i];
  return make_node(std::move(out), {a}, [n, c](Node& self) {
    double* gp = self.parents[0]->grad_buffer().data().data();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += self.grad.at(i, j);
      gp[i] += s;
    }
  });
}

Var cumsum_cols(const Var& a) {
  require_rank2("cumsum_cols", a);
  const std::size_t r = a.value().rows();
  const std::size_t c = a.value().cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      s += a.value().at(i, j);
      out.at(i, j) = s;
    }
  }
  return make_node(std::move(out), {a}, [r, c](Node& self) {
    Tensor& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = c; j-- > 0;) {
        s += self.grad.at(i, j);
        gp.at(i, j) += s;
      }
    }
  });
}

Var gather_cols(const Var& a, std::span<const std::size_t> index) {
  require_rank2("gather_cols", a);
  const std::size_t r = a.value().rows();
  const std::size_t c = a.value().cols();
  if (index.size() != r) {
    throw Error(Errc::shape_mismatch, "gather_cols: " + std::to_string(index.size()) + " indices for shape " + to_string(a.shape()));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor out({r, 1});
  for (std::size_t i = 0; i < r; ++i) {
    if (idx[i] >= c) throw Error(Errc::out_of_range, "gather_cols: index " + std::to_string(idx[i]) + " >= " + std::to_string(c));
    out[i] = a.value().at(i, idx[i]);
  }
  return make_node(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Tensor& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) gp.at(i, idx[i]) += self.grad[i];
  });
}

Var where(std::span<const std::uint8_t> mask, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_error("where", a.shape(), b.shape());
  if (mask.size() != a.value().numel()) {
    throw Error(Errc::shape_mismatch, "where: mask of " + std::to_string(mask.size()) + " for shape " + to_string(a.shape()));
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? a.value()[i] : b.value()[i];
  return make_node(std::move(out), {a, b}, [m = std::move(m)](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto ga = pa->grad_buffer().data();
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) ga[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto gb = pb->grad_buffer().data();
      for (std::size_t i = 0; i < m.size(); ++i)
        if (!m[i]) gb[i] += self.grad[i];
    }
  });
}

namespace {

// In-place solve of T y = x (or T^T y = x when `transposed`) for one vector.
void solve_vector(const Tensor& t, double* x, std::size_t d, bool lower, bool unit, bool transposed) {
  // Effective matrix M = transposed ? T^T : T. M is lower iff lower != transposed.
  const bool eff_lower = lower != transposed;
  auto m_at = [&](std::size_t i, std::size_t j) { return transposed ? t.at(j, i) : t.at(i, j); };
  if (eff_lower) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = x[i];
      for (std::size_t j = 0; j < i; ++j) s -= m_at(i, j) * x[j];
      x[i] = unit ? s : s / m_at(i, i);
    }
  } else {
    for (std::size_t i = d; i-- > 0;) {
      double s = x[i];
      for (std::size_t j = i + 1; j < d; ++j) s -= m_at(i, j) * x[j];
      x[i] = unit ? s : s / m_at(i, i);
    }
  }
}

}  // namespace

Var solve_triangular(const Var& t, const Var& x, bool lower, bool unit_diagonal) {
  require_rank2("solve_triangular", t);
  require_rank2("solve_triangular", x);
  const std::size_t d = t.value().rows();
  if (t.value().cols() != d || x.value().cols() != d) shape_error("solve_triangular", t.shape(), x.shape());
  const std::size_t n = x.value().rows();
  Tensor y = x.value();
  for (std::size_t r = 0; r < n; ++r) solve_vector(t.value(), y.data().data() + r * d, d, lower, unit_diagonal, false);
  return make_node(std::move(y), {t, x}, [d, n, lower, unit_diagonal](Node& self) {
    const auto& pt = self.parents[0];
    const auto& px = self.parents[1];
    // gx_r = T^{-T} g_r ; gT = -sum_r gx_r y_r^T restricted to the used triangle.
    Tensor gx = self.grad;
    for (std::size_t r = 0; r < n; ++r) solve_vector(pt->value, gx.data().data() + r * d, d, lower, unit_diagonal, true);
    if (px->requires_grad) {
      auto dst = px->grad_buffer().data();
      simd::kernels().axpy(1.0, gx.data().data(), dst.data(), dst.size());
    }
    if (pt->requires_grad) {
      Tensor& gt = pt->grad_buffer();
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          const bool used = lower ? (j < i || (j == i && !unit_diagonal)) : (j > i || (j == i && !unit_diagonal));
          if (!used) continue;
          double s = 0.0;
          for (std::size_t r = 0; r < n; ++r) s += gx.at(r, i) * self.value.at(r, j);
          gt.at(i, j) -= s;
        }
      }
    }
  });
}

}  // namespace tailflow::ad
