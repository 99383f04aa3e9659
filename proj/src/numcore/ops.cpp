#include "decaf/numcore/ops.hpp"

#include "decaf/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace decaf::nc {

using detail::in;
using detail::make_result;

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

bool is_suffix(const Shape& a, const Shape& b) {
  if (b.empty() || b.size() >= a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

// True when b must be broadcast over a's leading axes.
bool broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return false;
  if (is_suffix(a, b)) return true;
  throw DimensionError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                       " are not broadcast-compatible");
}

ConstMap as_rows(const Matrix& m, Index width) { return {m.data(), m.size() / width, width}; }

Matrix reduce_to(const Matrix& g, const Shape& shape) {
  const Index nb = numel(shape);
  Matrix out(storage_rows(shape), storage_cols(shape));
  MutMap(out.data(), 1, nb) = as_rows(g, nb).colwise().sum();
  return out;
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const bool bc = broadcast_kind(a.shape(), b.shape(), "add");
  Matrix out = a.value();
  if (bc) {
    const Index nb = b.numel();
    MutMap(out.data(), out.size() / nb, nb).rowwise() += ConstMap(b.value().data(), 1, nb).row(0);
  } else {
    out += b.value();
  }
  Shape b_shape = b.shape();
  return make_result(a.shape(), std::move(out), {a, b}, [bc, b_shape](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad);
    if (in(self, 1).requires_grad) {
      in(self, 1).accumulate(bc ? reduce_to(self.grad, b_shape) : self.grad);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const bool bc = broadcast_kind(a.shape(), b.shape(), "sub");
  Matrix out = a.value();
  if (bc) {
    const Index nb = b.numel();
    MutMap(out.data(), out.size() / nb, nb).rowwise() -= ConstMap(b.value().data(), 1, nb).row(0);
  } else {
    out -= b.value();
  }
  Shape b_shape = b.shape();
  return make_result(a.shape(), std::move(out), {a, b}, [bc, b_shape](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad);
    if (in(self, 1).requires_grad) {
      Matrix g = bc ? reduce_to(self.grad, b_shape) : self.grad;
      in(self, 1).accumulate(-g);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const bool bc = broadcast_kind(a.shape(), b.shape(), "mul");
  Matrix out = a.value();
  const Index nb = b.numel();
  if (bc) {
    MutMap(out.data(), out.size() / nb, nb).array().rowwise() *=
        ConstMap(b.value().data(), 1, nb).array().row(0);
  } else {
    out.array() *= b.value().array();
  }
  Shape b_shape = b.shape();
  return make_result(a.shape(), std::move(out), {a, b}, [bc, b_shape, nb](Node& self) {
    Node& na = in(self, 0);
    Node& nbn = in(self, 1);
    if (na.requires_grad) {
      Matrix g = self.grad;
      if (bc) {
        MutMap(g.data(), g.size() / nb, nb).array().rowwise() *=
            ConstMap(nbn.value.data(), 1, nb).array().row(0);
      } else {
        g.array() *= nbn.value.array();
      }
      na.accumulate(g);
    }
    if (nbn.requires_grad) {
      Matrix g = (self.grad.array() * na.value.array()).matrix();
      nbn.accumulate(bc ? reduce_to(g, b_shape) : g);
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.shape(), a.value() * s, {a},
                     [s](Node& self) { in(self, 0).accumulate_expr(self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  Matrix out = a.value().array() + s;
  return make_result(a.shape(), std::move(out), {a},
                     [](Node& self) { in(self, 0).accumulate(self.grad); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2) throw DimensionError("matmul: right operand must be rank 2, got " + to_string(b.shape()));
  if (a.rank() < 1 || a.dim(-1) != b.dim(0)) {
    throw DimensionError("matmul: inner axis mismatch " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  Shape out_shape = a.shape();
  out_shape.back() = b.dim(1);
  Matrix out = a.value() * b.value();
  return make_result(std::move(out_shape), std::move(out), {a, b}, [](Node& self) {
    Node& na = in(self, 0);
    Node& nb = in(self, 1);
    if (na.requires_grad) na.accumulate_expr(self.grad * nb.value.transpose());
    if (nb.requires_grad) nb.accumulate_expr(na.value.transpose() * self.grad);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(0)) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " vs weight " +
                         to_string(weight.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(1)) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " vs weight " +
                         to_string(weight.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = weight.dim(1);
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return make_result(std::move(out_shape), std::move(out), {x, weight, bias}, [](Node& self) {
    Node& nx = in(self, 0);
    Node& nw = in(self, 1);
    Node& nbias = in(self, 2);
    if (nx.requires_grad) nx.accumulate_expr(self.grad * nw.value.transpose());
    if (nw.requires_grad) nw.accumulate_expr(nx.value.transpose() * self.grad);
    if (nbias.requires_grad) nbias.accumulate_expr(self.grad.colwise().sum());
  });
}

Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& na = in(self, 0);
    na.accumulate_expr((na.value.array() > 0.0).select(self.grad, 0.0).matrix());
  });
}

Tensor sigmoid(const Tensor& a) {
  // Clamped so the result stays strictly inside (0, 1) even where the exact
  // value rounds to 0 or 1.
  Matrix out = a.value().unaryExpr([](double v) {
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - 0x1.0p-53;
    double y;
    if (v >= 0) {
      y = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y = e / (1.0 + e);
    }
    return std::clamp(y, lo, hi);
  });
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& y = self.value.array();
    in(self, 0).accumulate_expr((self.grad.array() * y * (1.0 - y)).matrix());
  });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& y = self.value.array();
    in(self, 0).accumulate_expr((self.grad.array() * (1.0 - y.square())).matrix());
  });
}

Tensor abs(const Tensor& a) {
  Matrix out = a.value().cwiseAbs();
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& na = in(self, 0);
    na.accumulate_expr((self.grad.array() * na.value.array().sign()).matrix());
  });
}

Tensor softmax(const Tensor& a) {
  Matrix out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Vector dots = (self.grad.array() * y.array()).rowwise().sum();
    Matrix g = self.grad;
    g.colwise() -= dots;
    in(self, 0).accumulate_expr((g.array() * y.array()).matrix());
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Index c = x.dim(-1);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw DimensionError("layer_norm: gamma/beta must be [" + std::to_string(c) + "]");
  }
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), c);
  Vector inv_std(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat;
  out.array().rowwise() *= gamma.value().array().row(0);
  out.rowwise() += beta.value().row(0);
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), c](Node& self) {
                       Node& nx = in(self, 0);
                       Node& ng = in(self, 1);
                       Node& nbeta = in(self, 2);
                       if (nx.requires_grad) {
                         Matrix dxhat = self.grad;
                         dxhat.array().rowwise() *= ng.value.array().row(0);
                         Vector s1 = dxhat.rowwise().sum();
                         Vector s2 = (dxhat.array() * xhat.array()).rowwise().sum();
                         Matrix dx = dxhat * static_cast<double>(c);
                         dx.colwise() -= s1;
                         dx -= (xhat.array().colwise() * s2.array()).matrix();
                         dx.array().colwise() *= inv_std.array() / static_cast<double>(c);
                         nx.accumulate(dx);
                       }
                       if (ng.requires_grad) {
                         ng.accumulate_expr((self.grad.array() * xhat.array()).colwise().sum().matrix());
                       }
                       if (nbeta.requires_grad) nbeta.accumulate_expr(self.grad.colwise().sum());
                     });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Index rows = a.value().rows();
  const Index cols = a.value().cols();
  return make_result({}, std::move(out), {a}, [rows, cols](Node& self) {
    in(self, 0).accumulate_expr(Matrix::Constant(rows, cols, self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  if (n == 0) throw ContractError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_last: no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  Index total = 0;
  for (const auto& p : parts) {
    Shape l = p.shape();
    l.pop_back();
    if (l != lead) {
      throw DimensionError("concat_last: leading axes " + to_string(l) + " vs " + to_string(lead));
    }
    total += p.dim(-1);
  }
  Matrix out(parts[0].value().rows(), total);
  std::vector<Index> widths;
  Index col = 0;
  for (const auto& p : parts) {
    out.middleCols(col, p.dim(-1)) = p.value();
    widths.push_back(p.dim(-1));
    col += p.dim(-1);
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_result(std::move(shape), std::move(out), {parts.begin(), parts.end()},
                     [widths](Node& self) {
                       Index c = 0;
                       for (std::size_t i = 0; i < widths.size(); ++i) {
                         Node& ni = in(self, i);
                         if (ni.requires_grad) ni.accumulate_expr(self.grad.middleCols(c, widths[i]));
                         c += widths[i];
                       }
                     });
}

Tensor slice(const Tensor& a, Index axis, Index start, Index stop) {
  if (axis < 0) axis += a.rank();
  if (axis < 0 || axis >= a.rank()) throw DimensionError("slice: bad axis for " + to_string(a.shape()));
  const Index len = a.dim(axis);
  if (start < 0 || stop > len || start > stop) {
    throw DimensionError("slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
                         ") out of bounds on axis " + std::to_string(axis) + " of size " +
                         std::to_string(len));
  }
  Index outer = 1;
  Index inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= a.dim(i);
  for (Index i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  Shape shape = a.shape();
  shape[static_cast<std::size_t>(axis)] = stop - start;
  const Index width = stop - start;
  Matrix out(storage_rows(shape), storage_cols(shape));
  const double* src = a.value().data();
  double* dst = out.data();
  for (Index o = 0; o < outer; ++o) {
    std::copy_n(src + (o * len + start) * inner, width * inner, dst + o * width * inner);
  }
  return make_result(std::move(shape), std::move(out), {a},
                     [outer, inner, len, start, width](Node& self) {
                       Node& na = in(self, 0);
                       if (na.grad.size() == 0) na.grad = Matrix::Zero(na.value.rows(), na.value.cols());
                       const double* g = self.grad.data();
                       double* d = na.grad.data();
                       for (Index o = 0; o < outer; ++o) {
                         double* row = d + (o * len + start) * inner;
                         const double* gr = g + o * width * inner;
                         for (Index k = 0; k < width * inner; ++k) row[k] += gr[k];
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  Matrix out = ConstMap(a.value().data(), storage_rows(shape), storage_cols(shape));
  const Index rows = a.value().rows();
  const Index cols = a.value().cols();
  return make_result(std::move(shape), std::move(out), {a}, [rows, cols](Node& self) {
    in(self, 0).accumulate(ConstMap(self.grad.data(), rows, cols));
  });
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  if (p == 0.0) return a;
  Matrix mask(a.value().rows(), a.value().cols());
  const double keep = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep;
  Matrix out = (a.value().array() * mask.array()).matrix();
  return make_result(a.shape(), std::move(out), {a}, [mask = std::move(mask)](Node& self) {
    in(self, 0).accumulate_expr((self.grad.array() * mask.array()).matrix());
  });
}

Tensor pearson_rows(const Tensor& x, const Tensor& y, double eps) {
  require_same(x, y, "pearson_rows");
  if (x.rank() < 1 || x.dim(-1) < 2) throw ContractError("pearson_rows: need at least 2 samples per row");
  const Index n = x.dim(-1);
  const Index rows = x.value().rows();
  Matrix xc = x.value();
  Matrix yc = y.value();
  xc.colwise() -= xc.rowwise().mean();
  yc.colwise() -= yc.rowwise().mean();
  Vector sx = (xc.array().square().rowwise().sum() / static_cast<double>(n)).sqrt();
  Vector sy = (yc.array().square().rowwise().sum() / static_cast<double>(n)).sqrt();
  Vector s = (xc.array() * yc.array()).rowwise().sum();
  Vector denom = static_cast<double>(n) * (sx.array() + eps) * (sy.array() + eps);
  Vector rho = s.array() / denom.array();

  Shape shape = x.shape();
  shape.pop_back();
  Matrix out(storage_rows(shape), storage_cols(shape));
  MutMap(out.data(), rows, 1) = rho;
  return make_result(std::move(shape), std::move(out), {x, y},
                     [xc = std::move(xc), yc = std::move(yc), sx, sy, denom, rho, n, eps,
                      rows](Node& self) {
                       const ConstMap g(self.grad.data(), rows, 1);
                       auto grad_wrt = [&](const Matrix& own_c, const Matrix& other_c,
                                           const Vector& own_s) {
                         Matrix d(rows, n);
                         for (Index r = 0; r < rows; ++r) {
                           const double ds = own_s(r) > 0.0
                                                 ? rho(r) / ((own_s(r) + eps) * n * own_s(r))
                                                 : 0.0;
                           d.row(r) = g(r, 0) * (other_c.row(r) / denom(r) - ds * own_c.row(r));
                         }
                         return d;
                       };
                       if (in(self, 0).requires_grad) in(self, 0).accumulate(grad_wrt(xc, yc, sx));
                       if (in(self, 1).requires_grad) in(self, 1).accumulate(grad_wrt(yc, xc, sy));
                     });
}

Tensor convex_mix(const Tensor& alpha, const Tensor& e, const Tensor& p) {
  require_same(alpha, e, "convex_mix");
  require_same(e, p, "convex_mix");
  const auto& av = alpha.value().array();
  const auto& ev = e.value().array();
  const auto& pv = p.value().array();
  Matrix out = (pv + av * (ev - pv)).max(ev.min(pv)).min(ev.max(pv)).matrix();
  return make_result(e.shape(), std::move(out), {alpha, e, p}, [](Node& self) {
    Node& na = in(self, 0);
    Node& ne = in(self, 1);
    Node& np = in(self, 2);
    const auto& g = self.grad.array();
    if (na.requires_grad) na.accumulate_expr((g * (ne.value.array() - np.value.array())).matrix());
    if (ne.requires_grad) ne.accumulate_expr((g * na.value.array()).matrix());
    if (np.requires_grad) np.accumulate_expr((g * (1.0 - na.value.array())).matrix());
  });
}

bool all_finite(const Tensor& t) { return t.value().allFinite(); }

}  // namespace decaf::nc
