#include "cfine/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cfine/errors.hpp"

namespace cfine {

using detail::make_result;
using detail::Node;

namespace {

template <class F>
void with_grad(Node& self, std::size_t parent, F&& f) {
  auto& p = *self.parents[parent];
  if (p.requires_grad) f(p.ensure_grad(), p.data);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.dims()) + " vs " +
                     shape_string(b.dims()));
  }
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.dims()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& dims, std::size_t axis) {
  if (axis >= dims.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                     shape_string(dims));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= dims[i];
  s.len = dims[axis];
  for (std::size_t i = axis + 1; i < dims.size(); ++i) s.inner *= dims[i];
  if (s.len == 0) throw ShapeError(std::string(op) + ": empty axis");
  return s;
}

// Row view helpers for "last axis" ops: rank-1 inputs are one row.
std::size_t row_len(const Tensor& a) { return a.rank() == 0 ? 1 : a.dims().back(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a.dims()) + " x " +
                     shape_string(b.dims()));
  }
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    const auto& A = self.parents[0]->data;
    const auto& B = self.parents[1]->data;
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    });
    with_grad(self, 1, [&](std::vector<double>& gb, const std::vector<double>&) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
      }
    });
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto A = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
    });
  });
}

Tensor reshape(const Tensor& a, Shape dims) {
  if (shape_size(dims) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.dims()) + " as " + shape_string(dims));
  }
  const auto A = a.data();
  return make_result("reshape", std::move(dims), std::vector<double>(A.begin(), A.end()), {a},
                     [](Node& self) {
                       with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
                         for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
                       });
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return make_result("add", a.dims(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      with_grad(self, p, [&](std::vector<double>& gp, const std::vector<double>&) {
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
      });
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return make_result("sub", a.dims(), std::move(out), {a, b}, [](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    });
    with_grad(self, 1, [&](std::vector<double>& gb, const std::vector<double>&) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return make_result("mul", a.dims(), std::move(out), {a, b}, [](Node& self) {
    const auto& A = self.parents[0]->data;
    const auto& B = self.parents[1]->data;
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * B[i];
    });
    with_grad(self, 1, [&](std::vector<double>& gb, const std::vector<double>&) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * A[i];
    });
  });
}

Tensor scale(const Tensor& a, double factor) {
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * factor;
  return make_result("scale", a.dims(), std::move(out), {a}, [factor](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * factor;
    });
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + value;
  return make_result("add_scalar", a.dims(), std::move(out), {a}, [](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    });
  });
}

Tensor add_rowwise(const Tensor& m, const Tensor& row) {
  require_matrix("add_rowwise", m);
  const std::size_t r = m.dim(0), c = m.dim(1);
  if (row.size() != c) {
    throw ShapeError("add_rowwise: row of size " + std::to_string(row.size()) +
                     " does not match matrix " + shape_string(m.dims()));
  }
  const auto M = m.data();
  const auto V = row.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = M[i * c + j] + V[j];
  return make_result("add_rowwise", m.dims(), std::move(out), {m, row}, [r, c](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& gm, const std::vector<double>&) {
      for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += self.grad[i];
    });
    with_grad(self, 1, [&](std::vector<double>& gv, const std::vector<double>&) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gv[j] += self.grad[i * c + j];
    });
  });
}

Tensor relu(const Tensor& a) {
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] > 0.0 ? A[i] : 0.0;
  return make_result("relu", a.dims(), std::move(out), {a}, [](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>& A) {
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (A[i] > 0.0) ga[i] += self.grad[i];
    });
  });
}

Tensor gelu(const Tensor& a) {
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * A[i] * (1.0 + std::erf(A[i] * M_SQRT1_2));
  }
  return make_result("gelu", a.dims(), std::move(out), {a}, [](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>& A) {
      const double inv_sqrt_2pi = 0.5 * M_2_SQRTPI * M_SQRT1_2;
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const double x = A[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        ga[i] += self.grad[i] * (cdf + x * pdf);
      }
    });
  });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].dims();
  if (first.empty()) throw ShapeError("concat: scalars have no axis 0");
  Shape tail(first.begin() + 1, first.end());
  std::size_t rows = 0;
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const Shape& d = p.dims();
    if (d.empty() || Shape(d.begin() + 1, d.end()) != tail) {
      throw ShapeError("concat: incompatible part " + shape_string(d) + " with " +
                       shape_string(first));
    }
    offsets.push_back(out.size());
    rows += d[0];
    const auto data = p.data();
    out.insert(out.end(), data.begin(), data.end());
  }
  Shape dims = first;
  dims[0] = rows;
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result("concat", std::move(dims), std::move(out), std::move(parents),
                     [offsets](Node& self) {
                       for (std::size_t p = 0; p < offsets.size(); ++p) {
                         with_grad(self, p, [&](std::vector<double>& gp, const std::vector<double>&) {
                           for (std::size_t i = 0; i < gp.size(); ++i)
                             gp[i] += self.grad[offsets[p] + i];
                         });
                       }
                     });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0) throw ShapeError("slice_rows: scalar input");
  if (begin >= end || end > a.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_string(a.dims()));
  }
  const std::size_t stride = a.size() / a.dim(0);
  const auto A = a.data();
  std::vector<double> out(A.begin() + begin * stride, A.begin() + end * stride);
  Shape dims = a.dims();
  dims[0] = end - begin;
  return make_result("slice_rows", std::move(dims), std::move(out), {a},
                     [offset = begin * stride](Node& self) {
                       with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           ga[offset + i] += self.grad[i];
                       });
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  if (a.rank() == 0) throw ShapeError("gather_rows: scalar input");
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t n = a.dim(0);
  const std::size_t stride = a.size() / n;
  const auto A = a.data();
  std::vector<double> out;
  out.reserve(indices.size() * stride);
  for (auto idx : indices) {
    if (idx >= n) {
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                       shape_string(a.dims()));
    }
    out.insert(out.end(), A.begin() + idx * stride, A.begin() + (idx + 1) * stride);
  }
  Shape dims = a.dims();
  dims[0] = indices.size();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result("gather_rows", std::move(dims), std::move(out), {a},
                     [idx = std::move(idx), stride](Node& self) {
                       with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
                         for (std::size_t r = 0; r < idx.size(); ++r)
                           for (std::size_t c = 0; c < stride; ++c)
                             ga[idx[r] * stride + c] += self.grad[r * stride + c];
                       });
                     });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result("sum", {}, {acc}, {a}, [](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (auto& g : ga) g += self.grad[0];
    });
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  const auto s = split_axis("sum_axis", a.dims(), axis);
  const auto A = a.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += A[(o * s.len + l) * s.inner + i];
  Shape dims = a.dims();
  dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(axis));
  return make_result("sum_axis", std::move(dims), std::move(out), {a}, [s](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t l = 0; l < s.len; ++l)
          for (std::size_t i = 0; i < s.inner; ++i)
            ga[(o * s.len + l) * s.inner + i] += self.grad[o * s.inner + i];
    });
  });
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  const auto len = a.dim(axis);
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(len));
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto s = split_axis("softmax", a.dims(), axis);
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t l) { return (o * s.len + l) * s.inner + i; };
      double mx = A[at(0)];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, A[at(l)]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        out[at(l)] = std::exp(A[at(l)] - mx);
        z += out[at(l)];
      }
      for (std::size_t l = 0; l < s.len; ++l) out[at(l)] /= z;
    }
  }
  return make_result("softmax", a.dims(), std::move(out), {a}, [s](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      const auto& y = self.data;
      const auto& g = self.grad;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          auto at = [&](std::size_t l) { return (o * s.len + l) * s.inner + i; };
          double dot = 0.0;
          for (std::size_t l = 0; l < s.len; ++l) dot += g[at(l)] * y[at(l)];
          for (std::size_t l = 0; l < s.len; ++l) ga[at(l)] += y[at(l)] * (g[at(l)] - dot);
        }
      }
    });
  });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const auto s = split_axis("log_softmax", a.dims(), axis);
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t l) { return (o * s.len + l) * s.inner + i; };
      double mx = A[at(0)];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, A[at(l)]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) z += std::exp(A[at(l)] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t l = 0; l < s.len; ++l) out[at(l)] = A[at(l)] - lse;
    }
  }
  return make_result("log_softmax", a.dims(), std::move(out), {a}, [s](Node& self) {
    with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
      const auto& y = self.data;
      const auto& g = self.grad;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          auto at = [&](std::size_t l) { return (o * s.len + l) * s.inner + i; };
          double total = 0.0;
          for (std::size_t l = 0; l < s.len; ++l) total += g[at(l)];
          for (std::size_t l = 0; l < s.len; ++l) ga[at(l)] += g[at(l)] - std::exp(y[at(l)]) * total;
        }
      }
    });
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t n = row_len(x);
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias must have length " + std::to_string(n));
  }
  const std::size_t rows = x.size() / n;
  const auto X = x.data();
  const auto G = gain.data();
  const auto Bv = bias.data();
  std::vector<double> out(X.size());
  std::vector<double> xhat(X.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += X[r * n + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double dlt = X[r * n + c] - mu;
      var += dlt * dlt;
    }
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (X[r * n + c] - mu) * rstd[r];
      out[r * n + c] = xhat[r * n + c] * G[c] + Bv[c];
    }
  }
  return make_result(
      "layer_norm", x.dims(), std::move(out), {x, gain, bias},
      [n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const auto& g = self.grad;
        const auto& G = self.parents[1]->data;
        with_grad(self, 0, [&](std::vector<double>& gx, const std::vector<double>&) {
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double dxh = g[r * n + c] * G[c];
              m1 += dxh;
              m2 += dxh * xhat[r * n + c];
            }
            m1 /= static_cast<double>(n);
            m2 /= static_cast<double>(n);
            for (std::size_t c = 0; c < n; ++c) {
              const double dxh = g[r * n + c] * G[c];
              gx[r * n + c] += rstd[r] * (dxh - m1 - xhat[r * n + c] * m2);
            }
          }
        });
        with_grad(self, 1, [&](std::vector<double>& gg, const std::vector<double>&) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) gg[c] += g[r * n + c] * xhat[r * n + c];
        });
        with_grad(self, 2, [&](std::vector<double>& gb, const std::vector<double>&) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
        });
      });
}

Tensor l2_normalize_rows(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("l2_normalize_rows: scalar input");
  const std::size_t n = row_len(a);
  const std::size_t rows = a.size() / n;
  const auto A = a.data();
  std::vector<double> out(A.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < n; ++c) ss += A[r * n + c] * A[r * n + c];
    if (ss == 0.0) throw NumericError("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
    norms[r] = std::sqrt(ss);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = A[r * n + c] / norms[r];
  }
  return make_result("l2_normalize_rows", a.dims(), std::move(out), {a},
                     [n, rows, norms = std::move(norms)](Node& self) {
                       with_grad(self, 0, [&](std::vector<double>& ga, const std::vector<double>&) {
                         const auto& y = self.data;
                         const auto& g = self.grad;
                         for (std::size_t r = 0; r < rows; ++r) {
                           double dot = 0.0;
                           for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
                           for (std::size_t c = 0; c < n; ++c)
                             ga[r * n + c] += (g[r * n + c] - y[r * n + c] * dot) / norms[r];
                         }
                       });
                     });
}

namespace {

struct CosineParts {
  double dot, na, nb;
  double value;  // dot / sqrt(|a|^2 |b|^2), exactly 1 for identical inputs
};

CosineParts cosine_parts(const double* a, const double* b, std::size_t n) {
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double denom = std::sqrt(aa * bb);
  return {dot, std::sqrt(aa), std::sqrt(bb), denom > 0.0 ? dot / denom : 0.0};
}

// Accumulates d cos / d a and d cos / d b for one row pair.
void cosine_backward(const double* a, const double* b, std::size_t n, const CosineParts& p,
                     double g, double* ga, double* gb) {
  const double s = p.value;
  for (std::size_t i = 0; i < n; ++i) {
    if (ga) ga[i] += g * (b[i] / (p.na * p.nb) - s * a[i] / (p.na * p.na));
    if (gb) gb[i] += g * (a[i] / (p.na * p.nb) - s * b[i] / (p.nb * p.nb));
  }
}

}  // namespace

Tensor cosine(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: size mismatch " + shape_string(a.dims()) + " vs " +
                     shape_string(b.dims()));
  }
  const std::size_t n = a.size();
  const auto p = cosine_parts(a.data().data(), b.data().data(), n);
  if (p.na == 0.0 || p.nb == 0.0) {
    throw NumericError(std::string("cosine: zero-norm ") + (p.na == 0.0 ? "first" : "second") +
                       " argument");
  }
  return make_result("cosine", {}, {p.value}, {a, b}, [n, p](Node& self) {
    const auto& A = self.parents[0]->data;
    const auto& B = self.parents[1]->data;
    double* ga = self.parents[0]->requires_grad ? self.parents[0]->ensure_grad().data() : nullptr;
    double* gb = self.parents[1]->requires_grad ? self.parents[1]->ensure_grad().data() : nullptr;
    cosine_backward(A.data(), B.data(), n, p, self.grad[0], ga, gb);
  });
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  require_matrix("cosine_rows", a);
  require_same_shape("cosine_rows", a, b);
  const std::size_t rows = a.dim(0), n = a.dim(1);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<CosineParts> parts(rows);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    parts[r] = cosine_parts(A.data() + r * n, B.data() + r * n, n);
    if (parts[r].na == 0.0 || parts[r].nb == 0.0) {
      throw NumericError("cosine_rows: zero-norm row " + std::to_string(r) + " in " +
                         (parts[r].na == 0.0 ? "first" : "second") + " argument");
    }
    out[r] = parts[r].value;
  }
  return make_result("cosine_rows", {rows}, std::move(out), {a, b},
                     [rows, n, parts = std::move(parts)](Node& self) {
                       const auto& A = self.parents[0]->data;
                       const auto& B = self.parents[1]->data;
                       double* ga = self.parents[0]->requires_grad ? self.parents[0]->ensure_grad().data() : nullptr;
                       double* gb = self.parents[1]->requires_grad ? self.parents[1]->ensure_grad().data() : nullptr;
                       for (std::size_t r = 0; r < rows; ++r) {
                         cosine_backward(A.data() + r * n, B.data() + r * n, n, parts[r],
                                         self.grad[r], ga ? ga + r * n : nullptr,
                                         gb ? gb + r * n : nullptr);
                       }
                     });
}

AttentionOutput multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::size_t heads, std::span<const bool> key_mask) {
  require_matrix("attention", q);
  require_matrix("attention", k);
  require_matrix("attention", v);
  const std::size_t lq = q.dim(0), lk = k.dim(0), d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != lk) {
    throw ShapeError("attention: q " + shape_string(q.dims()) + ", k " + shape_string(k.dims()) +
                     ", v " + shape_string(v.dims()) + " are incompatible");
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (!key_mask.empty() && key_mask.size() != lk) {
    throw ShapeError("attention: key mask length " + std::to_string(key_mask.size()) +
                     " != key count " + std::to_string(lk));
  }
  auto masked = [&](std::size_t j) { return !key_mask.empty() && key_mask[j]; };
  std::size_t live = 0;
  for (std::size_t j = 0; j < lk; ++j) live += masked(j) ? 0 : 1;
  if (live == 0) throw ContractError("attention: every key is masked");

  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto Q = q.data();
  const auto K = k.data();
  const auto V = v.data();
  std::vector<double> probs(heads * lq * lk, 0.0);
  std::vector<double> out(lq * d, 0.0);
  std::vector<double> head_mean(lq * lk, 0.0);
  std::vector<double> row(lk);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < lq; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < lk; ++j) {
        if (masked(j)) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += Q[i * d + off + c] * K[j * d + off + c];
        row[j] = s * inv_sqrt;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      double* P = probs.data() + (h * lq + i) * lk;
      for (std::size_t j = 0; j < lk; ++j) {
        if (masked(j)) continue;
        P[j] = std::exp(row[j] - mx);
        z += P[j];
      }
      for (std::size_t j = 0; j < lk; ++j) {
        if (masked(j)) continue;
        P[j] /= z;
        head_mean[i * lk + j] += P[j] / static_cast<double>(heads);
        for (std::size_t c = 0; c < dh; ++c) out[i * d + off + c] += P[j] * V[j * d + off + c];
      }
    }
  }

  Tensor values = make_result(
      "attention", {lq, d}, std::move(out), {q, k, v},
      [lq, lk, d, dh, heads, inv_sqrt, probs = std::move(probs)](Node& self) {
        const auto& Q = self.parents[0]->data;
        const auto& K = self.parents[1]->data;
        const auto& V = self.parents[2]->data;
        const auto& g = self.grad;
        double* gq = self.parents[0]->requires_grad ? self.parents[0]->ensure_grad().data() : nullptr;
        double* gk = self.parents[1]->requires_grad ? self.parents[1]->ensure_grad().data() : nullptr;
        double* gv = self.parents[2]->requires_grad ? self.parents[2]->ensure_grad().data() : nullptr;
        std::vector<double> dp(lk);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < lq; ++i) {
            const double* P = probs.data() + (h * lq + i) * lk;
            double dot = 0.0;
            for (std::size_t j = 0; j < lk; ++j) {
              double acc = 0.0;
              for (std::size_t c = 0; c < dh; ++c) acc += g[i * d + off + c] * V[j * d + off + c];
              dp[j] = acc;
              dot += acc * P[j];
            }
            for (std::size_t j = 0; j < lk; ++j) {
              if (P[j] == 0.0) continue;
              if (gv) {
                for (std::size_t c = 0; c < dh; ++c) gv[j * d + off + c] += P[j] * g[i * d + off + c];
              }
              const double ds = P[j] * (dp[j] - dot) * inv_sqrt;
              for (std::size_t c = 0; c < dh; ++c) {
                if (gq) gq[i * d + off + c] += ds * K[j * d + off + c];
                if (gk) gk[j * d + off + c] += ds * Q[i * d + off + c];
              }
            }
          }
        }
      });
  return {std::move(values), Tensor({lq, lk}, std::move(head_mean))};
}

std::vector<std::size_t> argsort_descending(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return idx;
}

}  // namespace cfine
