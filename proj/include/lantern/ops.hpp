#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "lantern/kernels.hpp"
#include "lantern/tensor.hpp"

// Tape ops on TensorT. Shapes must match exactly; the only broadcast is the
// leading-row one in add_rowwise. Each op validates inputs, computes the
// forward value through the kernel dispatchers, and records a backward
// closure when a tape is active and some input requires grad.

namespace lantern::ops {

template <class T>
bool rec(const TensorT<T>& a) {
  return active_tape<T>() != nullptr && a.requires_grad();
}

template <class T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

template <class T>
TensorT<T> make_out(std::vector<int> shape, bool rg) {
  auto out = TensorT<T>::zeros(std::move(shape), rg);
  if (rg) out.ensure_grad();
  return out;
}

template <class T>
TensorT<T> add(TensorT<T> a, TensorT<T> b) {
  check_same_shape(a, b, "add");
  const bool rg = rec(a) || rec(b);
  auto out = make_out<T>(a.shape(), rg);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (rg) {
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    active_tape<T>()->record([a, b, out]() mutable {
      const T* g = out.grad();
      const std::size_t nn = out.numel();
      if (a.requires_grad())
        for (std::size_t i = 0; i < nn; ++i) a.grad()[i] += g[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < nn; ++i) b.grad()[i] += g[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> sub(TensorT<T> a, TensorT<T> b) {
  check_same_shape(a, b, "sub");
  const bool rg = rec(a) || rec(b);
  auto out = make_out<T>(a.shape(), rg);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (rg) {
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    active_tape<T>()->record([a, b, out]() mutable {
      const T* g = out.grad();
      const std::size_t nn = out.numel();
      if (a.requires_grad())
        for (std::size_t i = 0; i < nn; ++i) a.grad()[i] += g[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < nn; ++i) b.grad()[i] -= g[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> mul(TensorT<T> a, TensorT<T> b) {
  check_same_shape(a, b, "mul");
  const bool rg = rec(a) || rec(b);
  auto out = make_out<T>(a.shape(), rg);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (rg) {
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    active_tape<T>()->record([a, b, out]() mutable {
      const T* g = out.grad();
      const std::size_t nn = out.numel();
      if (a.requires_grad())
        for (std::size_t i = 0; i < nn; ++i) a.grad()[i] += g[i] * b.data()[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < nn; ++i) b.grad()[i] += g[i] * a.data()[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> scale(TensorT<T> a, T s) {
  const bool rg = rec(a);
  auto out = make_out<T>(a.shape(), rg);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out, s]() mutable {
      const T* g = out.grad();
      const std::size_t nn = out.numel();
      for (std::size_t i = 0; i < nn; ++i) a.grad()[i] += g[i] * s;
    });
  }
  return out;
}

template <class T>
TensorT<T> add_scalar(TensorT<T> a, T s) {
  const bool rg = rec(a);
  auto out = make_out<T>(a.shape(), rg);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + s;
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out]() mutable {
      const T* g = out.grad();
      const std::size_t nn = out.numel();
      for (std::size_t i = 0; i < nn; ++i) a.grad()[i] += g[i];
    });
  }
  return out;
}

// m[R,C] + v[C], v broadcast over the leading dimension
template <class T>
TensorT<T> add_rowwise(TensorT<T> m, TensorT<T> v) {
  if (m.ndim() != 2 || v.ndim() != 1 || m.dim(1) != v.dim(0))
    throw ShapeError("add_rowwise: need [R,C] + [C], got " + shape_str(m.shape()) +
                     " + " + shape_str(v.shape()));
  const bool rg = rec(m) || rec(v);
  auto out = make_out<T>(m.shape(), rg);
  const int rows = m.dim(0), cols = m.dim(1);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out.data()[std::size_t(i) * cols + j] = m.data()[std::size_t(i) * cols + j] + v.data()[j];
  if (rg) {
    if (m.requires_grad()) m.ensure_grad();
    if (v.requires_grad()) v.ensure_grad();
    active_tape<T>()->record([m, v, out, rows, cols]() mutable {
      const T* g = out.grad();
      if (m.requires_grad()) {
        const std::size_t nn = out.numel();
        for (std::size_t i = 0; i < nn; ++i) m.grad()[i] += g[i];
      }
      if (v.requires_grad()) {
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) v.grad()[j] += g[std::size_t(i) * cols + j];
      }
    });
  }
  return out;
}

// a[M,K] . b[N,K]^T -> [M,N]
template <class T>
TensorT<T> matmul_nt(TensorT<T> a, TensorT<T> b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("matmul_nt: incompatible " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int m = a.dim(0), n = b.dim(0), k = a.dim(1);
  const bool rg = rec(a) || rec(b);
  auto out = make_out<T>({m, n}, rg);
  kernels::matmul_nt(a.data(), b.data(), out.data(), m, n, k);
  if (rg) {
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    active_tape<T>()->record([a, b, out, m, n, k]() mutable {
      const T* g = out.grad();
      if (a.requires_grad()) kernels::matmul_nn_acc(g, b.data(), a.grad(), m, k, n);
      if (b.requires_grad()) kernels::matmul_tn_acc(g, a.data(), b.grad(), m, n, k);
    });
  }
  return out;
}

// a[M,K] . b[K,N] -> [M,N]
template <class T>
TensorT<T> matmul(TensorT<T> a, TensorT<T> b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool rg = rec(a) || rec(b);
  auto out = make_out<T>({m, n}, rg);
  kernels::matmul_nn_acc(a.data(), b.data(), out.data(), m, n, k);
  if (rg) {
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    active_tape<T>()->record([a, b, out, m, n, k]() mutable {
      const T* g = out.grad();
      if (a.requires_grad()) kernels::matmul_nt_acc(g, b.data(), a.grad(), m, k, n);
      if (b.requires_grad()) kernels::matmul_tn_acc(a.data(), g, b.grad(), m, k, n);
    });
  }
  return out;
}

template <class T>
TensorT<T> gelu(TensorT<T> a) {
  const bool rg = rec(a);
  auto out = make_out<T>(a.shape(), rg);
  kernels::gelu(a.data(), out.data(), a.numel());
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out]() mutable {
      kernels::gelu_backward(a.data(), out.grad(), a.grad(), a.numel());
    });
  }
  return out;
}

template <class T>
TensorT<T> exp(TensorT<T> a) {
  const bool rg = rec(a);
  auto out = make_out<T>(a.shape(), rg);
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::exp(a.data()[i]);
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out]() mutable {
      const std::size_t nn = out.numel();
      for (std::size_t i = 0; i < nn; ++i) a.grad()[i] += out.grad()[i] * out.data()[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> clip(TensorT<T> a, T lo, T hi) {
  const bool rg = rec(a);
  auto out = make_out<T>(a.shape(), rg);
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::clamp(a.data()[i], lo, hi);
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out, lo, hi]() mutable {
      const std::size_t nn = out.numel();
      for (std::size_t i = 0; i < nn; ++i)
        if (a.data()[i] >= lo && a.data()[i] <= hi) a.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

// elementwise min; ties route the gradient to a
template <class T>
TensorT<T> minimum(TensorT<T> a, TensorT<T> b) {
  check_same_shape(a, b, "minimum");
  const bool rg = rec(a) || rec(b);
  auto out = make_out<T>(a.shape(), rg);
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] <= b.data()[i] ? a.data()[i] : b.data()[i];
  if (rg) {
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    active_tape<T>()->record([a, b, out]() mutable {
      const std::size_t nn = out.numel();
      for (std::size_t i = 0; i < nn; ++i) {
        if (a.data()[i] <= b.data()[i]) {
          if (a.requires_grad()) a.grad()[i] += out.grad()[i];
        } else if (b.requires_grad()) {
          b.grad()[i] += out.grad()[i];
        }
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> softmax_rows(TensorT<T> a) {
  if (a.ndim() != 2) throw ShapeError("softmax_rows: need 2-d input");
  const int rows = a.dim(0), cols = a.dim(1);
  const bool rg = rec(a);
  auto out = make_out<T>(a.shape(), rg);
  kernels::softmax_rows(a.data(), out.data(), rows, cols);
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out, rows, cols]() mutable {
      kernels::softmax_rows_backward(out.data(), out.grad(), a.grad(), rows, cols);
    });
  }
  return out;
}

template <class T>
TensorT<T> log_softmax_rows(TensorT<T> a) {
  if (a.ndim() != 2) throw ShapeError("log_softmax_rows: need 2-d input");
  const int rows = a.dim(0), cols = a.dim(1);
  const bool rg = rec(a);
  auto out = make_out<T>(a.shape(), rg);
  kernels::log_softmax_rows(a.data(), out.data(), rows, cols);
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out, rows, cols]() mutable {
      kernels::log_softmax_rows_backward(out.data(), out.grad(), a.grad(), rows, cols);
    });
  }
  return out;
}

template <class T>
TensorT<T> layernorm_rows(TensorT<T> x, TensorT<T> gamma, TensorT<T> beta, T eps) {
  if (x.ndim() != 2) throw ShapeError("layernorm_rows: need 2-d input");
  const int rows = x.dim(0), cols = x.dim(1);
  if (gamma.ndim() != 1 || gamma.dim(0) != cols || beta.ndim() != 1 || beta.dim(0) != cols)
    throw ShapeError("layernorm_rows: gamma/beta must be [cols]");
  const bool rg = rec(x) || rec(gamma) || rec(beta);
  auto out = make_out<T>(x.shape(), rg);
  auto mean = TensorT<T>::zeros({rows});
  auto rstd = TensorT<T>::zeros({rows});
  kernels::layernorm_rows(x.data(), gamma.data(), beta.data(), out.data(),
                          mean.data(), rstd.data(), rows, cols, eps);
  if (rg) {
    if (x.requires_grad()) x.ensure_grad();
    if (gamma.requires_grad()) gamma.ensure_grad();
    if (beta.requires_grad()) beta.ensure_grad();
    active_tape<T>()->record([x, gamma, beta, out, mean, rstd, rows, cols]() mutable {
      // dgamma/dbeta go into scratch when the params are frozen
      std::vector<T> scratch_g, scratch_b;
      T* dg;
      T* db;
      if (gamma.requires_grad()) {
        dg = gamma.grad();
      } else {
        scratch_g.assign(std::size_t(cols), T(0));
        dg = scratch_g.data();
      }
      if (beta.requires_grad()) {
        db = beta.grad();
      } else {
        scratch_b.assign(std::size_t(cols), T(0));
        db = scratch_b.data();
      }
      if (x.requires_grad()) {
        kernels::layernorm_rows_backward(x.data(), gamma.data(), mean.data(),
                                         rstd.data(), out.grad(), x.grad(), dg, db,
                                         rows, cols);
      } else {
        std::vector<T> dx(std::size_t(rows) * cols, T(0));
        kernels::layernorm_rows_backward(x.data(), gamma.data(), mean.data(),
                                         rstd.data(), out.grad(), dx.data(), dg, db,
                                         rows, cols);
      }
    });
  }
  return out;
}

// gather rows of a [R,C] by index -> [n,C]; backward scatter-adds
template <class T>
TensorT<T> gather_rows(TensorT<T> a, std::vector<int> ids) {
  if (a.ndim() != 2) throw ShapeError("gather_rows: need 2-d input");
  const int rows = a.dim(0), cols = a.dim(1);
  for (int id : ids)
    if (id < 0 || id >= rows)
      throw ShapeError("gather_rows: index " + std::to_string(id) + " out of range [0," +
                       std::to_string(rows) + ")");
  const int n = static_cast<int>(ids.size());
  const bool rg = rec(a);
  auto out = make_out<T>({n, cols}, rg);
  for (int i = 0; i < n; ++i)
    std::copy_n(a.data() + std::size_t(ids[std::size_t(i)]) * cols, cols,
                out.data() + std::size_t(i) * cols);
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out, ids = std::move(ids), cols]() mutable {
      // serial scatter: indices may repeat
      for (std::size_t i = 0; i < ids.size(); ++i) {
        T* dst = a.grad() + std::size_t(ids[i]) * cols;
        const T* src = out.grad() + i * cols;
        for (int j = 0; j < cols; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// one row sourced from an existing tensor; used to assemble input sequences
template <class T>
struct RowRef {
  TensorT<T> tensor;
  int row = 0;
};

// stack rows from multiple source tensors into [n, C]
template <class T>
TensorT<T> compose_rows(const std::vector<RowRef<T>>& rows, int cols) {
  const int n = static_cast<int>(rows.size());
  bool rg = false;
  for (const auto& r : rows) {
    if (r.tensor.ndim() != 2 || r.tensor.dim(1) != cols)
      throw ShapeError("compose_rows: every source must be [*, " + std::to_string(cols) + "]");
    if (r.row < 0 || r.row >= r.tensor.dim(0))
      throw ShapeError("compose_rows: row index out of range");
    rg = rg || rec(r.tensor);
  }
  auto out = make_out<T>({n, cols}, rg);
  for (int i = 0; i < n; ++i)
    std::copy_n(rows[std::size_t(i)].tensor.data() + std::size_t(rows[std::size_t(i)].row) * cols,
                cols, out.data() + std::size_t(i) * cols);
  if (rg) {
    for (auto r : rows)
      if (r.tensor.requires_grad()) r.tensor.ensure_grad();
    active_tape<T>()->record([rows, out, cols]() mutable {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& r = rows[i];
        if (!r.tensor.requires_grad()) continue;
        T* dst = const_cast<TensorT<T>&>(r.tensor).grad() + std::size_t(r.row) * cols;
        const T* src = out.grad() + i * cols;
        for (int j = 0; j < cols; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// contiguous column slice [R, c0..c1) -> [R, c1-c0]
template <class T>
TensorT<T> slice_cols(TensorT<T> a, int c0, int c1) {
  if (a.ndim() != 2) throw ShapeError("slice_cols: need 2-d input");
  const int rows = a.dim(0), cols = a.dim(1);
  if (c0 < 0 || c1 > cols || c0 >= c1) throw ShapeError("slice_cols: bad range");
  const int w = c1 - c0;
  const bool rg = rec(a);
  auto out = make_out<T>({rows, w}, rg);
  for (int i = 0; i < rows; ++i)
    std::copy_n(a.data() + std::size_t(i) * cols + c0, w, out.data() + std::size_t(i) * w);
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out, c0, w, rows, cols]() mutable {
      for (int i = 0; i < rows; ++i) {
        T* dst = a.grad() + std::size_t(i) * cols + c0;
        const T* src = out.grad() + std::size_t(i) * w;
        for (int j = 0; j < w; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> concat_cols(const std::vector<TensorT<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int rows = parts[0].dim(0);
  int cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.dim(1);
    rg = rg || rec(p);
  }
  auto out = make_out<T>({rows, cols}, rg);
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    for (int i = 0; i < rows; ++i)
      std::copy_n(p.data() + std::size_t(i) * w, w, out.data() + std::size_t(i) * cols + off);
    off += w;
  }
  if (rg) {
    for (auto p : parts)
      if (p.requires_grad()) p.ensure_grad();
    active_tape<T>()->record([parts, out, rows, cols]() mutable {
      int o = 0;
      for (auto& p : parts) {
        const int w = p.dim(1);
        if (p.requires_grad()) {
          for (int i = 0; i < rows; ++i) {
            T* dst = const_cast<TensorT<T>&>(p).grad() + std::size_t(i) * w;
            const T* src = out.grad() + std::size_t(i) * cols + o;
            for (int j = 0; j < w; ++j) dst[j] += src[j];
          }
        }
        o += w;
      }
    });
  }
  return out;
}

// pick one element per (row, col) pair -> [n]
template <class T>
TensorT<T> gather_items(TensorT<T> a, std::vector<int> row_ids, std::vector<int> col_ids) {
  if (a.ndim() != 2) throw ShapeError("gather_items: need 2-d input");
  if (row_ids.size() != col_ids.size()) throw ShapeError("gather_items: index length mismatch");
  const int rows = a.dim(0), cols = a.dim(1);
  const int n = static_cast<int>(row_ids.size());
  for (int i = 0; i < n; ++i)
    if (row_ids[std::size_t(i)] < 0 || row_ids[std::size_t(i)] >= rows ||
        col_ids[std::size_t(i)] < 0 || col_ids[std::size_t(i)] >= cols)
      throw ShapeError("gather_items: index out of range");
  const bool rg = rec(a);
  auto out = make_out<T>({n}, rg);
  for (int i = 0; i < n; ++i)
    out.data()[i] = a.data()[std::size_t(row_ids[std::size_t(i)]) * cols + col_ids[std::size_t(i)]];
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record(
        [a, out, row_ids = std::move(row_ids), col_ids = std::move(col_ids), cols]() mutable {
          for (std::size_t i = 0; i < row_ids.size(); ++i)
            a.grad()[std::size_t(row_ids[i]) * cols + col_ids[i]] += out.grad()[i];
        });
  }
  return out;
}

template <class T>
TensorT<T> sum(TensorT<T> a) {
  const bool rg = rec(a);
  auto out = make_out<T>({1}, rg);
  T s = T(0);
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) s += a.data()[i];
  out.data()[0] = s;
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out]() mutable {
      const T g = out.grad()[0];
      const std::size_t nn = a.numel();
      for (std::size_t i = 0; i < nn; ++i) a.grad()[i] += g;
    });
  }
  return out;
}

template <class T>
TensorT<T> mean(TensorT<T> a) {
  return scale(sum(a), T(1) / T(a.numel()));
}

// [R,C] -> [R] row sums
template <class T>
TensorT<T> row_sums(TensorT<T> a) {
  if (a.ndim() != 2) throw ShapeError("row_sums: need 2-d input");
  const int rows = a.dim(0), cols = a.dim(1);
  const bool rg = rec(a);
  auto out = make_out<T>({rows}, rg);
  for (int i = 0; i < rows; ++i) {
    T s = T(0);
    for (int j = 0; j < cols; ++j) s += a.data()[std::size_t(i) * cols + j];
    out.data()[i] = s;
  }
  if (rg) {
    a.ensure_grad();
    active_tape<T>()->record([a, out, rows, cols]() mutable {
      for (int i = 0; i < rows; ++i) {
        const T g = out.grad()[i];
        for (int j = 0; j < cols; ++j) a.grad()[std::size_t(i) * cols + j] += g;
      }
    });
  }
  return out;
}

// mean cross-entropy of logits rows against target ids
template <class T>
TensorT<T> cross_entropy_mean(TensorT<T> logits, const std::vector<int>& targets) {
  if (logits.ndim() != 2 || static_cast<int>(targets.size()) != logits.dim(0))
    throw ShapeError("cross_entropy_mean: need [N,V] logits and N targets");
  auto ls = log_softmax_rows(logits);
  std::vector<int> rows(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) rows[i] = static_cast<int>(i);
  auto picked = gather_items(ls, rows, targets);
  return scale(sum(picked), T(-1) / T(targets.size()));
}

// mean squared error against a constant target
template <class T>
TensorT<T> mse_mean(TensorT<T> pred, TensorT<T> target) {
  check_same_shape(pred, target, "mse_mean");
  auto d = sub(pred, target);
  return scale(sum(mul(d, d)), T(1) / T(pred.numel()));
}

}  // namespace lantern::ops
