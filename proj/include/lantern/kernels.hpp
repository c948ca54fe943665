#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

// Dense kernels used by the tensor layer. Every kernel exists twice: a plain
// serial version under kernels::serial and an OpenMP one under kernels::omp.
// The omp versions partition work so that each output element is written by
// exactly one thread with an unchanged inner accumulation order, so serial
// and parallel results are bit-identical for any thread count. The unprefixed
// dispatchers pick one at runtime.

namespace lantern::kernels {

// Runtime switch. Defaults to parallel when OpenMP is compiled in and more
// than one thread is available; LANTERN_DETERMINISTIC=1 forces serial.
bool parallel_enabled();
void set_parallel(bool on);
int thread_count();

// Work threshold below which the dispatchers stay serial.
inline constexpr std::size_t kParallelGrain = 1u << 15;

namespace serial {

// c[m,n] = a[m,k] . b[n,k]^T   (rows of a dotted with rows of b)
template <class T>
void matmul_nt(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<std::size_t>(i) * k;
    T* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<std::size_t>(j) * k;
      T s = T(0);
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
}

// accumulating variant of matmul_nt
template <class T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<std::size_t>(i) * k;
    T* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<std::size_t>(j) * k;
      T s = T(0);
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// c[m,n] += a[m,k] . b[k,n]    (axpy over rows of b; accumulates into c)
template <class T>
void matmul_nn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<std::size_t>(i) * k;
    T* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[n,k] += a[m,n]^T . b[m,k]  (for weight gradients; accumulates into c)
template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int j = 0; j < n; ++j) {
    T* cj = c + static_cast<std::size_t>(j) * k;
    for (int i = 0; i < m; ++i) {
      const T aij = a[static_cast<std::size_t>(i) * n + j];
      const T* bi = b + static_cast<std::size_t>(i) * k;
      for (int p = 0; p < k; ++p) cj[p] += aij * bi[p];
    }
  }
}

// numerically stabilized row softmax; -inf inputs become exact zeros
template <class T>
void softmax_rows(const T* x, T* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<std::size_t>(i) * cols;
    T* yi = y + static_cast<std::size_t>(i) * cols;
    T mx = xi[0];
    for (int j = 1; j < cols; ++j) mx = xi[j] > mx ? xi[j] : mx;
    T sum = T(0);
    for (int j = 0; j < cols; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < cols; ++j) yi[j] *= inv;
  }
}

// dx[i,:] = y[i,:] * (dy[i,:] - dot(dy[i,:], y[i,:])); accumulates into dx
template <class T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T* yi = y + static_cast<std::size_t>(i) * cols;
    const T* dyi = dy + static_cast<std::size_t>(i) * cols;
    T* dxi = dx + static_cast<std::size_t>(i) * cols;
    T dot = T(0);
    for (int j = 0; j < cols; ++j) dot += dyi[j] * yi[j];
    for (int j = 0; j < cols; ++j) dxi[j] += yi[j] * (dyi[j] - dot);
  }
}

template <class T>
void log_softmax_rows(const T* x, T* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<std::size_t>(i) * cols;
    T* yi = y + static_cast<std::size_t>(i) * cols;
    T mx = xi[0];
    for (int j = 1; j < cols; ++j) mx = xi[j] > mx ? xi[j] : mx;
    T sum = T(0);
    for (int j = 0; j < cols; ++j) sum += std::exp(xi[j] - mx);
    const T lse = mx + std::log(sum);
    for (int j = 0; j < cols; ++j) yi[j] = xi[j] - lse;
  }
}

// dx[i,:] += dy[i,:] - exp(y[i,:]) * sum(dy[i,:])
template <class T>
void log_softmax_rows_backward(const T* y, const T* dy, T* dx, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T* yi = y + static_cast<std::size_t>(i) * cols;
    const T* dyi = dy + static_cast<std::size_t>(i) * cols;
    T* dxi = dx + static_cast<std::size_t>(i) * cols;
    T sum = T(0);
    for (int j = 0; j < cols; ++j) sum += dyi[j];
    for (int j = 0; j < cols; ++j) dxi[j] += dyi[j] - std::exp(yi[j]) * sum;
  }
}

// y = gamma * (x - mean) * rstd + beta, per row; saves mean/rstd for backward
template <class T>
void layernorm_rows(const T* x, const T* gamma, const T* beta, T* y, T* mean,
                    T* rstd, int rows, int cols, T eps) {
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<std::size_t>(i) * cols;
    T* yi = y + static_cast<std::size_t>(i) * cols;
    T mu = T(0);
    for (int j = 0; j < cols; ++j) mu += xi[j];
    mu /= T(cols);
    T var = T(0);
    for (int j = 0; j < cols; ++j) {
      const T d = xi[j] - mu;
      var += d * d;
    }
    var /= T(cols);
    const T rs = T(1) / std::sqrt(var + eps);
    mean[i] = mu;
    rstd[i] = rs;
    for (int j = 0; j < cols; ++j) yi[j] = gamma[j] * ((xi[j] - mu) * rs) + beta[j];
  }
}

template <class T>
void layernorm_rows_backward(const T* x, const T* gamma, const T* mean,
                             const T* rstd, const T* dy, T* dx, T* dgamma,
                             T* dbeta, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<std::size_t>(i) * cols;
    const T* dyi = dy + static_cast<std::size_t>(i) * cols;
    T* dxi = dx + static_cast<std::size_t>(i) * cols;
    const T mu = mean[i];
    const T rs = rstd[i];
    T sum_g = T(0), sum_gx = T(0);
    for (int j = 0; j < cols; ++j) {
      const T xhat = (xi[j] - mu) * rs;
      const T g = dyi[j] * gamma[j];
      sum_g += g;
      sum_gx += g * xhat;
    }
    const T inv_n = T(1) / T(cols);
    for (int j = 0; j < cols; ++j) {
      const T xhat = (xi[j] - mu) * rs;
      const T g = dyi[j] * gamma[j];
      dxi[j] += rs * (g - inv_n * sum_g - xhat * inv_n * sum_gx);
    }
  }
  // parameter gradients reduced serially in row order
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<std::size_t>(i) * cols;
    const T* dyi = dy + static_cast<std::size_t>(i) * cols;
    const T mu = mean[i];
    const T rs = rstd[i];
    for (int j = 0; j < cols; ++j) {
      dgamma[j] += dyi[j] * ((xi[j] - mu) * rs);
      dbeta[j] += dyi[j];
    }
  }
}

// tanh-approximation GELU
template <class T>
inline T gelu_one(T x) {
  const T c = T(0.7978845608028654);  // sqrt(2/pi)
  const T u = c * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <class T>
inline T gelu_grad_one(T x) {
  const T c = T(0.7978845608028654);
  const T x3 = x * x * x;
  const T u = c * (x + T(0.044715) * x3);
  const T t = std::tanh(u);
  const T du = c * (T(1) + T(0.134145) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <class T>
void gelu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_one(x[i]);
}

// fused AdamW update with bias correction and decoupled weight decay
template <class T>
void adamw_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1,
                  T beta2, T eps, T weight_decay, long step) {
  const T bc1 = T(1) - std::pow(beta1, T(step));
  const T bc2 = T(1) - std::pow(beta2, T(step));
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
  }
}

}  // namespace serial

namespace omp {

template <class T>
void matmul_nt(const T* a, const T* b, T* c, int m, int n, int k);
template <class T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int n, int k);
template <class T>
void matmul_nn_acc(const T* a, const T* b, T* c, int m, int n, int k);
template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int n, int k);
template <class T>
void softmax_rows(const T* x, T* y, int rows, int cols);
template <class T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, int rows, int cols);
template <class T>
void log_softmax_rows(const T* x, T* y, int rows, int cols);
template <class T>
void log_softmax_rows_backward(const T* y, const T* dy, T* dx, int rows, int cols);
template <class T>
void layernorm_rows(const T* x, const T* gamma, const T* beta, T* y, T* mean,
                    T* rstd, int rows, int cols, T eps);
template <class T>
void layernorm_rows_backward(const T* x, const T* gamma, const T* mean,
                             const T* rstd, const T* dy, T* dx, T* dgamma,
                             T* dbeta, int rows, int cols);
template <class T>
void gelu(const T* x, T* y, std::size_t n);
template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n);
template <class T>
void adamw_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1,
                  T beta2, T eps, T weight_decay, long step);

}  // namespace omp

// ---- dispatchers ----

template <class T>
void matmul_nt(const T* a, const T* b, T* c, int m, int n, int k) {
  const std::size_t work = std::size_t(m) * n * k;
  if (parallel_enabled() && work >= kParallelGrain)
    omp::matmul_nt(a, b, c, m, n, k);
  else
    serial::matmul_nt(a, b, c, m, n, k);
}

template <class T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int n, int k) {
  const std::size_t work = std::size_t(m) * n * k;
  if (parallel_enabled() && work >= kParallelGrain)
    omp::matmul_nt_acc(a, b, c, m, n, k);
  else
    serial::matmul_nt_acc(a, b, c, m, n, k);
}

template <class T>
void matmul_nn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
  const std::size_t work = std::size_t(m) * n * k;
  if (parallel_enabled() && work >= kParallelGrain)
    omp::matmul_nn_acc(a, b, c, m, n, k);
  else
    serial::matmul_nn_acc(a, b, c, m, n, k);
}

template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
  const std::size_t work = std::size_t(m) * n * k;
  if (parallel_enabled() && work >= kParallelGrain)
    omp::matmul_tn_acc(a, b, c, m, n, k);
  else
    serial::matmul_tn_acc(a, b, c, m, n, k);
}

template <class T>
void softmax_rows(const T* x, T* y, int rows, int cols) {
  if (parallel_enabled() && std::size_t(rows) * cols >= kParallelGrain)
    omp::softmax_rows(x, y, rows, cols);
  else
    serial::softmax_rows(x, y, rows, cols);
}

template <class T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, int rows, int cols) {
  if (parallel_enabled() && std::size_t(rows) * cols >= kParallelGrain)
    omp::softmax_rows_backward(y, dy, dx, rows, cols);
  else
    serial::softmax_rows_backward(y, dy, dx, rows, cols);
}

template <class T>
void log_softmax_rows(const T* x, T* y, int rows, int cols) {
  if (parallel_enabled() && std::size_t(rows) * cols >= kParallelGrain)
    omp::log_softmax_rows(x, y, rows, cols);
  else
    serial::log_softmax_rows(x, y, rows, cols);
}

template <class T>
void log_softmax_rows_backward(const T* y, const T* dy, T* dx, int rows, int cols) {
  if (parallel_enabled() && std::size_t(rows) * cols >= kParallelGrain)
    omp::log_softmax_rows_backward(y, dy, dx, rows, cols);
  else
    serial::log_softmax_rows_backward(y, dy, dx, rows, cols);
}

template <class T>
void layernorm_rows(const T* x, const T* gamma, const T* beta, T* y, T* mean,
                    T* rstd, int rows, int cols, T eps) {
  if (parallel_enabled() && std::size_t(rows) * cols >= kParallelGrain)
    omp::layernorm_rows(x, gamma, beta, y, mean, rstd, rows, cols, eps);
  else
    serial::layernorm_rows(x, gamma, beta, y, mean, rstd, rows, cols, eps);
}

template <class T>
void layernorm_rows_backward(const T* x, const T* gamma, const T* mean,
                             const T* rstd, const T* dy, T* dx, T* dgamma,
                             T* dbeta, int rows, int cols) {
  if (parallel_enabled() && std::size_t(rows) * cols >= kParallelGrain)
    omp::layernorm_rows_backward(x, gamma, mean, rstd, dy, dx, dgamma, dbeta, rows, cols);
  else
    serial::layernorm_rows_backward(x, gamma, mean, rstd, dy, dx, dgamma, dbeta, rows, cols);
}

template <class T>
void gelu(const T* x, T* y, std::size_t n) {
  if (parallel_enabled() && n >= kParallelGrain)
    omp::gelu(x, y, n);
  else
    serial::gelu(x, y, n);
}

template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  if (parallel_enabled() && n >= kParallelGrain)
    omp::gelu_backward(x, dy, dx, n);
  else
    serial::gelu_backward(x, dy, dx, n);
}

template <class T>
void adamw_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1,
                  T beta2, T eps, T weight_decay, long step) {
  if (parallel_enabled() && n >= kParallelGrain)
    omp::adamw_update(p, g, m, v, n, lr, beta1, beta2, eps, weight_decay, step);
  else
    serial::adamw_update(p, g, m, v, n, lr, beta1, beta2, eps, weight_decay, step);
}

}  // namespace lantern::kernels
