#include "lantern/kernels.hpp"

#include <cstdlib>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lantern::kernels {

namespace {

bool initial_parallel() {
  const char* det = std::getenv("LANTERN_DETERMINISTIC");
  if (det && std::strcmp(det, "0") != 0) return false;
#ifdef _OPENMP
  return omp_get_max_threads() > 1;
#else
  return false;
#endif
}

bool g_parallel = initial_parallel();

}  // namespace

bool parallel_enabled() { return g_parallel; }
void set_parallel(bool on) {
#ifdef _OPENMP
  g_parallel = on;
#else
  g_parallel = false;
  (void)on;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace omp {

template <class T>
void matmul_nt(const T* a, const T* b, T* c, int m, int n, int k) {
#pragma omp parallel for schedule(static)
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

template <class T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int n, int k) {
#pragma omp parallel for schedule(static)
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

template <class T>
void matmul_nn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
#pragma omp parallel for schedule(static)
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

template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    T* cj = c + static_cast<std::size_t>(j) * k;
    for (int i = 0; i < m; ++i) {
      const T aij = a[static_cast<std::size_t>(i) * n + j];
      const T* bi = b + static_cast<std::size_t>(i) * k;
      for (int p = 0; p < k; ++p) cj[p] += aij * bi[p];
    }
  }
}

template <class T>
void softmax_rows(const T* x, T* y, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i)
    serial::softmax_rows(x + static_cast<std::size_t>(i) * cols,
                         y + static_cast<std::size_t>(i) * cols, 1, cols);
}

template <class T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i)
    serial::softmax_rows_backward(y + static_cast<std::size_t>(i) * cols,
                                  dy + static_cast<std::size_t>(i) * cols,
                                  dx + static_cast<std::size_t>(i) * cols, 1, cols);
}

template <class T>
void log_softmax_rows(const T* x, T* y, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i)
    serial::log_softmax_rows(x + static_cast<std::size_t>(i) * cols,
                             y + static_cast<std::size_t>(i) * cols, 1, cols);
}

template <class T>
void log_softmax_rows_backward(const T* y, const T* dy, T* dx, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i)
    serial::log_softmax_rows_backward(y + static_cast<std::size_t>(i) * cols,
                                      dy + static_cast<std::size_t>(i) * cols,
                                      dx + static_cast<std::size_t>(i) * cols, 1, cols);
}

template <class T>
void layernorm_rows(const T* x, const T* gamma, const T* beta, T* y, T* mean,
                    T* rstd, int rows, int cols, T eps) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i)
    serial::layernorm_rows(x + static_cast<std::size_t>(i) * cols, gamma, beta,
                           y + static_cast<std::size_t>(i) * cols, mean + i,
                           rstd + i, 1, cols, eps);
}

template <class T>
void layernorm_rows_backward(const T* x, const T* gamma, const T* mean,
                             const T* rstd, const T* dy, T* dx, T* dgamma,
                             T* dbeta, int rows, int cols) {
  // dx rows are independent; dgamma/dbeta reductions stay serial in row order
#pragma omp parallel for schedule(static)
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

template <class T>
void gelu(const T* x, T* y, std::size_t n) {
  const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < nn; ++i) y[i] = serial::gelu_one(x[i]);
}

template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < nn; ++i) dx[i] += dy[i] * serial::gelu_grad_one(x[i]);
}

template <class T>
void adamw_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1,
                  T beta2, T eps, T weight_decay, long step) {
  const T bc1 = T(1) - std::pow(beta1, T(step));
  const T bc2 = T(1) - std::pow(beta2, T(step));
  const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < nn; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
  }
}

#define LANTERN_INSTANTIATE_KERNELS(T)                                          \
  template void matmul_nt<T>(const T*, const T*, T*, int, int, int);            \
  template void matmul_nt_acc<T>(const T*, const T*, T*, int, int, int);        \
  template void matmul_nn_acc<T>(const T*, const T*, T*, int, int, int);        \
  template void matmul_tn_acc<T>(const T*, const T*, T*, int, int, int);        \
  template void softmax_rows<T>(const T*, T*, int, int);                        \
  template void softmax_rows_backward<T>(const T*, const T*, T*, int, int);     \
  template void log_softmax_rows<T>(const T*, T*, int, int);                    \
  template void log_softmax_rows_backward<T>(const T*, const T*, T*, int, int); \
  template void layernorm_rows<T>(const T*, const T*, const T*, T*, T*, T*,     \
                                  int, int, T);                                 \
  template void layernorm_rows_backward<T>(const T*, const T*, const T*,        \
                                           const T*, const T*, T*, T*, T*,      \
                                           int, int);                           \
  template void gelu<T>(const T*, T*, std::size_t);                             \
  template void gelu_backward<T>(const T*, const T*, T*, std::size_t);          \
  template void adamw_update<T>(T*, const T*, T*, T*, std::size_t, T, T, T, T,  \
                                T, long);

LANTERN_INSTANTIATE_KERNELS(float)
LANTERN_INSTANTIATE_KERNELS(double)

#undef LANTERN_INSTANTIATE_KERNELS

}  // namespace omp

}  // namespace lantern::kernels
