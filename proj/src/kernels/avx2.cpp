// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>

#include "medsuggest/kernels.hpp"

namespace medsuggest::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void affine_avx2(const double* w, const double* b, const double* x, double* y, std::size_t rows,
                 std::size_t cols) {
  std::size_t r = 0;
  // Four rows share each load of x.
  for (; r + 4 <= rows; r += 4) {
    const double* w0 = w + r * cols;
    const double* w1 = w0 + cols;
    const double* w2 = w1 + cols;
    const double* w3 = w2 + cols;
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= cols; i += 4) {
      const __m256d vx = _mm256_loadu_pd(x + i);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w0 + i), vx, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w1 + i), vx, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(w2 + i), vx, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(w3 + i), vx, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; i < cols; ++i) {
      s0 += w0[i] * x[i];
      s1 += w1[i] * x[i];
      s2 += w2[i] * x[i];
      s3 += w3[i] * x[i];
    }
    y[r] = b[r] + s0;
    y[r + 1] = b[r + 1] + s1;
    y[r + 2] = b[r + 2] + s2;
    y[r + 3] = b[r + 3] + s3;
  }
  for (; r < rows; ++r) y[r] = b[r] + dot_avx2(w + r * cols, x, cols);
}

void affine_backward_input_avx2(const double* w, const double* dy, double* dx, std::size_t rows,
                                std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    if (dy[r] != 0.0) axpy_avx2(dy[r], w + r * cols, dx, cols);
}

void accumulate_outer_avx2(const double* dy, const double* x, double* gw, double* gb, std::size_t rows,
                           std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    gb[r] += dy[r];
    if (dy[r] != 0.0) axpy_avx2(dy[r], x, gw + r * cols, cols);
  }
}

void adam_avx2(double* params, const double* grads, double* m, double* v, std::size_t n, const AdamCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d one_b1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d one_b2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d inv_bc1 = _mm256_set1_pd(1.0 / c.bias_correction1);
  const __m256d inv_bc2 = _mm256_set1_pd(1.0 / c.bias_correction2);
  const __m256d eps = _mm256_set1_pd(c.epsilon);
  const __m256d step = _mm256_set1_pd(c.direction * c.learning_rate);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grads + i);
    const __m256d mi = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(one_b1, g));
    const __m256d vi = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i), _mm256_mul_pd(one_b2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, inv_bc2)), eps);
    const __m256d upd = _mm256_div_pd(_mm256_mul_pd(mi, inv_bc1), denom);
    _mm256_storeu_pd(params + i, _mm256_fmadd_pd(step, upd, _mm256_loadu_pd(params + i)));
  }
  for (; i < n; ++i) {
    const double g = grads[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    params[i] += c.direction * c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

const KernelTable& avx2_table_impl() {
  static const KernelTable table{Backend::Avx2,         dot_avx2,
                                 axpy_avx2,             affine_avx2,
                                 affine_backward_input_avx2, accumulate_outer_avx2,
                                 adam_avx2};
  return table;
}

}  // namespace medsuggest::kernels
