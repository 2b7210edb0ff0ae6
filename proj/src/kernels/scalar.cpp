#include <cmath>

#include "medsuggest/kernels.hpp"

namespace medsuggest::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void affine_scalar(const double* w, const double* b, const double* x, double* y, std::size_t rows,
                   std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = b[r] + dot_scalar(w + r * cols, x, cols);
}

void affine_backward_input_scalar(const double* w, const double* dy, double* dx, std::size_t rows,
                                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    if (dy[r] != 0.0) axpy_scalar(dy[r], w + r * cols, dx, cols);
}

void accumulate_outer_scalar(const double* dy, const double* x, double* gw, double* gb, std::size_t rows,
                             std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    gb[r] += dy[r];
    if (dy[r] != 0.0) axpy_scalar(dy[r], x, gw + r * cols, cols);
  }
}

void adam_scalar(double* params, const double* grads, double* m, double* v, std::size_t n, const AdamCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    params[i] += c.direction * c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Backend::Scalar,         dot_scalar,
                                 axpy_scalar,             affine_scalar,
                                 affine_backward_input_scalar, accumulate_outer_scalar,
                                 adam_scalar};
  return table;
}

}  // namespace medsuggest::kernels
