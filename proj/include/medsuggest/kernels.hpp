#pragma once

// Dense double-precision kernels behind the policy network and optimizer.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2/FMA variant. The variant is chosen once at startup from CPU support
// and can be overridden with MEDSUGGEST_KERNELS=scalar|avx2|auto or with
// set_backend(). Variants agree to rounding, not bitwise: results are
// bit-reproducible only for a fixed backend.

#include <cstddef>
#include <span>

namespace medsuggest::kernels {

enum class Backend { Scalar, Avx2 };
const char* backend_name(Backend backend);

struct AdamCoeffs {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double bias_correction1 = 1.0;  // 1 - beta1^t
  double bias_correction2 = 1.0;  // 1 - beta2^t
  double direction = 1.0;         // +1 ascends the gradient, -1 descends
};

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// y = W x + b with W row-major rows x cols.
  void (*affine)(const double* w, const double* b, const double* x, double* y, std::size_t rows,
                 std::size_t cols);
  /// dx += W^T dy
  void (*affine_backward_input)(const double* w, const double* dy, double* dx, std::size_t rows,
                                std::size_t cols);
  /// gw += dy x^T, gb += dy
  void (*accumulate_outer)(const double* dy, const double* x, double* gw, double* gb, std::size_t rows,
                           std::size_t cols);
  /// In-place bias-corrected Adam step over n parameters.
  void (*adam)(double* params, const double* grads, double* m, double* v, std::size_t n, const AdamCoeffs& c);
};

const KernelTable& scalar_table();
/// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

bool avx2_available();
Backend active_backend();
/// Throws std::runtime_error if the backend is unavailable.
void set_backend(Backend backend);
const KernelTable& active();

/// RAII backend override for tests.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : previous_(active_backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace medsuggest::kernels
