#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "medsuggest/kernels.hpp"

namespace medsuggest::kernels {

#ifdef MEDSUGGEST_HAVE_AVX2
const KernelTable& avx2_table_impl();
#endif

const char* backend_name(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "?";
}

bool avx2_available() {
#if defined(MEDSUGGEST_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

const KernelTable* avx2_table() {
#ifdef MEDSUGGEST_HAVE_AVX2
  if (avx2_available()) return &avx2_table_impl();
#endif
  return nullptr;
}

namespace {

const KernelTable* initial_table() {
  const char* env = std::getenv("MEDSUGGEST_KERNELS");
  const std::string choice = env ? env : "auto";
  if (choice == "scalar") return &scalar_table();
  if (choice == "avx2" && !avx2_available())
    throw std::runtime_error("MEDSUGGEST_KERNELS=avx2 but AVX2/FMA is not available");
  if (const auto* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

Backend active_backend() { return current().load()->backend; }

void set_backend(Backend backend) {
  if (backend == Backend::Scalar) {
    current().store(&scalar_table());
    return;
  }
  const auto* t = avx2_table();
  if (!t) throw std::runtime_error("AVX2 kernels are not available on this build or CPU");
  current().store(t);
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("kernels::dot: length mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("kernels::axpy: length mismatch");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace medsuggest::kernels
