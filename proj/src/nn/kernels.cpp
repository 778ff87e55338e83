#include "s2h/kernels.hpp"

#include <atomic>

namespace s2h::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};
bool use_serial() { return g_backend.load(std::memory_order_relaxed) == Backend::Serial; }
}  // namespace

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() { return g_backend.load(std::memory_order_relaxed); }

const char* backend_name(Backend b) { return b == Backend::Serial ? "serial" : "parallel"; }

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  use_serial() ? serial::gemm_nn(m, n, k, a, lda, b, ldb, c, ldc) : parallel::gemm_nn(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  use_serial() ? serial::gemm_tn(m, n, k, a, lda, b, ldb, c, ldc) : parallel::gemm_tn(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  use_serial() ? serial::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc) : parallel::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc);
}

void conv1d_forward(const ConvDims& d, const double* in, const double* kernels, const double* bias, double* out) {
  use_serial() ? serial::conv1d_forward(d, in, kernels, bias, out) : parallel::conv1d_forward(d, in, kernels, bias, out);
}

void conv1d_backward(const ConvDims& d, const double* in, const double* kernels, const double* d_out, double* d_in,
                     double* d_kernels, double* d_bias) {
  if (use_serial())
    serial::conv1d_backward(d, in, kernels, d_out, d_in, d_kernels, d_bias);
  else
    parallel::conv1d_backward(d, in, kernels, d_out, d_in, d_kernels, d_bias);
}

void gru_forward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,
                 const double* bias, double* out, const GruCache& cache) {
  if (use_serial())
    serial::gru_forward(d, reverse, in, wx, uh, bias, out, cache);
  else
    parallel::gru_forward(d, reverse, in, wx, uh, bias, out, cache);
}

void gru_backward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,
                  const GruCache& cache, const double* d_out, double* d_in, double* d_wx, double* d_uh,
                  double* d_bias) {
  if (use_serial())
    serial::gru_backward(d, reverse, in, wx, uh, cache, d_out, d_in, d_wx, d_uh, d_bias);
  else
    parallel::gru_backward(d, reverse, in, wx, uh, cache, d_out, d_in, d_wx, d_uh, d_bias);
}

}  // namespace s2h::kernels
