#pragma once

// Numeric kernels behind the autodiff layers.
//
// Two implementations of every kernel:
//   serial::   direct nested loops written straight from the layer formulas.
//              This is the reference the tests check the fast path against.
//   parallel:: im2col/GEMM formulations with OpenMP over independent output rows.
//              Each output element is reduced in a fixed order that does not depend
//              on the thread count, so results are reproducible run to run.
//
// Layouts are row-major. Sequences are [B,T,C]. GRU gate blocks are ordered
// (update z, reset r, candidate n) along the 3H axis.

#include <cstddef>
#include <span>

namespace s2h::kernels {

enum class Backend { Serial, Parallel };

void set_backend(Backend backend);
Backend backend();
const char* backend_name(Backend backend);

struct ConvDims {
  std::size_t batch, time, in_channels, width, filters;
};

struct GruDims {
  std::size_t batch, time, in_channels, hidden;
};

/// Forward state kept for the GRU backward pass; each buffer is [B,T,H].
struct GruCache {
  std::span<double> z, r, n, h_prev;
};

#define S2H_KERNEL_DECLS                                                                                   \
  /* C[M,N] += A[M,K] * B[K,N] */                                                                          \
  void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,              \
               const double* b, std::size_t ldb, double* c, std::size_t ldc);                              \
  /* C[M,N] += A[K,M]^T * B[K,N] */                                                                        \
  void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,              \
               const double* b, std::size_t ldb, double* c, std::size_t ldc);                              \
  /* C[M,N] += A[M,K] * B[N,K]^T */                                                                        \
  void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,              \
               const double* b, std::size_t ldb, double* c, std::size_t ldc);                              \
  /* out[B,T,F] = bias + same-padded convolution of in[B,T,C] with kernels[K,C,F] */                      \
  void conv1d_forward(const ConvDims& d, const double* in, const double* kernels, const double* bias,      \
                      double* out);                                                                        \
  /* accumulates into d_in, d_kernels, d_bias */                                                           \
  void conv1d_backward(const ConvDims& d, const double* in, const double* kernels, const double* d_out,    \
                       double* d_in, double* d_kernels, double* d_bias);                                   \
  /* out[B,T,H]; reverse=true walks t = T-1..0 and writes each state at its own t */                       \
  void gru_forward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,   \
                   const double* bias, double* out, const GruCache& cache);                                \
  void gru_backward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,  \
                    const GruCache& cache, const double* d_out, double* d_in, double* d_wx, double* d_uh,  \
                    double* d_bias);

namespace serial {
S2H_KERNEL_DECLS
}
namespace parallel {
S2H_KERNEL_DECLS
}

#undef S2H_KERNEL_DECLS

// Dispatch to the active backend.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);
void conv1d_forward(const ConvDims& d, const double* in, const double* kernels, const double* bias, double* out);
void conv1d_backward(const ConvDims& d, const double* in, const double* kernels, const double* d_out, double* d_in,
                     double* d_kernels, double* d_bias);
void gru_forward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,
                 const double* bias, double* out, const GruCache& cache);
void gru_backward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,
                  const GruCache& cache, const double* d_out, double* d_in, double* d_wx, double* d_uh,
                  double* d_bias);

}  // namespace s2h::kernels
