// OpenMP kernels. Parallel loops only ever split independent output rows; every
// reduction runs in ascending index order inside one thread.

#include <algorithm>
#include <cmath>
#include <vector>

#include "s2h/kernels.hpp"

namespace s2h::kernels::parallel {

namespace {

constexpr std::size_t kParallelWork = 1 << 15;
constexpr std::size_t kRowBlock = 8;
constexpr std::size_t kDepthBlock = 256;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

long as_long(std::size_t v) { return static_cast<long>(v); }

void im2col(const ConvDims& d, const double* in, double* col) {
  const std::size_t kc = d.width * d.in_channels;
  const long pad = as_long(d.width / 2);
  const long time = as_long(d.time);
#pragma omp parallel for schedule(static) if (d.batch * d.time * kc > kParallelWork)
  for (long bl = 0; bl < as_long(d.batch); ++bl) {
    const auto b = static_cast<std::size_t>(bl);
    for (long t = 0; t < time; ++t) {
      double* dst = col + (b * d.time + static_cast<std::size_t>(t)) * kc;
      for (std::size_t k = 0; k < d.width; ++k) {
        const long src = t + as_long(k) - pad;
        double* seg = dst + k * d.in_channels;
        if (src < 0 || src >= time) {
          std::fill(seg, seg + d.in_channels, 0.0);
        } else {
          const double* from = in + (b * d.time + static_cast<std::size_t>(src)) * d.in_channels;
          std::copy(from, from + d.in_channels, seg);
        }
      }
    }
  }
}

void col2im_add(const ConvDims& d, const double* col, double* d_in) {
  const std::size_t kc = d.width * d.in_channels;
  const long pad = as_long(d.width / 2);
  const long time = as_long(d.time);
#pragma omp parallel for schedule(static) if (d.batch * d.time * kc > kParallelWork)
  for (long bl = 0; bl < as_long(d.batch); ++bl) {
    const auto b = static_cast<std::size_t>(bl);
    for (long t = 0; t < time; ++t) {
      const double* src_row = col + (b * d.time + static_cast<std::size_t>(t)) * kc;
      for (std::size_t k = 0; k < d.width; ++k) {
        const long src = t + as_long(k) - pad;
        if (src < 0 || src >= time) continue;
        double* dst = d_in + (b * d.time + static_cast<std::size_t>(src)) * d.in_channels;
        const double* seg = src_row + k * d.in_channels;
        for (std::size_t c = 0; c < d.in_channels; ++c) dst[c] += seg[c];
      }
    }
  }
}

void add_column_sums(std::size_t rows, std::size_t cols, const double* m, std::size_t ld, double* out) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (long jl = 0; jl < as_long(cols); ++jl) {
    const auto j = static_cast<std::size_t>(jl);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += m[i * ld + j];
    out[j] += acc;
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (long il = 0; il < as_long(m); ++il) {
    const auto i = static_cast<std::size_t>(il);
    double* __restrict crow = c + i * ldc;
    const double* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* __restrict brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  const std::size_t chunks = (m + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (long ch = 0; ch < as_long(chunks); ++ch) {
    const std::size_t i0 = static_cast<std::size_t>(ch) * kRowBlock;
    const std::size_t i1 = std::min(m, i0 + kRowBlock);
    for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
      const std::size_t p1 = std::min(k, p0 + kDepthBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        double* __restrict crow = c + i * ldc;
        for (std::size_t p = p0; p < p1; ++p) {
          const double av = a[p * lda + i];
          if (av == 0.0) continue;
          const double* __restrict brow = b + p * ldb;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  // B is a weight-sized operand in every caller; transposing it turns the dot products into
  // contiguous axpy updates.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * ldb + p];
  gemm_nn(m, n, k, a, lda, bt.data(), n, c, ldc);
}

void conv1d_forward(const ConvDims& d, const double* in, const double* kernels, const double* bias, double* out) {
  const std::size_t rows = d.batch * d.time;
  const std::size_t kc = d.width * d.in_channels;
  std::vector<double> col(rows * kc);
  im2col(d, in, col.data());
  for (std::size_t r = 0; r < rows; ++r) std::copy(bias, bias + d.filters, out + r * d.filters);
  gemm_nn(rows, d.filters, kc, col.data(), kc, kernels, d.filters, out, d.filters);
}

void conv1d_backward(const ConvDims& d, const double* in, const double* kernels, const double* d_out, double* d_in,
                     double* d_kernels, double* d_bias) {
  const std::size_t rows = d.batch * d.time;
  const std::size_t kc = d.width * d.in_channels;
  std::vector<double> col(rows * kc);
  im2col(d, in, col.data());
  gemm_tn(kc, d.filters, rows, col.data(), kc, d_out, d.filters, d_kernels, d.filters);
  add_column_sums(rows, d.filters, d_out, d.filters, d_bias);
  std::fill(col.begin(), col.end(), 0.0);
  gemm_nt(rows, kc, d.filters, d_out, d.filters, kernels, d.filters, col.data(), kc);
  col2im_add(d, col.data(), d_in);
}

void gru_forward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,
                 const double* bias, double* out, const GruCache& cache) {
  const std::size_t H = d.hidden, C = d.in_channels, G = 3 * H;
  const std::size_t rows = d.batch * d.time;
  // Input projections for every (b,t) at once.
  std::vector<double> proj(rows * G);
  for (std::size_t r = 0; r < rows; ++r) std::copy(bias, bias + G, proj.data() + r * G);
  gemm_nn(rows, G, C, in, C, wx, G, proj.data(), G);

#pragma omp parallel for schedule(static) if (rows * G * H > kParallelWork)
  for (long bl = 0; bl < as_long(d.batch); ++bl) {
    const auto b = static_cast<std::size_t>(bl);
    std::vector<double> h_buf(H, 0.0), a_buf(G), rh_buf(H);
    double* __restrict h = h_buf.data();
    double* __restrict a = a_buf.data();
    double* __restrict rh = rh_buf.data();
    for (std::size_t s = 0; s < d.time; ++s) {
      const std::size_t t = reverse ? d.time - 1 - s : s;
      const std::size_t row = b * d.time + t;
      std::copy(proj.data() + row * G, proj.data() + (row + 1) * G, a);
      for (std::size_t i = 0; i < H; ++i) {
        const double hi = h[i];
        const double* __restrict u = uh + i * G;
        for (std::size_t j = 0; j < 2 * H; ++j) a[j] += hi * u[j];
      }
      double* z = cache.z.data() + row * H;
      double* r = cache.r.data() + row * H;
      double* n = cache.n.data() + row * H;
      double* hp = cache.h_prev.data() + row * H;
      for (std::size_t j = 0; j < H; ++j) {
        z[j] = sigmoid(a[j]);
        r[j] = sigmoid(a[H + j]);
        rh[j] = r[j] * h[j];
      }
      for (std::size_t i = 0; i < H; ++i) {
        const double v = rh[i];
        const double* __restrict u = uh + i * G + 2 * H;
        for (std::size_t j = 0; j < H; ++j) a[2 * H + j] += v * u[j];
      }
      double* o = out + row * H;
      for (std::size_t j = 0; j < H; ++j) {
        n[j] = std::tanh(a[2 * H + j]);
        hp[j] = h[j];
        h[j] = (1.0 - z[j]) * h[j] + z[j] * n[j];
        o[j] = h[j];
      }
    }
  }
}

void gru_backward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,
                  const GruCache& cache, const double* d_out, double* d_in, double* d_wx, double* d_uh,
                  double* d_bias) {
  const std::size_t H = d.hidden, C = d.in_channels, G = 3 * H;
  const std::size_t rows = d.batch * d.time;
  // Gate pre-activation gradients, then every weight gradient as one GEMM.
  std::vector<double> da_all(rows * G);
  std::vector<double> rh_all(rows * H);
  // ut[j][i] = uh[i][j]
  std::vector<double> ut_buf(G * H);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < G; ++j) ut_buf[j * H + i] = uh[i * G + j];
  const double* ut = ut_buf.data();

#pragma omp parallel for schedule(static) if (rows * G * H > kParallelWork)
  for (long bl = 0; bl < as_long(d.batch); ++bl) {
    const auto b = static_cast<std::size_t>(bl);
    std::vector<double> dh_buf(H, 0.0), dh_prev_buf(H), drh_buf(H), acc_buf(H);
    double* __restrict dh = dh_buf.data();
    double* __restrict dh_prev = dh_prev_buf.data();
    double* __restrict drh = drh_buf.data();
    double* __restrict acc = acc_buf.data();
    for (std::size_t s = d.time; s-- > 0;) {
      const std::size_t t = reverse ? d.time - 1 - s : s;
      const std::size_t row = b * d.time + t;
      const double* z = cache.z.data() + row * H;
      const double* r = cache.r.data() + row * H;
      const double* n = cache.n.data() + row * H;
      const double* hp = cache.h_prev.data() + row * H;
      double* __restrict da = da_all.data() + row * G;
      double* __restrict rh = rh_all.data() + row * H;
      for (std::size_t j = 0; j < H; ++j) {
        const double g = dh[j] + d_out[row * H + j];
        da[j] = g * (n[j] - hp[j]) * z[j] * (1.0 - z[j]);
        da[2 * H + j] = g * z[j] * (1.0 - n[j] * n[j]);
        dh_prev[j] = g * (1.0 - z[j]);
        rh[j] = r[j] * hp[j];
      }
      std::fill(drh, drh + H, 0.0);
      for (std::size_t j = 0; j < H; ++j) {
        const double v = da[2 * H + j];
        const double* __restrict u = ut + (2 * H + j) * H;
        for (std::size_t i = 0; i < H; ++i) drh[i] += v * u[i];
      }
      for (std::size_t i = 0; i < H; ++i) {
        da[H + i] = drh[i] * hp[i] * r[i] * (1.0 - r[i]);
        dh_prev[i] += drh[i] * r[i];
      }
      std::fill(acc, acc + H, 0.0);
      for (std::size_t j = 0; j < 2 * H; ++j) {
        const double v = da[j];
        const double* __restrict u = ut + j * H;
        for (std::size_t i = 0; i < H; ++i) acc[i] += v * u[i];
      }
      for (std::size_t i = 0; i < H; ++i) dh_prev[i] += acc[i];
      std::swap(dh, dh_prev);
    }
  }

  gemm_tn(H, 2 * H, rows, cache.h_prev.data(), H, da_all.data(), G, d_uh, G);
  gemm_tn(H, H, rows, rh_all.data(), H, da_all.data() + 2 * H, G, d_uh + 2 * H, G);
  gemm_tn(C, G, rows, in, C, da_all.data(), G, d_wx, G);
  add_column_sums(rows, G, da_all.data(), G, d_bias);
  gemm_nt(rows, C, G, da_all.data(), G, wx, G, d_in, C);
}

}  // namespace s2h::kernels::parallel
