// Reference kernels: direct loops, one output element at a time.

#include <cmath>
#include <vector>

#include "s2h/kernels.hpp"

namespace s2h::kernels::serial {

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * lda + p] * b[p * ldb + j];
      c[i * ldc + j] += acc;
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * lda + i] * b[p * ldb + j];
      c[i * ldc + j] += acc;
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * lda + p] * b[j * ldb + p];
      c[i * ldc + j] += acc;
    }
}

void conv1d_forward(const ConvDims& d, const double* in, const double* kernels, const double* bias, double* out) {
  const auto pad = static_cast<long>(d.width / 2);
  const auto time = static_cast<long>(d.time);
  for (std::size_t b = 0; b < d.batch; ++b)
    for (long t = 0; t < time; ++t)
      for (std::size_t f = 0; f < d.filters; ++f) {
        double acc = bias[f];
        for (std::size_t k = 0; k < d.width; ++k) {
          const long src = t + static_cast<long>(k) - pad;
          if (src < 0 || src >= time) continue;
          for (std::size_t c = 0; c < d.in_channels; ++c)
            acc += in[(b * d.time + src) * d.in_channels + c] * kernels[(k * d.in_channels + c) * d.filters + f];
        }
        out[(b * d.time + t) * d.filters + f] = acc;
      }
}

void conv1d_backward(const ConvDims& d, const double* in, const double* kernels, const double* d_out, double* d_in,
                     double* d_kernels, double* d_bias) {
  const auto pad = static_cast<long>(d.width / 2);
  const auto time = static_cast<long>(d.time);
  for (std::size_t b = 0; b < d.batch; ++b)
    for (long t = 0; t < time; ++t)
      for (std::size_t f = 0; f < d.filters; ++f) {
        const double g = d_out[(b * d.time + t) * d.filters + f];
        d_bias[f] += g;
        for (std::size_t k = 0; k < d.width; ++k) {
          const long src = t + static_cast<long>(k) - pad;
          if (src < 0 || src >= time) continue;
          for (std::size_t c = 0; c < d.in_channels; ++c) {
            const std::size_t ki = (k * d.in_channels + c) * d.filters + f;
            const std::size_t xi = (b * d.time + src) * d.in_channels + c;
            d_kernels[ki] += in[xi] * g;
            d_in[xi] += kernels[ki] * g;
          }
        }
      }
}

void gru_forward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,
                 const double* bias, double* out, const GruCache& cache) {
  const std::size_t H = d.hidden, C = d.in_channels, G = 3 * H;
  std::vector<double> h(H), z(H), r(H);
  for (std::size_t b = 0; b < d.batch; ++b) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t s = 0; s < d.time; ++s) {
      const std::size_t t = reverse ? d.time - 1 - s : s;
      const std::size_t row = b * d.time + t;
      const double* x = in + row * C;
      for (std::size_t j = 0; j < H; ++j) {
        double az = bias[j], ar = bias[H + j];
        for (std::size_t c = 0; c < C; ++c) {
          az += x[c] * wx[c * G + j];
          ar += x[c] * wx[c * G + H + j];
        }
        for (std::size_t i = 0; i < H; ++i) {
          az += h[i] * uh[i * G + j];
          ar += h[i] * uh[i * G + H + j];
        }
        z[j] = sigmoid(az);
        r[j] = sigmoid(ar);
      }
      for (std::size_t j = 0; j < H; ++j) {
        double an = bias[2 * H + j];
        for (std::size_t c = 0; c < C; ++c) an += x[c] * wx[c * G + 2 * H + j];
        for (std::size_t i = 0; i < H; ++i) an += r[i] * h[i] * uh[i * G + 2 * H + j];
        const double n = std::tanh(an);
        cache.z[row * H + j] = z[j];
        cache.r[row * H + j] = r[j];
        cache.n[row * H + j] = n;
        cache.h_prev[row * H + j] = h[j];
      }
      for (std::size_t j = 0; j < H; ++j) {
        const double hp = cache.h_prev[row * H + j];
        h[j] = (1.0 - z[j]) * hp + z[j] * cache.n[row * H + j];
        out[row * H + j] = h[j];
      }
    }
  }
}

void gru_backward(const GruDims& d, bool reverse, const double* in, const double* wx, const double* uh,
                  const GruCache& cache, const double* d_out, double* d_in, double* d_wx, double* d_uh,
                  double* d_bias) {
  const std::size_t H = d.hidden, C = d.in_channels, G = 3 * H;
  std::vector<double> dh(H), dh_prev(H), da(G), drh(H);
  for (std::size_t b = 0; b < d.batch; ++b) {
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t s = d.time; s-- > 0;) {
      const std::size_t t = reverse ? d.time - 1 - s : s;
      const std::size_t row = b * d.time + t;
      const double* z = cache.z.data() + row * H;
      const double* r = cache.r.data() + row * H;
      const double* n = cache.n.data() + row * H;
      const double* hp = cache.h_prev.data() + row * H;
      for (std::size_t j = 0; j < H; ++j) {
        const double g = dh[j] + d_out[row * H + j];
        const double dn = g * z[j];
        const double dz = g * (n[j] - hp[j]);
        dh_prev[j] = g * (1.0 - z[j]);
        da[j] = dz * z[j] * (1.0 - z[j]);
        da[2 * H + j] = dn * (1.0 - n[j] * n[j]);
      }
      for (std::size_t i = 0; i < H; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < H; ++j) acc += da[2 * H + j] * uh[i * G + 2 * H + j];
        drh[i] = acc;
        const double dr = acc * hp[i];
        da[H + i] = dr * r[i] * (1.0 - r[i]);
        dh_prev[i] += acc * r[i];
      }
      for (std::size_t i = 0; i < H; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < H; ++j) acc += da[j] * uh[i * G + j] + da[H + j] * uh[i * G + H + j];
        dh_prev[i] += acc;
        for (std::size_t j = 0; j < H; ++j) {
          d_uh[i * G + j] += hp[i] * da[j];
          d_uh[i * G + H + j] += hp[i] * da[H + j];
          d_uh[i * G + 2 * H + j] += r[i] * hp[i] * da[2 * H + j];
        }
      }
      const double* x = in + row * C;
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t g = 0; g < G; ++g) {
          d_wx[c * G + g] += x[c] * da[g];
          acc += wx[c * G + g] * da[g];
        }
        d_in[row * C + c] += acc;
      }
      for (std::size_t g = 0; g < G; ++g) d_bias[g] += da[g];
      dh.swap(dh_prev);
    }
  }
}

}  // namespace s2h::kernels::serial
