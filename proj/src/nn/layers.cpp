#include "s2h/layers.hpp"

#include <algorithm>
#include <memory>

#include "s2h/error.hpp"
#include "s2h/kernels.hpp"

namespace s2h {

namespace {

void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
}

void expect_extent(std::size_t got, std::size_t want, const std::string& axis) {
  if (got != want)
    throw DimensionError(axis + " is " + std::to_string(got) + ", expected " + std::to_string(want));
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  auto& d = dst->values();
  const auto& s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var conv1d(Tape& tape, Var input, Var kernels, Var bias) {
  const Tensor& x = tape.value(input);
  const Tensor& k = tape.value(kernels);
  const Tensor& b = tape.value(bias);
  expect_rank(x, 3, "conv1d input");
  expect_rank(k, 3, "conv1d kernels");
  if (k.dim(0) % 2 == 0) throw DimensionError("conv1d kernel width axis 0 must be odd, got " + std::to_string(k.dim(0)));
  expect_extent(k.dim(1), x.dim(2), "conv1d kernel channel axis 1");
  expect_extent(b.size(), k.dim(2), "conv1d bias axis 0");
  const kernels::ConvDims d{x.dim(0), x.dim(1), x.dim(2), k.dim(0), k.dim(2)};
  Tensor out({d.batch, d.time, d.filters});
  kernels::conv1d_forward(d, x.data(), k.data(), b.data(), out.data());
  return tape.record(std::move(out), {input, kernels, bias}, [d](BackwardContext& ctx) {
    Tensor d_in(ctx.input(0).shape()), d_k(ctx.input(1).shape()), d_b(ctx.input(2).shape());
    kernels::conv1d_backward(d, ctx.input(0).data(), ctx.input(1).data(), ctx.output_grad().data(), d_in.data(),
                             d_k.data(), d_b.data());
    accumulate(ctx.input_grad(0), d_in);
    accumulate(ctx.input_grad(1), d_k);
    accumulate(ctx.input_grad(2), d_b);
  });
}

Var gru_layer(Tape& tape, Var input, const GruWeights& w, Direction dir) {
  const Tensor& x = tape.value(input);
  const Tensor& wx = tape.value(w.wx);
  const Tensor& uh = tape.value(w.uh);
  const Tensor& b = tape.value(w.bias);
  expect_rank(x, 3, "gru input");
  expect_rank(wx, 2, "gru input weights");
  expect_rank(uh, 2, "gru recurrent weights");
  const std::size_t hidden = uh.dim(0);
  if (hidden == 0) throw DimensionError("gru hidden size must be positive");
  expect_extent(uh.dim(1), 3 * hidden, "gru recurrent weights axis 1");
  expect_extent(wx.dim(0), x.dim(2), "gru input weights axis 0");
  expect_extent(wx.dim(1), 3 * hidden, "gru input weights axis 1");
  expect_extent(b.size(), 3 * hidden, "gru bias axis 0");

  const kernels::GruDims d{x.dim(0), x.dim(1), x.dim(2), hidden};
  const bool reverse = dir == Direction::Backward;
  const std::size_t cells = d.batch * d.time * d.hidden;
  // z, r, n and h_prev share one buffer kept alive by the backward closure.
  auto cache = std::make_shared<std::vector<double>>(4 * cells);
  auto views = [cells](std::vector<double>& buf) {
    return kernels::GruCache{{buf.data(), cells},
                             {buf.data() + cells, cells},
                             {buf.data() + 2 * cells, cells},
                             {buf.data() + 3 * cells, cells}};
  };
  Tensor out({d.batch, d.time, d.hidden});
  kernels::gru_forward(d, reverse, x.data(), wx.data(), uh.data(), b.data(), out.data(), views(*cache));
  return tape.record(std::move(out), {input, w.wx, w.uh, w.bias}, [d, reverse, cache, views](BackwardContext& ctx) {
    Tensor d_in(ctx.input(0).shape()), d_wx(ctx.input(1).shape()), d_uh(ctx.input(2).shape()),
        d_b(ctx.input(3).shape());
    kernels::gru_backward(d, reverse, ctx.input(0).data(), ctx.input(1).data(), ctx.input(2).data(), views(*cache),
                          ctx.output_grad().data(), d_in.data(), d_wx.data(), d_uh.data(), d_b.data());
    accumulate(ctx.input_grad(0), d_in);
    accumulate(ctx.input_grad(1), d_wx);
    accumulate(ctx.input_grad(2), d_uh);
    accumulate(ctx.input_grad(3), d_b);
  });
}

Var bidirectional_gru(Tape& tape, Var input, const GruWeights& fwd, const GruWeights& bwd) {
  const std::size_t hf = tape.value(fwd.uh).dim(0);
  const std::size_t hb = tape.value(bwd.uh).dim(0);
  if (hf != hb)
    throw DimensionError("bidirectional gru hidden sizes differ: forward " + std::to_string(hf) + ", backward " +
                         std::to_string(hb));
  const Var parts[] = {gru_layer(tape, input, fwd, Direction::Forward),
                       gru_layer(tape, input, bwd, Direction::Backward)};
  return concat_last(tape, parts);
}

Var dense(Tape& tape, Var input, Var weight, Var bias, Activation act) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(weight);
  const Tensor& b = tape.value(bias);
  expect_rank(x, 2, "dense input");
  expect_rank(w, 2, "dense weight");
  expect_extent(w.dim(0), x.dim(1), "dense weight axis 0");
  expect_extent(b.size(), w.dim(1), "dense bias axis 0");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  Tensor out({rows, out_dim});
  for (std::size_t r = 0; r < rows; ++r) std::copy(b.data(), b.data() + out_dim, out.data() + r * out_dim);
  kernels::gemm_nn(rows, out_dim, in, x.data(), in, w.data(), out_dim, out.data(), out_dim);
  if (act == Activation::Relu)
    for (double& v : out.values()) v = std::max(v, 0.0);
  return tape.record(std::move(out), {input, weight, bias}, [rows, in, out_dim, act](BackwardContext& ctx) {
    Tensor g = ctx.output_grad();
    if (act == Activation::Relu) {
      const auto& y = ctx.output().values();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (y[i] <= 0.0) g[i] = 0.0;
    }
    if (Tensor* dx = ctx.input_grad(0))
      kernels::gemm_nt(rows, in, out_dim, g.data(), out_dim, ctx.input(1).data(), out_dim, dx->data(), in);
    if (Tensor* dw = ctx.input_grad(1))
      kernels::gemm_tn(in, out_dim, rows, ctx.input(0).data(), in, g.data(), out_dim, dw->data(), out_dim);
    if (Tensor* db = ctx.input_grad(2))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out_dim; ++j) (*db)[j] += g[r * out_dim + j];
  });
}

Var relu(Tape& tape, Var input) {
  Tensor out = tape.value(input);
  for (double& v : out.values()) v = std::max(v, 0.0);
  return tape.record(std::move(out), {input}, [](BackwardContext& ctx) {
    Tensor* dx = ctx.input_grad(0);
    if (!dx) return;
    const auto& y = ctx.output().values();
    const auto& g = ctx.output_grad().values();
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] > 0.0) (*dx)[i] += g[i];
  });
}

Var mean_pool_time(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  expect_rank(x, 3, "mean_pool_time input");
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
  Tensor out({B, C});
  const double inv = 1.0 / static_cast<double>(T);
  for (std::size_t b = 0; b < B; ++b) {
    double* o = out.data() + b * C;
    for (std::size_t t = 0; t < T; ++t) {
      const double* row = x.data() + (b * T + t) * C;
      for (std::size_t c = 0; c < C; ++c) o[c] += row[c];
    }
    for (std::size_t c = 0; c < C; ++c) o[c] *= inv;
  }
  return tape.record(std::move(out), {input}, [B, T, C, inv](BackwardContext& ctx) {
    Tensor* dx = ctx.input_grad(0);
    if (!dx) return;
    const Tensor& g = ctx.output_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        double* row = dx->data() + (b * T + t) * C;
        for (std::size_t c = 0; c < C; ++c) row[c] += g[b * C + c] * inv;
      }
  });
}

Var concat_last(Tape& tape, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Tensor& first = tape.value(parts[0]);
  const std::size_t rank = first.rank();
  if (rank < 2) throw DimensionError("concat inputs must have rank >= 2");
  const std::size_t rows = first.size() / first.shape().back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var v : parts) {
    const Tensor& t = tape.value(v);
    if (t.rank() != rank) throw DimensionError("concat inputs differ in rank");
    for (std::size_t a = 0; a + 1 < rank; ++a)
      expect_extent(t.dim(a), first.dim(a), "concat axis " + std::to_string(a));
    widths.push_back(t.shape().back());
    total += widths.back();
  }
  Shape shape = first.shape();
  shape.back() = total;
  Tensor out(shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = tape.value(parts[p]);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(t.data() + r * widths[p], t.data() + (r + 1) * widths[p], out.data() + r * total + offset);
    offset += widths[p];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), std::move(inputs), [rows, widths, total](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (Tensor* dx = ctx.input_grad(p))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[p]; ++c) (*dx)[r * widths[p] + c] += g[r * total + offset + c];
      offset += widths[p];
    }
  });
}

Var slice_columns(Tape& tape, Var input, std::size_t begin, std::size_t end) {
  const Tensor& x = tape.value(input);
  expect_rank(x, 2, "slice_columns input");
  if (begin >= end || end > x.dim(1)) throw DimensionError("column slice out of range on axis 1");
  const std::size_t rows = x.dim(0), cols = x.dim(1), width = end - begin;
  Tensor out({rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(x.data() + r * cols + begin, x.data() + r * cols + end, out.data() + r * width);
  return tape.record(std::move(out), {input}, [rows, cols, begin, width](BackwardContext& ctx) {
    Tensor* dx = ctx.input_grad(0);
    if (!dx) return;
    const Tensor& g = ctx.output_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) (*dx)[r * cols + begin + c] += g[r * width + c];
  });
}

Var upsample_time(Tape& tape, Var input, std::size_t factor) {
  const Tensor& x = tape.value(input);
  expect_rank(x, 3, "upsample_time input");
  if (factor == 0) throw DimensionError("upsample factor must be positive");
  const std::size_t B = x.dim(0), L = x.dim(1), C = x.dim(2);
  Tensor out({B, L * factor, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L * factor; ++t) {
      const double* src = x.data() + (b * L + t / factor) * C;
      std::copy(src, src + C, out.data() + (b * L * factor + t) * C);
    }
  return tape.record(std::move(out), {input}, [B, L, C, factor](BackwardContext& ctx) {
    Tensor* dx = ctx.input_grad(0);
    if (!dx) return;
    const Tensor& g = ctx.output_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < L * factor; ++t) {
        double* dst = dx->data() + (b * L + t / factor) * C;
        const double* src = g.data() + (b * L * factor + t) * C;
        for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
      }
  });
}

Var reshape(Tape& tape, Var input, Shape shape) {
  Tensor out = tape.value(input).reshaped(std::move(shape));
  return tape.record(std::move(out), {input}, [](BackwardContext& ctx) {
    Tensor* dx = ctx.input_grad(0);
    if (!dx) return;
    const auto& g = ctx.output_grad().values();
    for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i];
  });
}

Var sum(Tape& tape, Var input) {
  double acc = 0.0;
  for (double v : tape.value(input).values()) acc += v;
  return tape.record(Tensor::scalar(acc), {input}, [](BackwardContext& ctx) {
    Tensor* dx = ctx.input_grad(0);
    if (!dx) return;
    const double g = ctx.output_grad()[0];
    for (double& v : dx->values()) v += g;
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  if (x.shape() != y.shape()) throw DimensionError("add operands " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return tape.record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    accumulate(ctx.input_grad(0), ctx.output_grad());
    accumulate(ctx.input_grad(1), ctx.output_grad());
  });
}

Var scale(Tape& tape, Var a, double s) {
  Tensor out = tape.value(a);
  for (double& v : out.values()) v *= s;
  return tape.record(std::move(out), {a}, [s](BackwardContext& ctx) {
    Tensor* dx = ctx.input_grad(0);
    if (!dx) return;
    const auto& g = ctx.output_grad().values();
    for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += s * g[i];
  });
}

}  // namespace s2h
