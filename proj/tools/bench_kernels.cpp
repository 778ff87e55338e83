// Times the serial reference kernels against the OpenMP kernels on training-sized shapes.
//
//   bench_kernels [--batch 64] [--time 512] [--filters 16] [--hidden 16] [--reps 3]

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "s2h/kernels.hpp"

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel timings"};
  std::size_t batch = 64, time = 512, filters = 16, hidden = 16, channels = 6;
  int reps = 3;
  app.add_option("--batch", batch);
  app.add_option("--time", time);
  app.add_option("--filters", filters);
  app.add_option("--hidden", hidden);
  app.add_option("--channels", channels);
  app.add_option("--reps", reps);
  CLI11_PARSE(app, argc, argv);

  namespace k = s2h::kernels;
  std::mt19937_64 rng(1);
  const std::size_t width = 5, G = 3 * hidden, rows = batch * time;

  auto in = random_vec(rows * filters, rng);
  auto ker = random_vec(width * filters * filters, rng);
  auto bias = random_vec(filters, rng);
  auto out = std::vector<double>(rows * filters);
  auto d_out = random_vec(rows * filters, rng);
  auto d_in = std::vector<double>(rows * filters);
  auto d_ker = std::vector<double>(ker.size());
  auto d_bias = std::vector<double>(filters);
  const k::ConvDims cd{batch, time, filters, width, filters};

  auto wx = random_vec(filters * G, rng);
  auto uh = random_vec(hidden * G, rng);
  auto gb = random_vec(G, rng);
  std::vector<double> gout(rows * hidden), cache(4 * rows * hidden), g_dout = random_vec(rows * hidden, rng);
  std::vector<double> g_din(rows * filters), g_dwx(wx.size()), g_duh(uh.size()), g_db(G);
  const std::size_t cells = rows * hidden;
  const k::GruCache gc{{cache.data(), cells}, {cache.data() + cells, cells}, {cache.data() + 2 * cells, cells},
                       {cache.data() + 3 * cells, cells}};
  const k::GruDims gd{batch, time, filters, hidden};

  struct Row {
    std::string name;
    std::function<void()> serial, parallel;
  };
  std::vector<Row> rows_to_run = {
      {"gemm_nn [B*T,F]x[F,3H]",
       [&] { k::serial::gemm_nn(rows, G, filters, in.data(), filters, wx.data(), G, cache.data(), G); },
       [&] { k::parallel::gemm_nn(rows, G, filters, in.data(), filters, wx.data(), G, cache.data(), G); }},
      {"conv1d forward", [&] { k::serial::conv1d_forward(cd, in.data(), ker.data(), bias.data(), out.data()); },
       [&] { k::parallel::conv1d_forward(cd, in.data(), ker.data(), bias.data(), out.data()); }},
      {"conv1d backward",
       [&] {
         k::serial::conv1d_backward(cd, in.data(), ker.data(), d_out.data(), d_in.data(), d_ker.data(), d_bias.data());
       },
       [&] {
         k::parallel::conv1d_backward(cd, in.data(), ker.data(), d_out.data(), d_in.data(), d_ker.data(),
                                      d_bias.data());
       }},
      {"gru forward", [&] { k::serial::gru_forward(gd, false, in.data(), wx.data(), uh.data(), gb.data(), gout.data(), gc); },
       [&] { k::parallel::gru_forward(gd, false, in.data(), wx.data(), uh.data(), gb.data(), gout.data(), gc); }},
      {"gru backward",
       [&] {
         k::serial::gru_backward(gd, false, in.data(), wx.data(), uh.data(), gc, g_dout.data(), g_din.data(),
                                 g_dwx.data(), g_duh.data(), g_db.data());
       },
       [&] {
         k::parallel::gru_backward(gd, false, in.data(), wx.data(), uh.data(), gc, g_dout.data(), g_din.data(),
                                   g_dwx.data(), g_duh.data(), g_db.data());
       }},
  };

  std::printf("threads=%d batch=%zu time=%zu filters=%zu hidden=%zu\n", omp_get_max_threads(), batch, time, filters,
              hidden);
  std::printf("%-28s %12s %12s %8s\n", "kernel", "serial_ms", "parallel_ms", "speedup");
  for (const auto& r : rows_to_run) {
    const double s = time_ms(r.serial, reps);
    const double p = time_ms(r.parallel, reps);
    std::printf("%-28s %12.3f %12.3f %8.2f\n", r.name.c_str(), s, p, s / p);
  }
  return 0;
}
