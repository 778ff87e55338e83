#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "s2h/error.hpp"
#include "s2h/metrics.hpp"
#include "s2h/transfer.hpp"
#include "support/temp_dir.hpp"

using namespace s2h;

namespace {

EmbeddingTable table_from(const std::vector<std::int64_t>& users, std::size_t dim, const std::vector<double>& values) {
  EmbeddingTable t;
  t.dim = dim;
  for (std::size_t i = 0; i < users.size(); ++i)
    t.push(users[i], static_cast<std::int64_t>(i) * 7680, std::span<const double>(values.data() + i * dim, dim));
  return t;
}

std::vector<std::int64_t> ids(std::int64_t from, std::int64_t to) {
  std::vector<std::int64_t> v;
  for (auto i = from; i <= to; ++i) v.push_back(i);
  return v;
}

/// Newton's method on the same penalized objective, solved by Gaussian elimination.
std::vector<double> newton_logistic(const std::vector<double>& x, std::size_t p, const std::vector<int>& y,
                                    double lambda) {
  const std::size_t n = y.size(), q = p + 1;
  std::vector<double> w(q, 0.0);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> g(q, 0.0), h(q * q, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> xi(x.begin() + static_cast<long>(i * p), x.begin() + static_cast<long>((i + 1) * p));
      xi.push_back(1.0);
      double z = 0;
      for (std::size_t j = 0; j < q; ++j) z += w[j] * xi[j];
      const double pr = 1.0 / (1.0 + std::exp(-z));
      for (std::size_t j = 0; j < q; ++j) {
        g[j] += (pr - y[i]) * xi[j];
        for (std::size_t k = 0; k < q; ++k) h[j * q + k] += pr * (1 - pr) * xi[j] * xi[k];
      }
    }
    for (std::size_t j = 0; j < p; ++j) {
      g[j] += lambda * w[j];
      h[j * q + j] += lambda;
    }
    // Solve h d = g.
    std::vector<double> a = h, b = g;
    for (std::size_t c = 0; c < q; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < q; ++r)
        if (std::abs(a[r * q + c]) > std::abs(a[piv * q + c])) piv = r;
      for (std::size_t k = 0; k < q; ++k) std::swap(a[c * q + k], a[piv * q + k]);
      std::swap(b[c], b[piv]);
      for (std::size_t r = c + 1; r < q; ++r) {
        const double f = a[r * q + c] / a[c * q + c];
        for (std::size_t k = c; k < q; ++k) a[r * q + k] -= f * a[c * q + k];
        b[r] -= f * b[c];
      }
    }
    std::vector<double> d(q);
    for (std::size_t c = q; c-- > 0;) {
      double s = b[c];
      for (std::size_t k = c + 1; k < q; ++k) s -= a[c * q + k] * d[k];
      d[c] = s / a[c * q + c];
    }
    for (std::size_t j = 0; j < q; ++j) w[j] -= d[j];
  }
  return w;
}

}  // namespace

TEST_CASE("pooling averages each user's windows") {
  const auto t = table_from({4, 4, 9}, 2, {0, 2, 2, 0, 5, 6});
  const auto u = pool_user_embeddings(t);
  REQUIRE(u.rows() == 2);
  CHECK(u.users == std::vector<std::int64_t>{4, 9});
  CHECK(u.row(0)[0] == 1.0);
  CHECK(u.row(0)[1] == 1.0);
  CHECK(u.row(1)[0] == 5.0);
  CHECK(u.row(1)[1] == 6.0);
  CHECK_THROWS_AS(pool_user_embeddings(EmbeddingTable{}), ConfigError);
  const auto mx = pool_user_embeddings(t, Pooling::Max);
  CHECK(mx.row(0)[0] == 2.0);
  CHECK_THROWS_AS(u.gather(std::vector<std::int64_t>{4, 5}), DataError);
}

TEST_CASE("property: pooling commutes with a fixed linear map") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t rows = 5 + rng() % 30, dim = 1 + rng() % 4, out = 1 + rng() % 3;
    std::vector<std::int64_t> users(rows);
    std::vector<double> v(rows * dim), a(dim * out), mapped(rows * out, 0.0);
    for (auto& u : users) u = static_cast<std::int64_t>(rng() % 4);
    for (auto& x : v) x = d(rng);
    for (auto& x : a) x = d(rng);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        for (std::size_t k = 0; k < out; ++k) mapped[i * out + k] += v[i * dim + j] * a[j * out + k];
    const auto p1 = pool_user_embeddings(table_from(users, dim, v));
    const auto p2 = pool_user_embeddings(table_from(users, out, mapped));
    REQUIRE(p1.rows() == p2.rows());
    for (std::size_t i = 0; i < p1.rows(); ++i)
      for (std::size_t k = 0; k < out; ++k) {
        double s = 0;
        for (std::size_t j = 0; j < dim; ++j) s += p1.row(i)[j] * a[j * out + k];
        CHECK(p2.row(i)[k] == doctest::Approx(s).epsilon(1e-10).scale(1.0));
      }
  }
}

TEST_CASE("median labels use the training threshold") {
  const std::vector<std::int64_t> u{1, 2, 3, 4};
  const std::vector<double> train{1, 2, 3, 4};
  const auto lab = binarize_labels(u, train, std::vector<double>{3.0, 2.0, 2.5});
  CHECK(lab.threshold == 2.5);
  CHECK(lab.labels == std::vector<int>{1, 0, 0});
  // Test values all above the training median stay positive even though their own median differs.
  const auto test = binarize_labels(u, train, std::vector<double>{10, 11, 12, 13});
  CHECK(test.labels == std::vector<int>{1, 1, 1, 1});
  CHECK_THROWS_AS(binarize_labels(u, std::vector<double>{2, 2, 2, 2}, train), DataError);
  CHECK_THROWS_AS(binarize_labels(std::vector<std::int64_t>{1}, std::vector<double>{2}, train), ConfigError);
}

TEST_CASE("pca of data varying along one axis") {
  std::vector<double> rows;
  for (int i = 0; i < 10; ++i) rows.insert(rows.end(), {static_cast<double>(i), 3.0, static_cast<double>(i) * 2.0});
  const auto m = pca_fit(rows, 3, ids(1, 10));
  CHECK(m.ratios[0] == doctest::Approx(1.0));
  for (double c : {0.90, 0.95, 0.99, 0.999}) CHECK(m.select(c) == 1);
  CHECK(m.scale[1] == 0.0);
  CHECK_THROWS_AS(pca_fit(std::vector<double>{1, 2, 3}, 3, ids(1, 1)), ConfigError);
}

TEST_CASE("pca with no variance selects one component") {
  const std::vector<double> rows(12, 4.0);
  const auto m = pca_fit(rows, 3, ids(1, 4));
  CHECK(m.select(0.9) == 1);
  const auto proj = m.project(rows, 1);
  for (double v : proj) CHECK(v == 0.0);
}

TEST_CASE("isotropic 2-d data splits variance evenly") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> rows(2 * 4000);
  for (auto& v : rows) v = d(rng);
  const auto m = pca_fit(rows, 2, ids(1, 4000));
  CHECK(m.ratios[0] == doctest::Approx(0.5).epsilon(0.05));
  CHECK(m.ratios[1] == doctest::Approx(0.5).epsilon(0.05));
  CHECK(m.select(0.90) == 2);
}

TEST_CASE("property: pca invariants on random data") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> d(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 3 + rng() % 50, dim = 1 + rng() % 12;
    std::vector<double> mix(dim * dim), rows(n * dim, 0.0);
    for (auto& v : mix) v = d(rng);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> z(dim);
      for (auto& v : z) v = d(rng);
      for (std::size_t j = 0; j < dim; ++j)
        for (std::size_t k = 0; k < dim; ++k) rows[i * dim + k] += z[j] * mix[j * dim + k];
    }
    const auto m = pca_fit(rows, dim, ids(1, static_cast<std::int64_t>(n)));
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < dim; ++b) {
        double dot = 0;
        for (std::size_t f = 0; f < dim; ++f) dot += m.component(f, a) * m.component(f, b);
        CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-8);
      }
    double sum = 0;
    for (std::size_t k = 0; k < dim; ++k) {
      sum += m.ratios[k];
      if (k) CHECK(m.ratios[k] <= m.ratios[k - 1] + 1e-15);
    }
    CHECK(sum <= 1.0 + 1e-12);
    std::size_t prev = 0;
    for (double c : {0.90, 0.95, 0.99, 0.999}) {
      const auto r = m.select(c);
      CHECK(r >= prev);
      prev = r;
    }
    // Reconstruction with all components recovers the standardized rows.
    const auto z = m.standardize(rows);
    const auto proj = m.project(rows, dim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < dim; ++f) {
        double s = 0;
        for (std::size_t k = 0; k < dim; ++k) s += proj[i * dim + k] * m.component(f, k);
        CHECK(std::abs(s - z[i * dim + f]) < 1e-8);
      }
  }
}

TEST_CASE("probe separates two points and matches a Newton oracle") {
  const auto sep = probe_fit(std::vector<double>{-1.0, 1.0}, 1, std::vector<int>{0, 1}, ids(1, 2));
  CHECK(auc(sep.score(std::vector<double>{-1.0, 1.0}), std::vector<int>{0, 1}) == 1.0);
  CHECK(sep.converged);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> d(0.0, 1.0);
  const std::size_t n = 40, p = 2;
  std::vector<double> x(n * p);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i * p] = d(rng);
    x[i * p + 1] = d(rng);
    y[i] = x[i * p] + 0.5 * x[i * p + 1] + d(rng) > 0 ? 1 : 0;
  }
  const auto m = probe_fit(x, p, y, ids(1, n));
  CHECK(m.converged);
  CHECK(m.grad_norm < 1e-6);
  const auto w = newton_logistic(x, p, y, 1.0);
  CHECK(m.weights[0] == doctest::Approx(w[0]).epsilon(1e-5));
  CHECK(m.weights[1] == doctest::Approx(w[1]).epsilon(1e-5));
  CHECK(m.intercept == doctest::Approx(w[2]).epsilon(1e-5).scale(1.0));
}

TEST_CASE("heavy penalty shrinks the probe to the base rate") {
  std::vector<double> x{-2, -1, 1, 2};
  ProbeConfig c;
  c.lambda = 1e9;
  const auto m = probe_fit(x, 1, std::vector<int>{0, 1, 0, 1}, ids(1, 4), c);
  CHECK(std::abs(m.weights[0]) < 1e-8);
  for (double s : m.score(x)) CHECK(s == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_THROWS_AS(probe_fit(x, 1, std::vector<int>{1, 1, 1, 1}, ids(1, 4)), ConfigError);
}

TEST_CASE("fitted state audit catches leakage") {
  CHECK_NOTHROW(require_fitted_on(std::vector<std::int64_t>{1, 2}, std::vector<std::int64_t>{1, 2, 3}, "pca"));
  CHECK_THROWS_AS(require_fitted_on(std::vector<std::int64_t>{1, 9}, std::vector<std::int64_t>{1, 2, 3}, "pca"),
                  DataError);
}

namespace {

struct SuiteFixture {
  std::vector<std::int64_t> train = ids(1, 40), test = ids(41, 50);
  Trait informative{"gain", {}}, rhr{"rhr", {}};
  EmbeddingTable signal, flat;

  SuiteFixture() {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> d(0.0, 1.0);
    for (std::int64_t u = 1; u <= 50; ++u) {
      const double g = d(rng);
      informative.values[u] = g;
      rhr.values[u] = d(rng);
      for (int w = 0; w < 3; ++w) {
        const std::vector<double> e{g + 0.3 * d(rng), d(rng), d(rng), 0.5 * g + d(rng)};
        signal.dim = flat.dim = 4;
        signal.push(u, w, e);
        flat.push(u, w, std::vector<double>{1.0, 2.0, 3.0, 4.0});
      }
    }
  }
};

}  // namespace

TEST_CASE("transfer suite grid, N/A cells and no-information control") {
  SuiteFixture f;
  const std::vector<TransferSource> sources{{"A/R/T", f.signal, true}, {"flat", f.flat, false}};
  const auto rep = run_transfer_suite(sources, {f.informative, f.rhr}, f.train, f.test, TransferConfig{});
  CHECK(rep.cells.size() == 2 * 2 * 4);
  for (const auto& c : rep.cells) {
    if (c.source == "A/R/T" && c.trait == "rhr") {
      CHECK(c.status == TransferCell::Status::NotApplicable);
    } else if (c.source == "flat") {
      REQUIRE(c.status == TransferCell::Status::Ok);
      CHECK(c.auc == 0.5);
      CHECK(c.r == 1);
    } else {
      CHECK(c.auc > 0.8);
    }
  }
  const auto text = format_transfer_report(rep);
  CHECK(text.rfind("source,trait,cutoff,R,auc_test\n", 0) == 0);
  CHECK(text.find("A/R/T,rhr,0.9,N/A,N/A\n") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 17);
  CHECK(rep.coordinates.size() == 2);
  CHECK(rep.coordinates[0].users.size() == 50);
}

TEST_CASE("transfer suite rejects misaligned sources and missing traits") {
  SuiteFixture f;
  EmbeddingTable partial;
  partial.dim = 4;
  for (std::size_t i = 0; i < f.signal.rows(); ++i)
    if (f.signal.users[i] != 7) partial.push(f.signal.users[i], f.signal.window_starts[i], f.signal.row(i));
  CHECK_THROWS_AS(run_transfer_suite({{"a", f.signal, false}, {"b", partial, false}}, {f.informative}, f.train, f.test,
                                     TransferConfig{}),
                  DataError);
  Trait holey = f.informative;
  holey.values.erase(45);
  CHECK_THROWS_AS(run_transfer_suite({{"a", f.signal, false}}, {holey}, f.train, f.test, TransferConfig{}), DataError);
}

TEST_CASE("shuffled training labels give chance-level auc on average") {
  SuiteFixture f;
  double total = 0;
  int count = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    TransferConfig c;
    c.cutoffs = {0.99};
    c.shuffle_labels = true;
    c.seed = seed;
    for (const auto& cell : run_transfer_suite({{"s", f.signal, false}}, {f.informative}, f.train, f.test, c).cells) {
      total += cell.auc;
      ++count;
    }
  }
  CHECK(std::abs(total / count - 0.5) < 0.1);
}
