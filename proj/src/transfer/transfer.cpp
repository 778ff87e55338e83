#include "s2h/transfer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <set>

#include "s2h/csv.hpp"
#include "s2h/error.hpp"
#include "s2h/metrics.hpp"
#include "s2h/seed.hpp"

namespace s2h {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string id_list(const std::vector<std::int64_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  if (ids.size() > 20) s += ",...";
  return s;
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

std::vector<double> UserEmbeddings::gather(std::span<const std::int64_t> ids) const {
  std::vector<double> out;
  out.reserve(ids.size() * dim);
  std::vector<std::int64_t> missing;
  for (auto id : ids) {
    const auto it = std::lower_bound(users.begin(), users.end(), id);
    if (it == users.end() || *it != id) {
      missing.push_back(id);
      continue;
    }
    const auto r = row(static_cast<std::size_t>(it - users.begin()));
    out.insert(out.end(), r.begin(), r.end());
  }
  if (!missing.empty()) throw DataError("embeddings missing users " + id_list(missing));
  return out;
}

UserEmbeddings pool_user_embeddings(const EmbeddingTable& table, Pooling pooling) {
  if (table.rows() == 0 || table.dim == 0) throw ConfigError("pooling an empty embedding table");
  std::map<std::int64_t, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < table.rows(); ++i) by_user[table.users[i]].push_back(i);

  UserEmbeddings out;
  out.dim = table.dim;
  std::vector<double> column;
  for (const auto& [user, rows] : by_user) {
    out.users.push_back(user);
    for (std::size_t d = 0; d < table.dim; ++d) {
      column.clear();
      for (auto r : rows) column.push_back(table.values[r * table.dim + d]);
      double v = 0.0;
      switch (pooling) {
        case Pooling::Mean:
          v = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(column.size());
          break;
        case Pooling::Max:
          v = *std::max_element(column.begin(), column.end());
          break;
        case Pooling::Min:
          v = *std::min_element(column.begin(), column.end());
          break;
        case Pooling::Median:
          std::sort(column.begin(), column.end());
          v = median_threshold(column);
          break;
      }
      out.values.push_back(v);
    }
  }
  return out;
}

void require_fitted_on(std::span<const std::int64_t> fitted, std::span<const std::int64_t> allowed,
                       const std::string& what) {
  const std::set<std::int64_t> ok(allowed.begin(), allowed.end());
  std::vector<std::int64_t> leaked;
  for (auto u : fitted)
    if (!ok.count(u)) leaked.push_back(u);
  if (!leaked.empty()) throw DataError(what + " was fitted on non-training users " + id_list(leaked));
}

double median_threshold(std::span<const double> values) {
  if (values.empty()) throw ConfigError("median of no values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

TraitLabels binarize_labels(std::span<const std::int64_t> train_users, std::span<const double> train_values,
                            std::span<const double> values) {
  if (train_values.size() < 2) throw ConfigError("binarize: need at least two training users");
  if (train_users.size() != train_values.size()) throw DimensionError("binarize: users and values differ in length");
  const auto [lo, hi] = std::minmax_element(train_values.begin(), train_values.end());
  if (*lo == *hi) throw DataError("binarize: trait is constant on the training users");
  TraitLabels out;
  out.threshold = median_threshold(train_values);
  for (double v : values) out.labels.push_back(v > out.threshold ? 1 : 0);
  out.fitted_users.assign(train_users.begin(), train_users.end());
  return out;
}

std::size_t PcaModel::select(double cutoff) const {
  if (!(cutoff > 0.0 && cutoff <= 1.0)) throw ConfigError("pca cutoff must be in (0, 1]");
  double cum = 0.0;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    cum += ratios[k];
    // Ratios are normalized sums, so allow the last few ulps of rounding at cutoff 1.
    if (cum >= cutoff - 1e-12) return k + 1;
  }
  return ratios.empty() || cum == 0.0 ? 1 : ratios.size();
}

std::vector<double> PcaModel::standardize(std::span<const double> rows) const {
  if (rows.size() % dim != 0) throw DimensionError("pca: rows are not a multiple of the fitted width");
  std::vector<double> z(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t d = i % dim;
    z[i] = scale[d] > 0.0 ? (rows[i] - mean[d]) / scale[d] : 0.0;
  }
  return z;
}

std::vector<double> PcaModel::project(std::span<const double> rows, std::size_t r) const {
  if (r < 1 || r > dim) throw ConfigError("pca: component count out of range");
  const auto z = standardize(rows);
  const std::size_t n = z.size() / dim;
  std::vector<double> out(n * r, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = z[i * dim + d];
      if (v == 0.0) continue;
      for (std::size_t k = 0; k < r; ++k) out[i * r + k] += v * components[d * dim + k];
    }
  return out;
}

PcaModel pca_fit(std::span<const double> rows, std::size_t dim, std::span<const std::int64_t> users) {
  if (dim == 0 || rows.size() % dim != 0) throw DimensionError("pca: rows are not [n, dim]");
  const std::size_t n = rows.size() / dim;
  if (n < 2) throw ConfigError("pca: need at least two training users");
  if (users.size() != n) throw DimensionError("pca: one user id per row required");

  PcaModel m;
  m.dim = dim;
  m.fitted_users.assign(users.begin(), users.end());
  m.mean.assign(dim, 0.0);
  m.scale.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) m.mean[d] += rows[i * dim + d];
  for (auto& v : m.mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      const double c = rows[i * dim + d] - m.mean[d];
      m.scale[d] += c * c;
    }
  for (auto& v : m.scale) {
    v = std::sqrt(v / static_cast<double>(n));
    if (!(v > 1e-12)) v = 0.0;
  }

  const auto z = m.standardize(rows);
  const Eigen::Map<const Matrix> Z(z.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const Matrix cov = (Z.transpose() * Z) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("pca: eigendecomposition failed");

  // Eigen returns ascending eigenvalues; store descending, sign-fixed so the largest entry is positive.
  m.components.assign(dim * dim, 0.0);
  m.ratios.assign(dim, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < dim; ++k) total += std::max(0.0, eig.eigenvalues()(static_cast<Eigen::Index>(k)));
  for (std::size_t k = 0; k < dim; ++k) {
    const auto src = static_cast<Eigen::Index>(dim - 1 - k);
    const auto vec = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    vec.cwiseAbs().maxCoeff(&arg);
    const double sign = vec(arg) < 0 ? -1.0 : 1.0;
    for (std::size_t d = 0; d < dim; ++d) m.components[d * dim + k] = sign * vec(static_cast<Eigen::Index>(d));
    m.ratios[k] = total > 0.0 ? std::max(0.0, eig.eigenvalues()(src)) / total : 0.0;
  }
  return m;
}

std::vector<double> ProbeModel::score(std::span<const double> rows) const {
  const std::size_t p = weights.size();
  if (p == 0 || rows.size() % p != 0) throw DimensionError("probe: rows do not match the weight width");
  std::vector<double> out(rows.size() / p);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double z = intercept;
    for (std::size_t j = 0; j < p; ++j) z += weights[j] * rows[i * p + j];
    out[i] = sigmoid(z);
  }
  return out;
}

ProbeModel probe_fit(std::span<const double> rows, std::size_t dim, std::span<const int> labels,
                     std::span<const std::int64_t> users, const ProbeConfig& config) {
  if (dim == 0 || rows.size() != labels.size() * dim) throw DimensionError("probe: rows are not [n, dim]");
  if (users.size() != labels.size()) throw DimensionError("probe: one user id per row required");
  if (!(config.lambda >= 0.0)) throw ConfigError("probe: lambda must be >= 0");
  const std::size_t n = labels.size();
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || static_cast<std::size_t>(pos) == n) throw ConfigError("probe: training labels have a single class");

  // Objective: sum of log-losses + lambda/2 |w|^2. Hessian is bounded by X~'X~/4 + lambda I,
  // X~ being the rows with a bias column.
  Matrix xt(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) xt(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i * dim + j];
    xt(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(dim)) = 1.0;
  }
  const Matrix gram = xt.transpose() * xt;
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff() / 4.0 +
                           config.lambda;
  const double step = 1.0 / lipschitz;

  ProbeModel m;
  m.lambda = config.lambda;
  m.fitted_users.assign(users.begin(), users.end());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim + 1));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i)) = labels[i];
  Eigen::VectorXd grad;
  for (m.iterations = 0;; ++m.iterations) {
    const Eigen::VectorXd z = xt * w;
    Eigen::VectorXd p(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) p(i) = sigmoid(z(i));
    grad = xt.transpose() * (p - y);
    grad.head(static_cast<Eigen::Index>(dim)) += config.lambda * w.head(static_cast<Eigen::Index>(dim));
    m.grad_norm = grad.norm();
    if (!std::isfinite(m.grad_norm)) throw NumericError("probe: gradient is not finite");
    if (m.grad_norm < config.tolerance) {
      m.converged = true;
      break;
    }
    if (m.iterations >= config.max_iterations) break;
    w -= step * grad;
  }
  m.weights.assign(w.data(), w.data() + dim);
  m.intercept = w(static_cast<Eigen::Index>(dim));
  return m;
}

TransferReport run_transfer_suite(const std::vector<TransferSource>& sources, const std::vector<Trait>& traits,
                                  std::span<const std::int64_t> train_users, std::span<const std::int64_t> test_users,
                                  const TransferConfig& config) {
  if (sources.empty() || traits.empty()) throw ConfigError("transfer: need at least one source and one trait");
  if (config.cutoffs.empty()) throw ConfigError("transfer: no PCA cutoffs");
  for (double c : config.cutoffs)
    if (!(c > 0.0 && c <= 1.0)) throw ConfigError("transfer: cutoffs must be in (0, 1]");

  std::vector<UserEmbeddings> pooled;
  for (const auto& s : sources) pooled.push_back(pool_user_embeddings(s.table, config.pooling));
  for (std::size_t k = 1; k < pooled.size(); ++k) {
    std::vector<std::int64_t> diff;
    std::set_symmetric_difference(pooled[0].users.begin(), pooled[0].users.end(), pooled[k].users.begin(),
                                  pooled[k].users.end(), std::back_inserter(diff));
    if (!diff.empty())
      throw DataError("transfer: sources " + sources[0].name + " and " + sources[k].name +
                      " cover different users: " + id_list(diff));
  }

  const auto trait_values = [&](const Trait& t, std::span<const std::int64_t> ids) {
    std::vector<double> v;
    std::vector<std::int64_t> missing;
    for (auto id : ids) {
      const auto it = t.values.find(id);
      if (it == t.values.end())
        missing.push_back(id);
      else
        v.push_back(it->second);
    }
    if (!missing.empty()) throw DataError("transfer: trait " + t.name + " missing users " + id_list(missing));
    return v;
  };

  TransferReport report;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto& src = sources[s];
    const auto train_rows = pooled[s].gather(train_users);
    const auto test_rows = pooled[s].gather(test_users);
    const PcaModel pca = pca_fit(train_rows, pooled[s].dim, train_users);
    require_fitted_on(pca.fitted_users, train_users, "pca for " + src.name);

    PcaCoordinates coords{src.name, {}, {}};
    const std::size_t two = std::min<std::size_t>(2, pca.dim);
    for (const auto* ids : {&train_users, &test_users}) {
      const auto proj = pca.project(pooled[s].gather(*ids), two);
      for (std::size_t i = 0; i < ids->size(); ++i) {
        coords.users.push_back((*ids)[i]);
        coords.xy.push_back(proj[i * two]);
        coords.xy.push_back(two > 1 ? proj[i * two + 1] : 0.0);
      }
    }
    report.coordinates.push_back(std::move(coords));

    const std::size_t n_cells = traits.size() * config.cutoffs.size();
    std::vector<TransferCell> cells(n_cells);
    std::vector<std::exception_ptr> errors(n_cells);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t c = 0; c < n_cells; ++c) {
      try {
        const Trait& trait = traits[c / config.cutoffs.size()];
        TransferCell& cell = cells[c];
        cell.source = src.name;
        cell.trait = trait.name;
        cell.cutoff = config.cutoffs[c % config.cutoffs.size()];
        if (src.uses_rhr && trait.name == "rhr") {
          cell.status = TransferCell::Status::NotApplicable;
          continue;
        }
        cell.r = pca.select(cell.cutoff);
        const auto train_y = trait_values(trait, train_users);
        auto train_lab = binarize_labels(train_users, train_y, train_y);
        const auto test_lab = binarize_labels(train_users, train_y, trait_values(trait, test_users));
        require_fitted_on(train_lab.fitted_users, train_users, "labels for " + trait.name);
        if (config.shuffle_labels) {
          std::mt19937_64 rng(derive_seed(config.seed, s, c));
          std::shuffle(train_lab.labels.begin(), train_lab.labels.end(), rng);
        }
        const auto probe = probe_fit(pca.project(train_rows, cell.r), cell.r, train_lab.labels, train_users, config.probe);
        require_fitted_on(probe.fitted_users, train_users, "probe for " + trait.name);
        const auto scores = probe.score(pca.project(test_rows, cell.r));
        const auto pos = std::count(test_lab.labels.begin(), test_lab.labels.end(), 1);
        if (pos == 0 || static_cast<std::size_t>(pos) == test_lab.labels.size()) {
          cell.status = TransferCell::Status::SingleClassTest;
          continue;
        }
        cell.auc = auc(scores, test_lab.labels);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    report.cells.insert(report.cells.end(), cells.begin(), cells.end());
  }
  return report;
}

std::string format_transfer_report(const TransferReport& report) {
  std::string out = "source,trait,cutoff,R,auc_test\n";
  for (const auto& c : report.cells) {
    out += c.source + "," + c.trait + "," + csv::num(c.cutoff) + ",";
    switch (c.status) {
      case TransferCell::Status::Ok:
        out += std::to_string(c.r) + "," + csv::fixed(c.auc, 6);
        break;
      case TransferCell::Status::NotApplicable:
        out += "N/A,N/A";
        break;
      case TransferCell::Status::SingleClassTest:
        out += std::to_string(c.r) + ",undefined";
        break;
    }
    out += "\n";
  }
  return out;
}

std::string format_pca_coordinates(const TransferReport& report) {
  std::string out = "source,user_id,pc1,pc2\n";
  for (const auto& c : report.coordinates)
    for (std::size_t i = 0; i < c.users.size(); ++i)
      out += c.source + "," + std::to_string(c.users[i]) + "," + csv::num(c.xy[2 * i]) + "," +
             csv::num(c.xy[2 * i + 1]) + "\n";
  return out;
}

}  // namespace s2h
