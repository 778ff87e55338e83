#pragma once

// User-level probing of frozen embeddings: pooling, standardized PCA, median labels, logistic probes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "s2h/embedding.hpp"
#include "s2h/pipeline.hpp"

namespace s2h {

/// One row per user, users ascending. values is [users, dim].
struct UserEmbeddings {
  std::size_t dim = 0;
  std::vector<std::int64_t> users;
  std::vector<double> values;

  std::size_t rows() const { return users.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  /// Rows for the given users, in that order; throws DataError naming any that are absent.
  std::vector<double> gather(std::span<const std::int64_t> ids) const;
};

enum class Pooling { Mean, Max, Min, Median };

UserEmbeddings pool_user_embeddings(const EmbeddingTable& table, Pooling pooling = Pooling::Mean);

/// Throws DataError if any fitted-on user is outside `allowed`.
void require_fitted_on(std::span<const std::int64_t> fitted, std::span<const std::int64_t> allowed,
                       const std::string& what);

struct TraitLabels {
  double threshold = 0.0;
  std::vector<int> labels;  // aligned with the `values` passed to label()
  std::vector<std::int64_t> fitted_users;
};

/// Threshold is the median of the training values; label 1 iff value > threshold.
double median_threshold(std::span<const double> train_values);
TraitLabels binarize_labels(std::span<const std::int64_t> train_users, std::span<const double> train_values,
                            std::span<const double> values);

struct PcaModel {
  std::size_t dim = 0;
  std::vector<double> mean;
  std::vector<double> scale;       // 0 marks a dropped (constant) feature
  std::vector<double> components;  // [dim, dim]; column k is component k
  std::vector<double> ratios;      // explained-variance ratios, descending
  std::vector<std::int64_t> fitted_users;

  /// Smallest R whose cumulative ratio reaches `cutoff`; 1 when the data has no variance.
  std::size_t select(double cutoff) const;
  std::vector<double> standardize(std::span<const double> rows) const;
  /// Standardized rows times the first R components, [n, R].
  std::vector<double> project(std::span<const double> rows, std::size_t r) const;
  double component(std::size_t feature, std::size_t k) const { return components[feature * dim + k]; }
};

PcaModel pca_fit(std::span<const double> rows, std::size_t dim, std::span<const std::int64_t> users);

struct ProbeConfig {
  double lambda = 1.0;
  double tolerance = 1e-6;
  int max_iterations = 10000;
};

struct ProbeModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 1.0;
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  std::vector<std::int64_t> fitted_users;

  std::vector<double> score(std::span<const double> rows) const;
};

/// L2-penalized logistic regression (intercept unpenalized) by full-batch gradient descent with step 1/L.
ProbeModel probe_fit(std::span<const double> rows, std::size_t dim, std::span<const int> labels,
                     std::span<const std::int64_t> users, const ProbeConfig& config = {});

struct TransferSource {
  std::string name;
  EmbeddingTable table;
  bool uses_rhr = false;  // rhr was a model input, so probing rhr is not applicable
};

struct Trait {
  std::string name;
  std::map<std::int64_t, double> values;
};

struct TransferConfig {
  std::vector<double> cutoffs{0.90, 0.95, 0.99, 0.999};
  ProbeConfig probe;
  Pooling pooling = Pooling::Mean;
  bool shuffle_labels = false;  // permutation control
  std::uint64_t seed = 0;
};

struct TransferCell {
  enum class Status { Ok, NotApplicable, SingleClassTest };
  std::string source, trait;
  double cutoff = 0.0;
  std::size_t r = 0;
  double auc = 0.0;
  Status status = Status::Ok;
};

struct PcaCoordinates {
  std::string source;
  std::vector<std::int64_t> users;
  std::vector<double> xy;  // [users, 2]
};

struct TransferReport {
  std::vector<TransferCell> cells;
  std::vector<PcaCoordinates> coordinates;
};

/// Probes every (source, trait, cutoff). Train-fitted state uses `train_users` only; AUC is on `test_users`.
TransferReport run_transfer_suite(const std::vector<TransferSource>& sources, const std::vector<Trait>& traits,
                                  std::span<const std::int64_t> train_users, std::span<const std::int64_t> test_users,
                                  const TransferConfig& config);

/// Header `source,trait,cutoff,R,auc_test`.
std::string format_transfer_report(const TransferReport& report);
/// Header `source,user_id,pc1,pc2`.
std::string format_pca_coordinates(const TransferReport& report);

}  // namespace s2h
