#include "s2h/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "s2h/csv.hpp"
#include "s2h/error.hpp"
#include "s2h/pipeline.hpp"

namespace s2h {

double global_mean_baseline(std::span<const double> train_y) {
  if (train_y.empty()) throw ConfigError("global mean baseline: empty training targets");
  return std::accumulate(train_y.begin(), train_y.end(), 0.0) / static_cast<double>(train_y.size());
}

void UserMeanBaseline::fit(std::span<const std::int64_t> users, std::span<const double> hr) {
  if (users.size() != hr.size()) throw DimensionError("user mean baseline: users and hr lengths differ");
  global_ = global_mean_baseline(hr);
  std::map<std::int64_t, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < users.size(); ++i) {
    auto& a = acc[users[i]];
    a.first += hr[i];
    ++a.second;
  }
  means_.clear();
  for (const auto& [u, a] : acc) means_[u] = a.first / static_cast<double>(a.second);
  fallbacks_ = 0;
}

double UserMeanBaseline::predict(std::int64_t user) const {
  const auto it = means_.find(user);
  if (it != means_.end()) return it->second;
  ++fallbacks_;
  return global_;
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ConfigError("percentile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double ols_slope(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double tbar = static_cast<double>(n - 1) / 2.0;
  double ybar = 0.0;
  for (double v : values) ybar += v;
  ybar /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - tbar;
    sxy += dt * (values[t] - ybar);
    sxx += dt * dt;
  }
  return sxy / sxx;
}

namespace {

void stream_stats(std::vector<double>& v, double* out) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  out[0] = mean;
  out[1] = std::sqrt(var / n);
  out[7] = ols_slope(v);  // before sorting
  std::sort(v.begin(), v.end());
  out[2] = v.back();
  out[3] = v.front();
  out[4] = percentile_sorted(v, 0.25);
  out[5] = percentile_sorted(v, 0.50);
  out[6] = percentile_sorted(v, 0.75);
}

}  // namespace

std::array<double, kStatFeatures> extract_stat_features(std::span<const double> x, std::span<const double> meta,
                                                        std::size_t window) {
  if (x.size() != window * kSeqChannels) throw DimensionError("stat features: window row has the wrong length");
  if (meta.size() < 4) throw DimensionError("stat features: need the four cyclical metadata values");
  std::array<double, kStatFeatures> out{};
  std::vector<double> buf(window);
  for (std::size_t c = 0; c < kSeqChannels; ++c) {
    for (std::size_t t = 0; t < window; ++t) buf[t] = x[t * kSeqChannels + c];
    stream_stats(buf, out.data() + c * kStatsPerStream);
  }
  for (std::size_t j = 0; j < 4; ++j) {
    double* o = out.data() + (kSeqChannels + j) * kStatsPerStream;
    const double v = meta[j];
    o[0] = o[2] = o[3] = o[4] = o[5] = o[6] = v;
    o[1] = o[7] = 0.0;
  }
  return out;
}

std::vector<std::string> stat_feature_names() {
  static const char* streams[kStatStreams] = {"ax",  "ay",       "az",       "mag",       "enmo",
                                              "vmhpf", "hour_sin", "hour_cos", "month_sin", "month_cos"};
  static const char* stats[kStatsPerStream] = {"mean", "std", "max", "min", "p25", "p50", "p75", "slope"};
  std::vector<std::string> names;
  for (const char* s : streams)
    for (const char* st : stats) names.push_back(std::string(s) + "_" + st);
  return names;
}

void GbtConfig::validate() const {
  if (rounds <= 0) throw ConfigError("gbt: rounds must be > 0");
  if (depth < 1) throw ConfigError("gbt: depth must be >= 1");
  if (!(shrinkage > 0.0)) throw ConfigError("gbt: shrinkage must be > 0");
}

double RegressionTree::predict(std::span<const double> x) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

double GbtModel::predict(std::span<const double> x) const {
  if (x.size() != features) throw DimensionError("gbt predict: feature count mismatch");
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return f0 + shrinkage * s;
}

namespace {

struct Split {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const double> x, std::size_t p, const std::vector<std::vector<std::size_t>>& order,
              const std::vector<double>& residual, int depth)
      : x_(x), p_(p), order_(order), r_(residual), depth_(depth), node_of_(residual.size(), 0) {}

  RegressionTree build() {
    tree_.nodes.clear();
    std::vector<std::size_t> all(r_.size());
    std::iota(all.begin(), all.end(), 0);
    grow(all, 0);
    return std::move(tree_);
  }

 private:
  int grow(const std::vector<std::size_t>& rows, int level) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double sum = 0.0;
    for (std::size_t r : rows) sum += r_[r];
    tree_.nodes[static_cast<std::size_t>(id)].value = sum / static_cast<double>(rows.size());
    if (level >= depth_ || rows.size() < 2) return id;

    const Split best = best_split(rows, sum, id);
    if (best.feature < 0) return id;
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
      (x_[r * p_ + static_cast<std::size_t>(best.feature)] < best.threshold ? left : right).push_back(r);
    const int l = grow(left, level + 1);
    const int rr = grow(right, level + 1);
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = rr;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& rows, double total, int id) {
    for (std::size_t r : rows) node_of_[r] = id + 1;  // mark membership; ids are unique per build
    const double n = static_cast<double>(rows.size());
    const double parent = total * total / n;
    std::vector<Split> per_feature(p_);
#pragma omp parallel for schedule(static) if (rows.size() * p_ > 50000)
    for (long fl = 0; fl < static_cast<long>(p_); ++fl) {
      const auto f = static_cast<std::size_t>(fl);
      Split best;
      double left_sum = 0.0;
      std::size_t left_n = 0;
      double prev = 0.0;
      bool have_prev = false;
      for (std::size_t r : order_[f]) {
        if (node_of_[r] != id + 1) continue;
        const double v = x_[r * p_ + f];
        if (have_prev && v != prev) {
          const double right_sum = total - left_sum;
          const double nl = static_cast<double>(left_n);
          const double gain = left_sum * left_sum / nl + right_sum * right_sum / (n - nl) - parent;
          if (gain > best.gain) {
            double mid = prev + (v - prev) / 2.0;
            if (!(mid > prev)) mid = v;  // adjacent doubles
            best = {gain, static_cast<int>(f), mid};
          }
        }
        left_sum += r_[r];
        ++left_n;
        prev = v;
        have_prev = true;
      }
      per_feature[f] = best;
    }
    Split best;
    for (const Split& s : per_feature)
      if (s.feature >= 0 && s.gain > best.gain) best = s;
    return best;
  }

  std::span<const double> x_;
  std::size_t p_;
  const std::vector<std::vector<std::size_t>>& order_;
  const std::vector<double>& r_;
  int depth_;
  std::vector<int> node_of_;
  RegressionTree tree_;
};

double mse_of(const std::vector<double>& residual) {
  double s = 0.0;
  for (double r : residual) s += r * r;
  return s / static_cast<double>(residual.size());
}

}  // namespace

GbtModel gbt_fit(std::span<const double> x, std::size_t p, std::span<const double> y, const GbtConfig& config) {
  config.validate();
  if (y.empty()) throw ConfigError("gbt: no training rows");
  if (p == 0 || x.size() != y.size() * p) throw DimensionError("gbt: feature matrix is not [n, p]");
  const std::size_t n = y.size();
  GbtModel model;
  model.shrinkage = config.shrinkage;
  model.depth = config.depth;
  model.features = p;
  model.f0 = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

  // Row order per feature, stable so equal values keep row order.
  std::vector<std::vector<std::size_t>> order(p, std::vector<std::size_t>(n));
  for (std::size_t f = 0; f < p; ++f) {
    std::iota(order[f].begin(), order[f].end(), 0);
    std::stable_sort(order[f].begin(), order[f].end(),
                     [&](std::size_t a, std::size_t b) { return x[a * p + f] < x[b * p + f]; });
  }
  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - model.f0;
  model.train_mse.push_back(mse_of(residual));

  for (int round = 0; round < config.rounds; ++round) {
    TreeBuilder builder(x, p, order, residual, config.depth);
    RegressionTree tree = builder.build();
    for (std::size_t i = 0; i < n; ++i) residual[i] -= config.shrinkage * tree.predict(x.subspan(i * p, p));
    model.trees.push_back(std::move(tree));
    const double mse = mse_of(residual);
    const double prev = model.train_mse.back();
    if (mse > prev + 1e-12 * std::max(1.0, prev))
      throw NumericError("gbt: training mse increased at round " + std::to_string(round + 1));
    model.train_mse.push_back(mse);
  }
  return model;
}

std::string gbt_dump(const GbtModel& model) {
  std::ostringstream out;
  out << "gbt 1\n"
      << "f0 " << csv::num(model.f0) << "\n"
      << "shrinkage " << csv::num(model.shrinkage) << "\n"
      << "depth " << model.depth << "\n"
      << "features " << model.features << "\n"
      << "trees " << model.trees.size() << "\n";
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const auto& nodes = model.trees[t].nodes;
    out << "tree " << t << " " << nodes.size() << "\n";
    for (const auto& n : nodes)
      out << n.feature << " " << csv::num(n.threshold) << " " << n.left << " " << n.right << " " << csv::num(n.value)
          << "\n";
  }
  return out.str();
}

GbtModel gbt_load(const std::string& text) {
  std::istringstream in(text);
  const auto expect = [&](const char* word) {
    std::string w;
    if (!(in >> w) || w != word) throw DataError(std::string("gbt dump: expected '") + word + "'");
  };
  const auto number = [&]() {
    std::string w;
    if (!(in >> w)) throw DataError("gbt dump: truncated");
    return csv::to_double(w);
  };
  const auto integer = [&]() {
    std::string w;
    if (!(in >> w)) throw DataError("gbt dump: truncated");
    return csv::to_int(w);
  };
  GbtModel m;
  expect("gbt");
  if (integer() != 1) throw DataError("gbt dump: unsupported version");
  expect("f0");
  m.f0 = number();
  expect("shrinkage");
  m.shrinkage = number();
  expect("depth");
  m.depth = static_cast<int>(integer());
  expect("features");
  m.features = static_cast<std::size_t>(integer());
  expect("trees");
  const auto count = integer();
  for (std::int64_t t = 0; t < count; ++t) {
    expect("tree");
    if (integer() != t) throw DataError("gbt dump: trees out of order");
    const auto nodes = integer();
    RegressionTree tree;
    for (std::int64_t k = 0; k < nodes; ++k) {
      TreeNode n;
      n.feature = static_cast<int>(integer());
      n.threshold = number();
      n.left = static_cast<int>(integer());
      n.right = static_cast<int>(integer());
      n.value = number();
      const bool leaf = n.feature < 0;
      if (!leaf && (n.left <= k || n.right <= k || n.left >= nodes || n.right >= nodes ||
                    static_cast<std::size_t>(n.feature) >= m.features))
        throw DataError("gbt dump: malformed node");
      tree.nodes.push_back(n);
    }
    if (tree.nodes.empty()) throw DataError("gbt dump: empty tree");
    m.trees.push_back(std::move(tree));
  }
  return m;
}

}  // namespace s2h
