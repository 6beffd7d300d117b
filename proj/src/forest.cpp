#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "burnscar/archive.hpp"
#include "burnscar/classical.hpp"
#include "burnscar/error.hpp"
#include "burnscar/rng.hpp"

namespace burnscar {

void ForestParams::validate() const {
  if (n_trees < 1) throw ConfigError(fmt::format("rf n_trees must be >= 1, got {}", n_trees));
  if (max_depth < 0) throw ConfigError(fmt::format("rf max_depth must be >= 0, got {}", max_depth));
  if (min_leaf < 1) throw ConfigError(fmt::format("rf min_leaf must be >= 1, got {}", min_leaf));
  if (max_features < 0) throw ConfigError("rf max_features must be >= 0");
  if (threads < 0) throw ConfigError("rf threads must be >= 0");
}

double DecisionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.split ? n.left : n.right);
  }
  return nodes[i].burnt_fraction;
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) continue;
    d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
    d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

namespace {

struct SplitChoice {
  int feature = -1;
  double value = 0.0;
  double decrease = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& data, const ForestParams& p, std::size_t mtry, std::uint64_t seed)
      : data_(data), p_(p), mtry_(mtry), rng_(seed), importance_(data.cols, 0.0) {
    features_.resize(data.cols);
    std::iota(features_.begin(), features_.end(), 0);
  }

  DecisionTree build() {
    const std::size_t n = data_.rows;
    std::vector<std::size_t> idx(n);
    if (p_.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& i : idx) i = pick(rng_);
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    grow(idx, 0);
    return std::move(tree_);
  }

  const std::vector<double>& importance() const noexcept { return importance_; }

 private:
  static double gini(double pos, double n) {
    if (n <= 0) return 0.0;
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
  }

  std::int32_t grow(std::vector<std::size_t>& idx, int depth) {
    const auto node = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const double n = static_cast<double>(idx.size());
    double pos = 0;
    for (auto i : idx) pos += data_.labels[i];
    tree_.nodes[static_cast<std::size_t>(node)].burnt_fraction = pos / n;

    const auto min_leaf = static_cast<std::size_t>(p_.min_leaf);
    if (depth >= p_.max_depth || idx.size() < 2 * min_leaf || pos == 0 || pos == n) return node;

    const SplitChoice best = find_split(idx, pos);
    if (best.feature < 0) return node;
    importance_[static_cast<std::size_t>(best.feature)] += best.decrease;

    const auto mid = std::partition(idx.begin(), idx.end(), [&](std::size_t i) {
      return data_.values[i * data_.cols + static_cast<std::size_t>(best.feature)] <= best.value;
    });
    std::vector<std::size_t> left(idx.begin(), mid), right(mid, idx.end());
    idx.clear();
    idx.shrink_to_fit();

    const auto l = grow(left, depth + 1);
    const auto r = grow(right, depth + 1);
    auto& nd = tree_.nodes[static_cast<std::size_t>(node)];
    nd.feature = best.feature;
    nd.split = best.value;
    nd.left = l;
    nd.right = r;
    return node;
  }

  SplitChoice find_split(const std::vector<std::size_t>& idx, double pos) {
    // Partial Fisher-Yates: the first mtry entries become the candidate subset.
    for (std::size_t k = 0; k < mtry_; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, features_.size() - 1);
      std::swap(features_[k], features_[pick(rng_)]);
    }
    const double n = static_cast<double>(idx.size());
    const double parent = n * gini(pos, n);
    const auto min_leaf = static_cast<std::size_t>(p_.min_leaf);

    SplitChoice best;
    std::vector<std::pair<double, std::uint8_t>> col(idx.size());
    for (std::size_t k = 0; k < mtry_; ++k) {
      const std::size_t f = features_[k];
      for (std::size_t j = 0; j < idx.size(); ++j) {
        col[j] = {data_.values[idx[j] * data_.cols + f], data_.labels[idx[j]]};
      }
      std::sort(col.begin(), col.end());
      double left_pos = 0;
      for (std::size_t j = 1; j < col.size(); ++j) {
        left_pos += col[j - 1].second;
        if (j < min_leaf || col.size() - j < min_leaf) continue;
        if (!(col[j - 1].first < col[j].first)) continue;
        const double nl = static_cast<double>(j);
        const double nr = n - nl;
        const double dec = parent - nl * gini(left_pos, nl) - nr * gini(pos - left_pos, nr);
        if (dec > best.decrease) {
          best.feature = static_cast<int>(f);
          best.value = 0.5 * (col[j - 1].first + col[j].first);
          // Guard against the midpoint rounding up onto the right value.
          if (!(best.value < col[j].first)) best.value = col[j - 1].first;
          best.decrease = dec;
        }
      }
    }
    return best;
  }

  const FeatureMatrix& data_;
  const ForestParams& p_;
  std::size_t mtry_;
  Rng rng_;
  std::vector<std::size_t> features_;
  std::vector<double> importance_;
  DecisionTree tree_;
};

void check_matrix(const FeatureMatrix& data) {
  if (data.rows == 0 || data.cols == 0) throw DataError("classifier training set is empty");
  if (data.labels.size() != data.rows || data.values.size() != data.rows * data.cols) {
    throw ShapeError(fmt::format("feature matrix {}x{} has {} values and {} labels", data.rows, data.cols,
                                 data.values.size(), data.labels.size()));
  }
  std::size_t pos = 0;
  for (auto l : data.labels) pos += l != 0;
  if (pos == 0 || pos == data.rows) {
    throw DataError("classifier training set holds a single class; the model would be degenerate");
  }
  for (double v : data.values) {
    if (!std::isfinite(v)) throw DataError("classifier features must be finite");
  }
}

}  // namespace

RandomForestModel rf_fit(const FeatureMatrix& data, const ForestParams& params, std::uint64_t seed) {
  params.validate();
  check_matrix(data);
  const std::size_t mtry =
      params.max_features > 0
          ? std::min<std::size_t>(static_cast<std::size_t>(params.max_features), data.cols)
          : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(data.cols))));

  RandomForestModel model;
  model.params = params;
  model.n_features = data.cols;
  const auto n_trees = static_cast<std::size_t>(params.n_trees);
  model.trees.resize(n_trees);
  std::vector<std::vector<double>> importance(n_trees);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n_trees; t = next++) {
      TreeBuilder b(data, params, mtry, derive_seed(seed, "rf-tree", t));
      model.trees[t] = b.build();
      importance[t] = b.importance();
    }
  };
  std::size_t threads = params.threads > 0 ? static_cast<std::size_t>(params.threads)
                                           : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n_trees);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  model.feature_importances.assign(data.cols, 0.0);
  for (const auto& imp : importance) {
    for (std::size_t f = 0; f < data.cols; ++f) model.feature_importances[f] += imp[f];
  }
  const double total = std::accumulate(model.feature_importances.begin(), model.feature_importances.end(), 0.0);
  if (total > 0) {
    for (auto& v : model.feature_importances) v /= total;
  }
  return model;
}

double rf_predict(const RandomForestModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) {
    throw ShapeError(fmt::format("forest expects {} features, got {}", model.n_features, x.size()));
  }
  double sum = 0.0;
  for (const auto& t : model.trees) sum += t.predict(x);
  return sum / static_cast<double>(model.trees.size());
}

std::vector<double> predict_rows(const RandomForestModel& model, const FeatureMatrix& data) {
  std::vector<double> out(data.rows);
  for (std::size_t i = 0; i < data.rows; ++i) out[i] = rf_predict(model, data.row(i));
  return out;
}

void save_forest(const RandomForestModel& model, const std::filesystem::path& path) {
  ParamArchive a("rf");
  const auto& p = model.params;
  const std::vector<std::int64_t> meta{static_cast<std::int64_t>(model.n_features), p.n_trees, p.max_depth,
                                       p.min_leaf, p.max_features, p.bootstrap ? 1 : 0};
  a.put("meta", {meta.size()}, std::span<const std::int64_t>(meta));
  std::vector<std::int64_t> offsets{0}, feature, left, right;
  std::vector<double> split, value;
  for (const auto& t : model.trees) {
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      left.push_back(n.left);
      right.push_back(n.right);
      split.push_back(n.split);
      value.push_back(n.burnt_fraction);
    }
    offsets.push_back(static_cast<std::int64_t>(feature.size()));
  }
  a.put("tree_offsets", {offsets.size()}, std::span<const std::int64_t>(offsets));
  a.put("node_feature", {feature.size()}, std::span<const std::int64_t>(feature));
  a.put("node_split", {split.size()}, std::span<const double>(split));
  a.put("node_left", {left.size()}, std::span<const std::int64_t>(left));
  a.put("node_right", {right.size()}, std::span<const std::int64_t>(right));
  a.put("node_value", {value.size()}, std::span<const double>(value));
  a.put("importances", {model.feature_importances.size()},
        std::span<const double>(model.feature_importances));
  a.save(path);
}

RandomForestModel load_forest(const std::filesystem::path& path) {
  const auto a = ParamArchive::load(path, "rf");
  const auto meta = a.get_i64("meta");
  if (meta.size() != 6) throw FormatError("rf meta block must hold 6 values", 0);
  RandomForestModel m;
  m.n_features = static_cast<std::size_t>(meta[0]);
  m.params.n_trees = static_cast<int>(meta[1]);
  m.params.max_depth = static_cast<int>(meta[2]);
  m.params.min_leaf = static_cast<int>(meta[3]);
  m.params.max_features = static_cast<int>(meta[4]);
  m.params.bootstrap = meta[5] != 0;
  const auto offsets = a.get_i64("tree_offsets");
  const auto feature = a.get_i64("node_feature");
  const auto split = a.get_f64("node_split");
  const auto left = a.get_i64("node_left");
  const auto right = a.get_i64("node_right");
  const auto value = a.get_f64("node_value");
  const std::size_t total = feature.size();
  if (split.size() != total || left.size() != total || right.size() != total || value.size() != total ||
      offsets.empty() || static_cast<std::size_t>(offsets.back()) != total) {
    throw FormatError("rf node blocks have inconsistent lengths", 0);
  }
  for (std::size_t t = 0; t + 1 < offsets.size(); ++t) {
    DecisionTree tree;
    const auto lo = static_cast<std::size_t>(offsets[t]), hi = static_cast<std::size_t>(offsets[t + 1]);
    for (std::size_t i = lo; i < hi; ++i) {
      TreeNode n;
      n.feature = static_cast<std::int32_t>(feature[i]);
      n.split = split[i];
      n.left = static_cast<std::int32_t>(left[i]);
      n.right = static_cast<std::int32_t>(right[i]);
      n.burnt_fraction = value[i];
      const auto size = static_cast<std::int64_t>(hi - lo);
      if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size ||
                           static_cast<std::size_t>(n.feature) >= m.n_features)) {
        throw FormatError(fmt::format("rf tree {} node {} is malformed", t, i - lo), 0);
      }
      tree.nodes.push_back(n);
    }
    m.trees.push_back(std::move(tree));
  }
  m.feature_importances = a.get_f64("importances");
  return m;
}

}  // namespace burnscar
