#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "burnscar/features.hpp"

namespace burnscar {

// ---------------------------------------------------------------- random forest

struct ForestParams {
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 2;
  /// Features tried per split; 0 means ceil(sqrt(d)).
  int max_features = 0;
  bool bootstrap = true;
  /// Worker threads for tree fitting; 0 means hardware concurrency.
  int threads = 0;

  void validate() const;
};

/// Internal nodes have feature >= 0 and send x[feature] <= split to the left child.
struct TreeNode {
  std::int32_t feature = -1;
  double split = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double burnt_fraction = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  ///< nodes[0] is the root

  double predict(std::span<const double> x) const;
  int depth() const;
};

struct RandomForestModel {
  ForestParams params;
  std::size_t n_features = 0;
  std::vector<DecisionTree> trees;
  /// Normalized total Gini decrease per feature; all zero when no tree split.
  std::vector<double> feature_importances;
};

/// Throws DataError on empty input, a single class, or a labels/rows mismatch.
RandomForestModel rf_fit(const FeatureMatrix& data, const ForestParams& params, std::uint64_t seed);
/// Mean leaf burnt fraction over the trees. Throws ShapeError on a length mismatch.
double rf_predict(const RandomForestModel& model, std::span<const double> x);

void save_forest(const RandomForestModel& model, const std::filesystem::path& path);
RandomForestModel load_forest(const std::filesystem::path& path);

// ---------------------------------------------------------------- MLP

struct MlpParams {
  std::vector<int> hidden = {128, 64};
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Fully connected network: ReLU hidden layers, logistic output. Inputs are
/// standardized with the stored mean and scale before the first layer.
struct MlpModel {
  std::vector<int> widths;  ///< d, hidden..., 1
  /// weights[l] is widths[l+1] x widths[l], row-major.
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<double> input_mean;
  std::vector<double> input_scale;

  std::size_t n_features() const noexcept { return widths.empty() ? 0 : static_cast<std::size_t>(widths[0]); }
  /// Throws ShapeError when layer dimensions are inconsistent.
  void validate() const;
};

/// He-initialized network with identity standardization.
MlpModel mlp_init(std::size_t n_features, const std::vector<int>& hidden, std::uint64_t seed);

struct MlpGradient {
  double loss = 0.0;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

/// Mean clamped BCE over the rows of `data` and its gradient. Rows are standardized
/// with the model's statistics.
MlpGradient mlp_loss_and_gradient(const MlpModel& model, const FeatureMatrix& data);

struct MlpFit {
  MlpModel model;
  std::vector<double> loss_trace;  ///< mean training loss per epoch
};

/// Standardizes on `data`, then runs mini-batch Adam. Throws DivergenceError on a
/// non-finite epoch loss and DataError on non-finite features.
MlpFit mlp_fit(const FeatureMatrix& data, const MlpParams& params, std::uint64_t seed);
double mlp_predict(const MlpModel& model, std::span<const double> x);

void save_mlp(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_mlp(const std::filesystem::path& path);

// ---------------------------------------------------------------- shared

/// Burnt probability for every row of `data`.
std::vector<double> predict_rows(const RandomForestModel& model, const FeatureMatrix& data);
std::vector<double> predict_rows(const MlpModel& model, const FeatureMatrix& data);

}  // namespace burnscar
