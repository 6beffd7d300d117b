#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "burnscar/archive.hpp"
#include "burnscar/classical.hpp"
#include "burnscar/error.hpp"
#include "burnscar/rng.hpp"

namespace burnscar {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<const Mat>;
using Vec = Eigen::VectorXd;

constexpr double kClamp = 1e-7;

MatMap weight(const MlpModel& m, std::size_t l) {
  return MatMap(m.weights[l].data(), m.widths[l + 1], m.widths[l]);
}

Mat standardize(const MlpModel& m, const FeatureMatrix& data, std::size_t begin, std::size_t end,
                const std::vector<std::size_t>* order = nullptr) {
  const auto d = static_cast<Eigen::Index>(data.cols);
  Mat x(static_cast<Eigen::Index>(end - begin), d);
  for (std::size_t r = begin; r < end; ++r) {
    const std::size_t src = order ? (*order)[r] : r;
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      x(static_cast<Eigen::Index>(r - begin), c) =
          (data.values[src * data.cols + cu] - m.input_mean[cu]) / m.input_scale[cu];
    }
  }
  return x;
}

struct Forward {
  std::vector<Mat> z;  ///< pre-activations per layer
  std::vector<Mat> a;  ///< a[0] = input, a[l+1] = activation of layer l
};

Forward forward(const MlpModel& m, Mat x) {
  Forward f;
  const std::size_t layers = m.weights.size();
  f.a.push_back(std::move(x));
  for (std::size_t l = 0; l < layers; ++l) {
    const Eigen::Map<const Vec> b(m.biases[l].data(), m.widths[l + 1]);
    Mat z = f.a.back() * weight(m, l).transpose();
    z.rowwise() += b.transpose();
    Mat a = l + 1 < layers ? Mat(z.cwiseMax(0.0)) : Mat((1.0 + (-z.array()).exp()).inverse().matrix());
    f.z.push_back(std::move(z));
    f.a.push_back(std::move(a));
  }
  return f;
}

double bce(double p, double y) {
  const double pc = std::clamp(p, kClamp, 1.0 - kClamp);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

/// Loss and gradient over rows [begin, end) of `order` (identity when null).
MlpGradient loss_and_gradient(const MlpModel& m, const FeatureMatrix& data, std::size_t begin,
                              std::size_t end, const std::vector<std::size_t>* order) {
  const Forward f = forward(m, standardize(m, data, begin, end, order));
  const std::size_t layers = m.weights.size();
  const auto n = static_cast<double>(end - begin);
  const Mat& p = f.a.back();

  MlpGradient g;
  Mat dz(p.rows(), 1);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const std::size_t src = order ? (*order)[begin + static_cast<std::size_t>(r)] : begin + static_cast<std::size_t>(r);
    const double y = data.labels[src];
    const double pr = p(r, 0);
    g.loss += bce(pr, y);
    dz(r, 0) = (pr > kClamp && pr < 1.0 - kClamp) ? (pr - y) / n : 0.0;
  }
  g.loss /= n;

  g.weights.resize(layers);
  g.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    const Mat dw = dz.transpose() * f.a[l];
    const Vec db = dz.colwise().sum().transpose();
    g.weights[l].assign(dw.data(), dw.data() + dw.size());
    g.biases[l].assign(db.data(), db.data() + db.size());
    if (l > 0) {
      const Mat da = dz * weight(m, l);
      dz = (da.array() * (f.z[l - 1].array() > 0.0).cast<double>()).matrix();
    }
  }
  return g;
}

}  // namespace

void MlpParams::validate() const {
  for (int h : hidden) {
    if (h < 1) throw ConfigError(fmt::format("mlp hidden width must be >= 1, got {}", h));
  }
  if (epochs < 0) throw ConfigError("mlp epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("mlp batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("mlp learning_rate must be > 0");
}

void MlpModel::validate() const {
  if (widths.size() < 2 || widths.back() != 1) throw ShapeError("mlp widths must have >= 2 entries ending in 1");
  if (weights.size() != widths.size() - 1 || biases.size() != weights.size()) {
    throw ShapeError("mlp layer count does not match widths");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (widths[l] < 1 ||
        weights[l].size() != static_cast<std::size_t>(widths[l]) * static_cast<std::size_t>(widths[l + 1]) ||
        biases[l].size() != static_cast<std::size_t>(widths[l + 1])) {
      throw ShapeError(fmt::format("mlp layer {} does not match widths {} -> {}", l, widths[l], widths[l + 1]));
    }
  }
  if (input_mean.size() != n_features() || input_scale.size() != n_features()) {
    throw ShapeError("mlp standardization vectors do not match the input width");
  }
}

MlpModel mlp_init(std::size_t n_features, const std::vector<int>& hidden, std::uint64_t seed) {
  MlpModel m;
  m.widths.push_back(static_cast<int>(n_features));
  m.widths.insert(m.widths.end(), hidden.begin(), hidden.end());
  m.widths.push_back(1);
  Rng rng(derive_seed(seed, "mlp-init"));
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / m.widths[l]));
    std::vector<double> w(static_cast<std::size_t>(m.widths[l]) * static_cast<std::size_t>(m.widths[l + 1]));
    for (auto& v : w) v = he(rng);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(static_cast<std::size_t>(m.widths[l + 1]), 0.0);
  }
  m.input_mean.assign(n_features, 0.0);
  m.input_scale.assign(n_features, 1.0);
  return m;
}

MlpGradient mlp_loss_and_gradient(const MlpModel& model, const FeatureMatrix& data) {
  model.validate();
  if (data.cols != model.n_features()) throw ShapeError("feature matrix width differs from the mlp input");
  return loss_and_gradient(model, data, 0, data.rows, nullptr);
}

MlpFit mlp_fit(const FeatureMatrix& data, const MlpParams& params, std::uint64_t seed) {
  params.validate();
  if (data.rows == 0 || data.cols == 0) throw DataError("classifier training set is empty");
  for (double v : data.values) {
    if (!std::isfinite(v)) throw DataError("mlp features must be finite");
  }
  MlpFit fit{mlp_init(data.cols, params.hidden, seed), {}};
  MlpModel& m = fit.model;
  for (std::size_t c = 0; c < data.cols; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < data.rows; ++r) mean += data.values[r * data.cols + c];
    mean /= static_cast<double>(data.rows);
    for (std::size_t r = 0; r < data.rows; ++r) {
      const double d = data.values[r * data.cols + c] - mean;
      sq += d * d;
    }
    const double sd = std::sqrt(sq / static_cast<double>(data.rows));
    m.input_mean[c] = mean;
    m.input_scale[c] = sd > 1e-12 ? sd : 1.0;
  }

  std::vector<std::vector<double>> mw, vw, mb, vb;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    mw.emplace_back(m.weights[l].size(), 0.0);
    vw.emplace_back(m.weights[l].size(), 0.0);
    mb.emplace_back(m.biases[l].size(), 0.0);
    vb.emplace_back(m.biases[l].size(), 0.0);
  }
  auto adam = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& mm,
                  std::vector<double>& vv, double c1, double c2) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      mm[i] = params.beta1 * mm[i] + (1.0 - params.beta1) * g[i];
      vv[i] = params.beta2 * vv[i] + (1.0 - params.beta2) * g[i] * g[i];
      p[i] -= params.learning_rate * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + params.epsilon);
    }
  };

  Rng rng(derive_seed(seed, "mlp-shuffle"));
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(params.batch_size);
  long step = 0;
  for (int epoch = 1; epoch <= params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < data.rows; b += batch) {
      const auto g = loss_and_gradient(m, data, b, std::min(b + batch, data.rows), &order);
      if (!std::isfinite(g.loss)) throw DivergenceError(epoch);
      ++step;
      const double c1 = 1.0 - std::pow(params.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(params.beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < m.weights.size(); ++l) {
        adam(m.weights[l], g.weights[l], mw[l], vw[l], c1, c2);
        adam(m.biases[l], g.biases[l], mb[l], vb[l], c1, c2);
      }
    }
    const double loss = loss_and_gradient(m, data, 0, data.rows, nullptr).loss;
    if (!std::isfinite(loss)) throw DivergenceError(epoch);
    fit.loss_trace.push_back(loss);
  }
  return fit;
}

double mlp_predict(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.n_features()) {
    throw ShapeError(fmt::format("mlp expects {} features, got {}", model.n_features(), x.size()));
  }
  Mat row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t c = 0; c < x.size(); ++c) {
    row(0, static_cast<Eigen::Index>(c)) = (x[c] - model.input_mean[c]) / model.input_scale[c];
  }
  return forward(model, std::move(row)).a.back()(0, 0);
}

std::vector<double> predict_rows(const MlpModel& model, const FeatureMatrix& data) {
  if (data.cols != model.n_features()) {
    throw ShapeError(fmt::format("mlp expects {} features, got {}", model.n_features(), data.cols));
  }
  std::vector<double> out(data.rows);
  constexpr std::size_t kChunk = 4096;
  for (std::size_t b = 0; b < data.rows; b += kChunk) {
    const std::size_t e = std::min(b + kChunk, data.rows);
    const Forward f = forward(model, standardize(model, data, b, e));
    for (std::size_t r = b; r < e; ++r) out[r] = f.a.back()(static_cast<Eigen::Index>(r - b), 0);
  }
  return out;
}

void save_mlp(const MlpModel& model, const std::filesystem::path& path) {
  model.validate();
  ParamArchive a("mlp");
  std::vector<std::int64_t> widths(model.widths.begin(), model.widths.end());
  a.put("widths", {widths.size()}, std::span<const std::int64_t>(widths));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    a.put(fmt::format("w{}", l),
          {static_cast<std::uint64_t>(model.widths[l + 1]), static_cast<std::uint64_t>(model.widths[l])},
          std::span<const double>(model.weights[l]));
    a.put(fmt::format("b{}", l), {model.biases[l].size()}, std::span<const double>(model.biases[l]));
  }
  a.put("input_mean", {model.input_mean.size()}, std::span<const double>(model.input_mean));
  a.put("input_scale", {model.input_scale.size()}, std::span<const double>(model.input_scale));
  a.save(path);
}

MlpModel load_mlp(const std::filesystem::path& path) {
  const auto a = ParamArchive::load(path, "mlp");
  MlpModel m;
  for (auto w : a.get_i64("widths")) m.widths.push_back(static_cast<int>(w));
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    m.weights.push_back(a.get_f64(fmt::format("w{}", l)));
    m.biases.push_back(a.get_f64(fmt::format("b{}", l)));
  }
  m.input_mean = a.get_f64("input_mean");
  m.input_scale = a.get_f64("input_scale");
  try {
    m.validate();
  } catch (const ShapeError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()), 0);
  }
  return m;
}

}  // namespace burnscar
