#pragma once

// Central-difference gradient checking for the autodiff operators, shared by the unit
// tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "burnscar/autodiff.hpp"

namespace gradcheck {

using burnscar::ad::Shape;
using burnscar::ad::Tape;
using TD = burnscar::ad::Tensor<double>;
using Build = std::function<TD(Tape<double>*)>;

inline constexpr double kTolerance = 1e-4;
inline const Shape kImage{2, 3, 4, 4};

inline TD random_tensor(Shape shape, std::uint64_t seed, bool grad = true, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(burnscar::ad::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return TD(std::move(shape), std::move(v), grad);
}

inline TD random_targets(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.4);
  std::vector<double> v(burnscar::ad::shape_numel(shape));
  for (auto& x : v) x = coin(rng);
  return TD(std::move(shape), std::move(v));
}

/// Projects an output onto a fixed random direction so every output element carries
/// a distinct upstream gradient.
inline TD project(Tape<double>* tape, const TD& out) {
  const auto r = random_tensor(out.shape(), 999, false);
  return burnscar::ad::mean_all(tape, burnscar::ad::mul(tape, out, r));
}

/// Norm-relative error between analytic and central-difference gradients over `inputs`.
inline double gradient_error(const Build& build, std::vector<TD> inputs, double h = 1e-5) {
  for (auto& t : inputs) t.clear_grad();
  Tape<double> tape;
  TD loss = build(&tape);
  tape.backward(loss);
  double num = 0.0, den = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double keep = t.values()[i];
      t.values()[i] = keep + h;
      const double lp = build(nullptr).item();
      t.values()[i] = keep - h;
      const double lm = build(nullptr).item();
      t.values()[i] = keep;
      const double fd = (lp - lm) / (2.0 * h);
      num += (fd - analytic[i]) * (fd - analytic[i]);
      den += fd * fd + analytic[i] * analytic[i];
    }
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

struct Case {
  std::string name;
  Build build;
  std::vector<TD> inputs;
};

/// Every differentiable operator and loss on randomized small tensors.
inline std::vector<Case> cases() {
  using namespace burnscar::ad;
  std::vector<Case> out;
  const auto unary = [&](std::string name, std::uint64_t seed, auto op) {
    auto x = random_tensor(kImage, seed);
    out.push_back({std::move(name), [=](Tape<double>* t) { return project(t, op(t, x)); }, {x}});
  };
  const auto binary = [&](std::string name, std::uint64_t seed, auto op) {
    auto x = random_tensor(kImage, seed), y = random_tensor(kImage, seed + 1);
    out.push_back({std::move(name), [=](Tape<double>* t) { return project(t, op(t, x, y)); }, {x, y}});
  };

  {
    auto x = random_tensor(kImage, 10), w = random_tensor({2, 3, 3, 3}, 11), b = random_tensor({2}, 12);
    out.push_back({"conv2d 3x3 pad 1 bias", [=](Tape<double>* t) { return project(t, conv2d(t, x, w, b, 1, 1)); },
                   {x, w, b}});
  }
  {
    auto x = random_tensor(kImage, 13), w = random_tensor({4, 3, 3, 3}, 14);
    out.push_back({"conv2d stride 2", [=](Tape<double>* t) { return project(t, conv2d(t, x, w, TD(), 2, 1)); },
                   {x, w}});
  }
  {
    auto x = random_tensor(kImage, 15), w = random_tensor({5, 3, 1, 1}, 16), b = random_tensor({5}, 17);
    out.push_back({"conv2d 1x1", [=](Tape<double>* t) { return project(t, conv2d(t, x, w, b)); }, {x, w, b}});
  }
  {
    auto x = random_tensor(kImage, 20), g = random_tensor({3}, 21, true, 0.5, 1.5), b = random_tensor({3}, 22);
    out.push_back({"batch_norm train",
                   [=](Tape<double>* t) {
                     TD rm({3}), rv({3}, std::vector<double>(3, 1.0));
                     return project(t, batch_norm(t, x, g, b, rm, rv, true));
                   },
                   {x, g, b}});
  }
  {
    auto x = random_tensor(kImage, 23), g = random_tensor({3}, 24), b = random_tensor({3}, 25);
    TD rm({3}, {0.1, 0.2, -0.1}), rv({3}, {0.5, 1.5, 2.0});
    out.push_back({"batch_norm eval",
                   [=](Tape<double>* t) mutable { return project(t, batch_norm(t, x, g, b, rm, rv, false)); },
                   {x, g, b}});
  }
  unary("relu", 30, [](Tape<double>* t, const TD& x) { return relu(t, x); });
  unary("sigmoid", 31, [](Tape<double>* t, const TD& x) { return sigmoid(t, x); });
  binary("add", 32, [](Tape<double>* t, const TD& x, const TD& y) { return add(t, x, y); });
  binary("mul", 34, [](Tape<double>* t, const TD& x, const TD& y) { return mul(t, x, y); });
  binary("maximum", 36, [](Tape<double>* t, const TD& x, const TD& y) { return maximum(t, x, y); });
  unary("max_pool2x2", 40, [](Tape<double>* t, const TD& x) { return max_pool2x2(t, x); });
  unary("global_avg_pool", 41, [](Tape<double>* t, const TD& x) { return global_avg_pool(t, x); });
  unary("upsample_bilinear2x", 42, [](Tape<double>* t, const TD& x) { return upsample_bilinear2x(t, x); });
  unary("reshape", 43, [](Tape<double>* t, const TD& x) { return reshape(t, x, {6, 16}); });
  unary("mean_all", 44, [](Tape<double>* t, const TD& x) { return mean_all(t, x); });
  {
    auto x = random_tensor(kImage, 50), y = random_tensor({2, 2, 4, 4}, 51);
    out.push_back({"concat_channels", [=](Tape<double>* t) { return project(t, concat_channels<double>(t, {x, y, x})); },
                   {x, y}});
  }
  {
    auto a = random_tensor({2, 3}, 60), b = random_tensor({3, 4}, 61), bias = random_tensor({4}, 62);
    out.push_back({"matmul + add_bias", [=](Tape<double>* t) { return project(t, add_bias(t, matmul(t, a, b), bias)); },
                   {a, b, bias}});
  }
  {
    auto x = random_tensor(kImage, 63), cb = random_tensor({3}, 64);
    out.push_back({"add_bias rank 4", [=](Tape<double>* t) { return project(t, add_bias(t, x, cb)); }, {x, cb}});
  }
  {
    auto x = random_tensor(kImage, 70), cs = random_tensor({2, 3, 1, 1}, 71), ss = random_tensor({2, 1, 4, 4}, 72);
    out.push_back({"broadcast_mul channel", [=](Tape<double>* t) { return project(t, broadcast_mul(t, x, cs)); },
                   {x, cs}});
    out.push_back({"broadcast_mul spatial", [=](Tape<double>* t) { return project(t, broadcast_mul(t, x, ss)); },
                   {x, ss}});
  }
  {
    auto p = random_tensor(kImage, 80, true, 0.05, 0.95);
    const auto y = random_targets(kImage, 81);
    out.push_back({"loss_bce", [=](Tape<double>* t) { return loss_bce(t, p, y); }, {p}});
    out.push_back({"loss_focal a=0.25 g=2", [=](Tape<double>* t) { return loss_focal(t, p, y, 0.25, 2.0); }, {p}});
    out.push_back({"loss_focal a=0.7 g=0.5", [=](Tape<double>* t) { return loss_focal(t, p, y, 0.7, 0.5); }, {p}});
    out.push_back({"loss_dice", [=](Tape<double>* t) { return loss_dice(t, p, y); }, {p}});
    out.push_back({"loss_bce_dice", [=](Tape<double>* t) { return loss_bce_dice(t, p, y); }, {p}});
  }
  {
    auto z = random_tensor(kImage, 82, true, -3.0, 3.0);
    const auto y = random_targets(kImage, 83);
    out.push_back({"loss_bce_dice through sigmoid", [=](Tape<double>* t) { return loss_bce_dice(t, sigmoid(t, z), y); },
                   {z}});
  }
  return out;
}

}  // namespace gradcheck
