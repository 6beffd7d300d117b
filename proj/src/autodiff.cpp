#include "burnscar/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "burnscar/error.hpp"

namespace burnscar::ad {

std::string shape_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ",")); }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---------------------------------------------------------------- Tensor / Tape

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : s_(std::make_shared<Storage>()) {
  s_->values.assign(shape_numel(shape), T(0));
  s_->shape = std::move(shape);
  s_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) : s_(std::make_shared<Storage>()) {
  if (values.size() != shape_numel(shape)) {
    throw ShapeError(fmt::format("tensor of shape {} needs {} values, got {}", shape_string(shape),
                                 shape_numel(shape), values.size()));
  }
  s_->shape = std::move(shape);
  s_->values.assign(values.begin(), values.end());
  s_->requires_grad = requires_grad;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError(fmt::format("item() on tensor of shape {}", shape_string(shape())));
  return s_->values[0];
}

template <typename T>
std::span<T> Tensor<T>::grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->values.size(), T(0));
  return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor<T> t;
  t.s_ = std::make_shared<Storage>(*s_);
  return t;
}

template <typename T>
void Tape<T>::record(const Tensor<T>& output, BackwardFn fn) {
  records_.push_back({output, std::move(fn)});
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError(fmt::format("backward needs a one-element loss, got {}",
                                 loss.defined() ? shape_string(loss.shape()) : "undefined"));
  }
  for (auto& r : records_) r.output.clear_grad();
  loss.grad()[0] += T(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output.has_grad()) it->fn();
  }
}

namespace {

template <typename T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<MatT<T>>;
template <typename T>
using CMap = Eigen::Map<const MatT<T>>;

template <typename T>
bool tracks(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const auto* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> output(Shape shape, bool track) {
  return Tensor<T>(std::move(shape), track);
}

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeError(fmt::format("{}: {}", op, detail));
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op, const char* name) {
  require(x.defined(), op, fmt::format("{} is undefined", name));
  require(x.rank() == rank, op, fmt::format("{} must have rank {}, got shape {}", name, rank, shape_string(x.shape())));
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.defined() && b.defined(), op, "undefined operand");
  require(a.shape() == b.shape(), op,
          fmt::format("operand shapes differ: {} vs {}", shape_string(a.shape()), shape_string(b.shape())));
}

template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t K, std::size_t s, std::size_t p,
            std::size_t Ho, std::size_t Wo, T* cols) {
  const auto pi = static_cast<std::ptrdiff_t>(p);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < K; ++ki) {
      for (std::size_t kj = 0; kj < K; ++kj) {
        T* dst = cols + ((c * K + ki) * K + kj) * Ho * Wo;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * s + ki) - pi;
          T* row = dst + oh * Wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(row, row + Wo, T(0));
            continue;
          }
          const T* src = x + (c * H + static_cast<std::size_t>(ih)) * W;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * s + kj) - pi;
            row[ow] = (iw >= 0 && iw < static_cast<std::ptrdiff_t>(W)) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t K, std::size_t s,
            std::size_t p, std::size_t Ho, std::size_t Wo, T* dx) {
  const auto pi = static_cast<std::ptrdiff_t>(p);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < K; ++ki) {
      for (std::size_t kj = 0; kj < K; ++kj) {
        const T* src = cols + ((c * K + ki) * K + kj) * Ho * Wo;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * s + ki) - pi;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          T* row = dx + (c * H + static_cast<std::size_t>(ih)) * W;
          const T* g = src + oh * Wo;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * s + kj) - pi;
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(W)) row[iw] += g[ow];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- conv2d

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                 int padding) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  require(stride >= 1 && padding >= 0, "conv2d", fmt::format("stride {} / padding {} invalid", stride, padding));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  require(w.dim(1) == C, "conv2d",
          fmt::format("input has {} channels, weight {} expects {}", C, shape_string(w.shape()), w.dim(1)));
  require(w.dim(3) == K, "conv2d", fmt::format("kernel must be square, got {}", shape_string(w.shape())));
  const auto s = static_cast<std::size_t>(stride), p = static_cast<std::size_t>(padding);
  require(H + 2 * p >= K && W + 2 * p >= K, "conv2d",
          fmt::format("kernel {} larger than padded input {}", K, shape_string(x.shape())));
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == O, "conv2d",
            fmt::format("bias shape {} does not match {} output channels", shape_string(bias.shape()), O));
  }
  const std::size_t Ho = (H + 2 * p - K) / s + 1, Wo = (W + 2 * p - K) / s + 1;
  const std::size_t ckk = C * K * K, hw = Ho * Wo;
  const bool direct = K == 1 && s == 1 && p == 0;
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

  const bool track = tracks(tape, {&x, &w, &bias});
  Tensor<T> out = output<T>({N, O, Ho, Wo}, track);
  CMap<T> wm(w.data(), ei(O), ei(ckk));
  MatT<T> cols(direct ? 0 : ei(ckk), direct ? 0 : ei(hw));
  for (std::size_t n = 0; n < N; ++n) {
    Map<T> yn(out.data() + n * O * hw, ei(O), ei(hw));
    const T* xn = x.data() + n * C * H * W;
    if (direct) {
      yn.noalias() = wm * CMap<T>(xn, ei(C), ei(hw));
    } else {
      im2col(xn, C, H, W, K, s, p, Ho, Wo, cols.data());
      yn.noalias() = wm * cols;
    }
    if (bias.defined()) yn.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.data(), ei(O));
  }

  if (track) {
    tape->record(out, [=]() mutable {
      MatT<T> colbuf(direct ? 0 : ei(ckk), direct ? 0 : ei(hw));
      MatT<T> dcols;
      CMap<T> wmat(w.data(), ei(O), ei(ckk));
      for (std::size_t n = 0; n < N; ++n) {
        CMap<T> dy(out.grad().data() + n * O * hw, ei(O), ei(hw));
        const T* xn = x.data() + n * C * H * W;
        if (w.requires_grad()) {
          Map<T> dw(w.grad().data(), ei(O), ei(ckk));
          if (direct) {
            dw.noalias() += dy * CMap<T>(xn, ei(C), ei(hw)).transpose();
          } else {
            im2col(xn, C, H, W, K, s, p, Ho, Wo, colbuf.data());
            dw.noalias() += dy * colbuf.transpose();
          }
        }
        if (x.requires_grad()) {
          T* dxn = x.grad().data() + n * C * H * W;
          if (direct) {
            Map<T>(dxn, ei(C), ei(hw)).noalias() += wmat.transpose() * dy;
          } else {
            dcols.noalias() = wmat.transpose() * dy;
            col2im(dcols.data(), C, H, W, K, s, p, Ho, Wo, dxn);
          }
        }
        if (bias.defined() && bias.requires_grad()) {
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.grad().data(), ei(O)) += dy.rowwise().sum();
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- batch norm

template <typename T>
Tensor<T> batch_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training, double momentum,
                     double eps) {
  require(x.defined() && x.rank() >= 2, "batch_norm", "input must have rank >= 2");
  const std::size_t N = x.dim(0), C = x.dim(1), S = x.numel() / (N * C);
  for (const Tensor<T>* t : {&gamma, &beta, static_cast<const Tensor<T>*>(&running_mean), static_cast<const Tensor<T>*>(&running_var)}) {
    require(t->defined() && t->rank() == 1 && t->dim(0) == C, "batch_norm",
            fmt::format("parameter shape must be [{}]", C));
  }
  const std::size_t M = N * S;
  require(!training || M > 1, "batch_norm", "training mode needs more than one value per channel");

  std::vector<double> inv_std(C);
  std::vector<T> xhat(x.numel());
  const bool track = tracks(tape, {&x, &gamma, &beta});
  Tensor<T> out = output<T>(x.shape(), track);
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* src = x.data() + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) sum += src[i];
      }
      mean = sum / static_cast<double>(M);
      double sq = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* src = x.data() + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) {
          const double d = src[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(M);
      running_mean.values()[c] = static_cast<T>((1.0 - momentum) * running_mean.values()[c] + momentum * mean);
      running_var.values()[c] = static_cast<T>((1.0 - momentum) * running_var.values()[c] +
                                               momentum * var * static_cast<double>(M) / static_cast<double>(M - 1));
    } else {
      mean = running_mean.values()[c];
      var = running_var.values()[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    const double g = gamma.values()[c], b = beta.values()[c];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        const double xh = (x.values()[base + i] - mean) * inv_std[c];
        xhat[base + i] = static_cast<T>(xh);
        out.values()[base + i] = static_cast<T>(g * xh + b);
      }
    }
  }

  if (track) {
    tape->record(out, [=, xhat = std::move(xhat), inv_std = std::move(inv_std)]() mutable {
      const auto dy = out.grad();
      for (std::size_t c = 0; c < C; ++c) {
        double sdy = 0.0, sdyx = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = (n * C + c) * S;
          for (std::size_t i = 0; i < S; ++i) {
            sdy += dy[base + i];
            sdyx += static_cast<double>(dy[base + i]) * xhat[base + i];
          }
        }
        if (gamma.requires_grad()) gamma.grad()[c] += static_cast<T>(sdyx);
        if (beta.requires_grad()) beta.grad()[c] += static_cast<T>(sdy);
        if (!x.requires_grad()) continue;
        auto dx = x.grad();
        const double k = gamma.values()[c] * inv_std[c];
        const double mdy = sdy / static_cast<double>(M), mdyx = sdyx / static_cast<double>(M);
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = (n * C + c) * S;
          for (std::size_t i = 0; i < S; ++i) {
            const double d = training ? dy[base + i] - mdy - xhat[base + i] * mdyx : dy[base + i];
            dx[base + i] += static_cast<T>(k * d);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  require(x.defined(), "relu", "undefined input");
  const bool track = tracks(tape, {&x});
  Tensor<T> out = output<T>(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) out.values()[i] = std::max(x.values()[i], T(0));
  if (track) {
    tape->record(out, [=]() mutable {
      auto dx = x.grad();
      const auto dy = out.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (x.values()[i] > T(0)) dx[i] += dy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  require(x.defined(), "sigmoid", "undefined input");
  const bool track = tracks(tape, {&x});
  Tensor<T> out = output<T>(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) out.values()[i] = T(1) / (T(1) + std::exp(-x.values()[i]));
  if (track) {
    tape->record(out, [=]() mutable {
      auto dx = x.grad();
      const auto dy = out.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const T y = out.values()[i];
        dx[i] += dy[i] * y * (T(1) - y);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "add");
  const bool track = tracks(tape, {&a, &b});
  Tensor<T> out = output<T>(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (track) {
    tape->record(out, [=]() mutable {
      const auto dy = out.grad();
      for (const Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "mul");
  const bool track = tracks(tape, {&a, &b});
  Tensor<T> out = output<T>(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (track) {
    tape->record(out, [=]() mutable {
      const auto dy = out.grad();
      if (a.requires_grad()) {
        auto g = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * b.values()[i];
      }
      if (b.requires_grad()) {
        auto g = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * a.values()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maximum(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "maximum");
  const bool track = tracks(tape, {&a, &b});
  Tensor<T> out = output<T>(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = std::max(a.values()[i], b.values()[i]);
  if (track) {
    tape->record(out, [=]() mutable {
      const auto dy = out.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) {
        const bool to_a = a.values()[i] >= b.values()[i];
        const Tensor<T>& t = to_a ? a : b;
        if (t.requires_grad()) t.grad()[i] += dy[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- pooling / resampling

template <typename T>
Tensor<T> max_pool2x2(Tape<T>* tape, const Tensor<T>& x) {
  require_rank(x, 4, "max_pool2x2", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H >= 2 && W >= 2, "max_pool2x2", fmt::format("input {} smaller than the window", shape_string(x.shape())));
  const std::size_t Ho = H / 2, Wo = W / 2;
  const bool track = tracks(tape, {&x});
  Tensor<T> out = output<T>({N, C, Ho, Wo}, track);
  std::vector<std::size_t> arg(out.numel());
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* src = x.data() + nc * H * W;
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j) {
        std::size_t best = (2 * i) * W + 2 * j;
        for (std::size_t k : {(2 * i) * W + 2 * j + 1, (2 * i + 1) * W + 2 * j, (2 * i + 1) * W + 2 * j + 1}) {
          if (src[k] > src[best]) best = k;
        }
        const std::size_t o = (nc * Ho + i) * Wo + j;
        out.values()[o] = src[best];
        arg[o] = nc * H * W + best;
      }
    }
  }
  if (track) {
    tape->record(out, [=, arg = std::move(arg)]() mutable {
      auto dx = x.grad();
      const auto dy = out.grad();
      for (std::size_t o = 0; o < dy.size(); ++o) dx[arg[o]] += dy[o];
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  const bool track = tracks(tape, {&x});
  Tensor<T> out = output<T>({N, C, 1, 1}, track);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    double sum = 0.0;
    for (std::size_t i = 0; i < S; ++i) sum += x.values()[nc * S + i];
    out.values()[nc] = static_cast<T>(sum / static_cast<double>(S));
  }
  if (track) {
    tape->record(out, [=]() mutable {
      auto dx = x.grad();
      const auto dy = out.grad();
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T g = dy[nc] / static_cast<T>(S);
        for (std::size_t i = 0; i < S; ++i) dx[nc * S + i] += g;
      }
    });
  }
  return out;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;  ///< weight of i1; i0 gets 1 - w1
};

std::vector<Tap> upsample_taps(std::size_t in) {
  std::vector<Tap> taps(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    const double src = std::max((static_cast<double>(o) + 0.5) / 2.0 - 0.5, 0.0);
    const auto i0 = static_cast<std::size_t>(src);
    taps[o] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> upsample_bilinear2x(Tape<T>* tape, const Tensor<T>& x) {
  require_rank(x, 4, "upsample_bilinear2x", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = 2 * H, Wo = 2 * W;
  const auto ty = upsample_taps(H), tx = upsample_taps(W);
  const bool track = tracks(tape, {&x});
  Tensor<T> out = output<T>({N, C, Ho, Wo}, track);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* src = x.data() + nc * H * W;
    T* dst = out.data() + nc * Ho * Wo;
    for (std::size_t i = 0; i < Ho; ++i) {
      const auto& a = ty[i];
      const T* r0 = src + a.i0 * W;
      const T* r1 = src + a.i1 * W;
      for (std::size_t j = 0; j < Wo; ++j) {
        const auto& b = tx[j];
        const double top = (1.0 - b.w1) * r0[b.i0] + b.w1 * r0[b.i1];
        const double bot = (1.0 - b.w1) * r1[b.i0] + b.w1 * r1[b.i1];
        dst[i * Wo + j] = static_cast<T>((1.0 - a.w1) * top + a.w1 * bot);
      }
    }
  }
  if (track) {
    tape->record(out, [=]() mutable {
      auto dx = x.grad();
      const auto dy = out.grad();
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        T* g = dx.data() + nc * H * W;
        const T* d = dy.data() + nc * Ho * Wo;
        for (std::size_t i = 0; i < Ho; ++i) {
          const auto& a = ty[i];
          for (std::size_t j = 0; j < Wo; ++j) {
            const auto& b = tx[j];
            const double v = d[i * Wo + j];
            g[a.i0 * W + b.i0] += static_cast<T>(v * (1.0 - a.w1) * (1.0 - b.w1));
            g[a.i0 * W + b.i1] += static_cast<T>(v * (1.0 - a.w1) * b.w1);
            g[a.i1 * W + b.i0] += static_cast<T>(v * a.w1 * (1.0 - b.w1));
            g[a.i1 * W + b.i1] += static_cast<T>(v * a.w1 * b.w1);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const std::vector<Tensor<T>>& xs) {
  require(!xs.empty(), "concat_channels", "no inputs");
  require(xs[0].defined() && xs[0].rank() >= 2, "concat_channels", "inputs must have rank >= 2");
  Shape shape = xs[0].shape();
  const std::size_t N = shape[0];
  const std::size_t S = xs[0].numel() / (N * shape[1]);
  std::size_t C = 0;
  bool track = false;
  for (const auto& t : xs) {
    require(t.defined() && t.rank() == shape.size() && t.dim(0) == N &&
                std::equal(shape.begin() + 2, shape.end(), t.shape().begin() + 2),
            "concat_channels",
            fmt::format("shape {} incompatible with {}", shape_string(t.shape()), shape_string(shape)));
    C += t.dim(1);
    track = track || tracks(tape, {&t});
  }
  shape[1] = C;
  Tensor<T> out = output<T>(shape, track);
  std::size_t off = 0;
  for (const auto& t : xs) {
    const std::size_t block = t.dim(1) * S;
    for (std::size_t n = 0; n < N; ++n) {
      std::copy_n(t.data() + n * block, block, out.data() + n * C * S + off * S);
    }
    off += t.dim(1);
  }
  if (track) {
    tape->record(out, [=, xs = xs]() mutable {
      const auto dy = out.grad();
      std::size_t o = 0;
      for (auto& t : xs) {
        const std::size_t block = t.dim(1) * S;
        if (t.requires_grad()) {
          auto g = t.grad();
          for (std::size_t n = 0; n < N; ++n) {
            const T* src = dy.data() + n * C * S + o * S;
            for (std::size_t i = 0; i < block; ++i) g[n * block + i] += src[i];
          }
        }
        o += t.dim(1);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- linear algebra / broadcasting

template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul", "left operand");
  require_rank(b, 2, "matmul", "right operand");
  require(a.dim(1) == b.dim(0), "matmul",
          fmt::format("inner extents differ: {} x {}", shape_string(a.shape()), shape_string(b.shape())));
  const auto M = static_cast<Eigen::Index>(a.dim(0)), K = static_cast<Eigen::Index>(a.dim(1)),
             N = static_cast<Eigen::Index>(b.dim(1));
  const bool track = tracks(tape, {&a, &b});
  Tensor<T> out = output<T>({a.dim(0), b.dim(1)}, track);
  Map<T>(out.data(), M, N).noalias() = CMap<T>(a.data(), M, K) * CMap<T>(b.data(), K, N);
  if (track) {
    tape->record(out, [=]() mutable {
      CMap<T> dy(out.grad().data(), M, N);
      if (a.requires_grad()) Map<T>(a.grad().data(), M, K).noalias() += dy * CMap<T>(b.data(), K, N).transpose();
      if (b.requires_grad()) Map<T>(b.grad().data(), K, N).noalias() += CMap<T>(a.data(), M, K).transpose() * dy;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_bias(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& b) {
  require(x.defined() && x.rank() >= 2, "add_bias", "input must have rank >= 2");
  const std::size_t N = x.dim(0), C = x.dim(1), S = x.numel() / (N * C);
  require(b.defined() && b.rank() == 1 && b.dim(0) == C, "add_bias",
          fmt::format("bias shape {} does not match {} channels", b.defined() ? shape_string(b.shape()) : "[]", C));
  const bool track = tracks(tape, {&x, &b});
  Tensor<T> out = output<T>(x.shape(), track);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) out.values()[base + i] = x.values()[base + i] + b.values()[c];
    }
  }
  if (track) {
    tape->record(out, [=]() mutable {
      const auto dy = out.grad();
      if (x.requires_grad()) {
        auto g = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto g = b.grad();
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < S; ++i) s += dy[(n * C + c) * S + i];
            g[c] += static_cast<T>(s);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> broadcast_mul(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s) {
  require_rank(x, 4, "broadcast_mul", "input");
  require_rank(s, 4, "broadcast_mul", "scale");
  std::array<std::size_t, 4> xs{}, st{};
  std::size_t stride = 1;
  for (std::size_t d = 4; d-- > 0;) {
    xs[d] = x.dim(d);
    require(s.dim(d) == x.dim(d) || s.dim(d) == 1, "broadcast_mul",
            fmt::format("scale {} does not broadcast to {}", shape_string(s.shape()), shape_string(x.shape())));
    st[d] = s.dim(d) == 1 ? 0 : stride;
    stride *= s.dim(d);
  }
  const bool track = tracks(tape, {&x, &s});
  Tensor<T> out = output<T>(x.shape(), track);
  auto loop = [&](auto&& body) {
    std::size_t i = 0;
    for (std::size_t a = 0; a < xs[0]; ++a)
      for (std::size_t b = 0; b < xs[1]; ++b)
        for (std::size_t c = 0; c < xs[2]; ++c)
          for (std::size_t d = 0; d < xs[3]; ++d, ++i) body(i, a * st[0] + b * st[1] + c * st[2] + d * st[3]);
  };
  loop([&](std::size_t i, std::size_t j) { out.values()[i] = x.values()[i] * s.values()[j]; });
  if (track) {
    tape->record(out, [=]() mutable {
      const auto dy = out.grad();
      const bool gx = x.requires_grad(), gs = s.requires_grad();
      std::span<T> dx = gx ? x.grad() : std::span<T>();
      std::span<T> ds = gs ? s.grad() : std::span<T>();
      std::size_t i = 0;
      for (std::size_t a = 0; a < xs[0]; ++a)
        for (std::size_t b = 0; b < xs[1]; ++b)
          for (std::size_t c = 0; c < xs[2]; ++c)
            for (std::size_t d = 0; d < xs[3]; ++d, ++i) {
              const std::size_t j = a * st[0] + b * st[1] + c * st[2] + d * st[3];
              if (gx) dx[i] += dy[i] * s.values()[j];
              if (gs) ds[j] += dy[i] * x.values()[i];
            }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape) {
  require(x.defined(), "reshape", "undefined input");
  require(shape_numel(shape) == x.numel(), "reshape",
          fmt::format("cannot view {} as {}", shape_string(x.shape()), shape_string(shape)));
  const bool track = tracks(tape, {&x});
  Tensor<T> out(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()), track);
  if (track) {
    tape->record(out, [=]() mutable {
      auto g = x.grad();
      const auto dy = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(Tape<T>* tape, const Tensor<T>& x) {
  require(x.defined() && x.numel() > 0, "mean_all", "empty input");
  const bool track = tracks(tape, {&x});
  double sum = 0.0;
  for (T v : x.values()) sum += v;
  const double n = static_cast<double>(x.numel());
  Tensor<T> out({1}, {static_cast<T>(sum / n)}, track);
  if (track) {
    tape->record(out, [=]() mutable {
      auto g = x.grad();
      const T d = static_cast<T>(out.grad()[0] / n);
      for (auto& v : g) v += d;
    });
  }
  return out;
}

// ---------------------------------------------------------------- losses

namespace {

template <typename T>
void check_loss_inputs(const Tensor<T>& yhat, const Tensor<T>& y, const char* op) {
  require_same(yhat, y, op);
  require(yhat.numel() > 0, op, "empty prediction");
}

/// Records a scalar loss whose gradient w.r.t. yhat is `grad` (already divided by n).
template <typename T>
Tensor<T> scalar_loss(Tape<T>* tape, const Tensor<T>& yhat, double value, std::vector<double> grad) {
  const bool track = tracks(tape, {&yhat});
  Tensor<T> out({1}, {static_cast<T>(value)}, track);
  if (track) {
    tape->record(out, [=, grad = std::move(grad)]() mutable {
      auto g = yhat.grad();
      const double d = out.grad()[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(d * grad[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> loss_bce(Tape<T>* tape, const Tensor<T>& yhat, const Tensor<T>& y) {
  check_loss_inputs(yhat, y, "loss_bce");
  const std::size_t n = yhat.numel();
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  std::vector<double> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = yhat.values()[i], t = y.values()[i];
    const double pc = std::clamp(p, kLogClamp, 1.0 - kLogClamp);
    sum -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
    grad[i] = (p > kLogClamp && p < 1.0 - kLogClamp) ? (-t / pc + (1.0 - t) / (1.0 - pc)) * inv_n : 0.0;
  }
  return scalar_loss(tape, yhat, sum * inv_n, std::move(grad));
}

template <typename T>
Tensor<T> loss_focal(Tape<T>* tape, const Tensor<T>& yhat, const Tensor<T>& y, double alpha, double gamma) {
  check_loss_inputs(yhat, y, "loss_focal");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError(fmt::format("focal alpha must lie in [0,1], got {}", alpha));
  if (!(gamma > 0.0)) throw ConfigError(fmt::format("focal gamma must be > 0, got {}", gamma));
  const std::size_t n = yhat.numel();
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  std::vector<double> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = yhat.values()[i];
    const bool pos = y.values()[i] > T(0.5);
    const double pc = std::clamp(p, kLogClamp, 1.0 - kLogClamp);
    const double pt = pos ? pc : 1.0 - pc;
    const double at = pos ? alpha : 1.0 - alpha;
    const double q = 1.0 - pt;
    const double lg = std::log(pt);
    sum -= at * std::pow(q, gamma) * lg;
    const double dpt = at * (gamma * std::pow(q, gamma - 1.0) * lg - std::pow(q, gamma) / pt);
    grad[i] = (p > kLogClamp && p < 1.0 - kLogClamp) ? (pos ? dpt : -dpt) * inv_n : 0.0;
  }
  return scalar_loss(tape, yhat, sum * inv_n, std::move(grad));
}

template <typename T>
Tensor<T> loss_dice(Tape<T>* tape, const Tensor<T>& yhat, const Tensor<T>& y) {
  check_loss_inputs(yhat, y, "loss_dice");
  const std::size_t n = yhat.numel();
  double inter = 0.0, sy = 0.0, sp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    inter += static_cast<double>(y.values()[i]) * yhat.values()[i];
    sy += y.values()[i];
    sp += yhat.values()[i];
  }
  const double num = 2.0 * inter + 1.0, den = sy + sp + 1.0;
  std::vector<double> grad(n);
  for (std::size_t i = 0; i < n; ++i) grad[i] = -(2.0 * y.values()[i] * den - num) / (den * den);
  return scalar_loss(tape, yhat, 1.0 - num / den, std::move(grad));
}

template <typename T>
Tensor<T> loss_bce_dice(Tape<T>* tape, const Tensor<T>& yhat, const Tensor<T>& y) {
  return add(tape, loss_bce(tape, yhat, y), loss_dice(tape, yhat, y));
}

// ---------------------------------------------------------------- instantiation

#define BURNSCAR_AD_INSTANTIATE(T)                                                                          \
  template class Tensor<T>;                                                                                 \
  template class Tape<T>;                                                                                   \
  template Tensor<T> conv2d(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);    \
  template Tensor<T> batch_norm(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, \
                                Tensor<T>&, bool, double, double);                                          \
  template Tensor<T> relu(Tape<T>*, const Tensor<T>&);                                                      \
  template Tensor<T> sigmoid(Tape<T>*, const Tensor<T>&);                                                   \
  template Tensor<T> max_pool2x2(Tape<T>*, const Tensor<T>&);                                               \
  template Tensor<T> global_avg_pool(Tape<T>*, const Tensor<T>&);                                           \
  template Tensor<T> upsample_bilinear2x(Tape<T>*, const Tensor<T>&);                                       \
  template Tensor<T> concat_channels(Tape<T>*, const std::vector<Tensor<T>>&);                              \
  template Tensor<T> add(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> maximum(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> matmul(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> add_bias(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> broadcast_mul(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> reshape(Tape<T>*, const Tensor<T>&, Shape);                                            \
  template Tensor<T> mean_all(Tape<T>*, const Tensor<T>&);                                                  \
  template Tensor<T> loss_bce(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> loss_focal(Tape<T>*, const Tensor<T>&, const Tensor<T>&, double, double);              \
  template Tensor<T> loss_dice(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> loss_bce_dice(Tape<T>*, const Tensor<T>&, const Tensor<T>&);

BURNSCAR_AD_INSTANTIATE(float)
BURNSCAR_AD_INSTANTIATE(double)

#undef BURNSCAR_AD_INSTANTIATE

}  // namespace burnscar::ad
