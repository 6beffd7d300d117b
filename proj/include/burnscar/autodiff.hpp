#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace burnscar::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor with shared storage. Copies alias the same values and
/// gradient; use clone() for a deep copy. Image tensors are NCHW.
/// 64-byte aligned allocation, so that vectorized kernels see the same alignment on
/// every run and floating-point reductions are bitwise reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);
  Tensor(Shape shape, std::initializer_list<T> values, bool requires_grad = false)
      : Tensor(std::move(shape), std::vector<T>(values), requires_grad) {}

  bool defined() const noexcept { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t numel() const { return s_->values.size(); }

  std::span<T> values() { return s_->values; }
  std::span<const T> values() const { return s_->values; }
  T* data() { return s_->values.data(); }
  const T* data() const { return s_->values.data(); }
  T item() const;

  bool requires_grad() const noexcept { return s_ && s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }

  bool has_grad() const noexcept { return s_ && !s_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access. Like the values, it lives
  /// in the shared storage, so a const handle can still accumulate into it.
  std::span<T> grad() const;
  void zero_grad();
  void clear_grad() { s_->grad.clear(); }

  bool same_storage(const Tensor& other) const noexcept { return s_ == other.s_; }
  Tensor clone() const;

 private:
  struct Storage {
    Shape shape;
    AlignedVector<T> values;
    AlignedVector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

/// Ordered record of differentiable operations. Backward replays records in exact
/// reverse order; a record whose output received no gradient is skipped.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(const Tensor<T>& output, BackwardFn fn);

  /// Resets the gradients of every recorded output, seeds d(loss) = 1 and propagates.
  /// Leaf gradients accumulate across calls. `loss` must hold one element.
  void backward(Tensor<T>& loss);

  void clear() { records_.clear(); }
  std::size_t size() const noexcept { return records_.size(); }

 private:
  struct Record {
    Tensor<T> output;
    BackwardFn fn;
  };
  std::vector<Record> records_;
};

// Every operator records onto `tape` when the tape is non-null and at least one
// input requires a gradient; a null tape runs the forward pass only.

/// x [N,C,H,W], w [O,C,K,K], optional bias [O] (pass an undefined tensor for none).
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

/// Per-channel normalization over every axis except 1. Training mode normalizes with
/// batch statistics (biased variance) and updates the running statistics with the
/// unbiased variance; eval mode applies the running statistics.
template <typename T>
Tensor<T> batch_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum = 0.1, double eps = 1e-5);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x);

/// 2x2 window, stride 2; odd trailing rows/columns are dropped.
template <typename T>
Tensor<T> max_pool2x2(Tape<T>* tape, const Tensor<T>& x);
/// [N,C,H,W] -> [N,C,1,1].
template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x);
/// Bilinear x2 with half-pixel centres (align_corners = false), edge-clamped.
template <typename T>
Tensor<T> upsample_bilinear2x(Tape<T>* tape, const Tensor<T>& x);
/// Concatenation along axis 1; all other extents must agree.
template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const std::vector<Tensor<T>>& xs);

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise maximum; on ties the gradient goes to `a`.
template <typename T>
Tensor<T> maximum(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

/// a [M,K] x b [K,N].
template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
/// x [N,C,...] + b [C] broadcast over every axis except 1.
template <typename T>
Tensor<T> add_bias(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& b);
/// Rank-4 x times s, where each extent of s equals that of x or is 1
/// (e.g. [N,C,1,1] channel scale, [N,1,H,W] spatial scale).
template <typename T>
Tensor<T> broadcast_mul(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s);
template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape);
/// Mean of every element, as a one-element tensor.
template <typename T>
Tensor<T> mean_all(Tape<T>* tape, const Tensor<T>& x);

// ---------------------------------------------------------------- losses
// `y` holds {0,1} targets with the shape of `yhat`; it never receives a gradient.

inline constexpr double kLogClamp = 1e-7;

/// Mean of -(y log yhat + (1-y) log(1-yhat)), yhat clamped to [1e-7, 1-1e-7].
template <typename T>
Tensor<T> loss_bce(Tape<T>* tape, const Tensor<T>& yhat, const Tensor<T>& y);
/// Mean of -alpha_t (1-p_t)^gamma log p_t.
template <typename T>
Tensor<T> loss_focal(Tape<T>* tape, const Tensor<T>& yhat, const Tensor<T>& y, double alpha, double gamma);
/// 1 - (2 sum(y yhat) + 1) / (sum(y) + sum(yhat) + 1), sums pooled over the batch.
template <typename T>
Tensor<T> loss_dice(Tape<T>* tape, const Tensor<T>& yhat, const Tensor<T>& y);
template <typename T>
Tensor<T> loss_bce_dice(Tape<T>* tape, const Tensor<T>& yhat, const Tensor<T>& y);

}  // namespace burnscar::ad
