#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "burnscar/autodiff.hpp"
#include "burnscar/metrics.hpp"
#include "burnscar/patch_io.hpp"
#include "burnscar/raster.hpp"

namespace burnscar {

enum class SharingMode : std::uint8_t { Siamese, PseudoSiamese };
enum class LossKind : std::uint8_t { Bce, Focal, Dice, BceDice };
/// How the channel and spatial excitation branches of scSE are merged.
enum class AttentionCombine : std::uint8_t { Max, Add };
/// How the two encoder streams are merged into a skip tensor.
enum class SkipMode : std::uint8_t { Concat, Difference };

std::string_view sharing_name(SharingMode m) noexcept;
std::string_view loss_name(LossKind k) noexcept;
std::string_view combine_name(AttentionCombine c) noexcept;
std::string_view skip_name(SkipMode s) noexcept;
LossKind parse_loss(std::string_view name);

struct BamCdConfig {
  std::vector<BandId> bands = all_bands();
  std::size_t stem_width = 16;
  std::vector<std::size_t> widths{16, 32, 64, 128};
  std::vector<std::size_t> blocks{1, 1, 1, 1};
  std::size_t reduction = 2;
  SharingMode sharing = SharingMode::Siamese;
  AttentionCombine combine = AttentionCombine::Max;
  SkipMode skip = SkipMode::Concat;
  LossKind loss = LossKind::Bce;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double learning_rate = 1e-3;
  int epochs = 250;
  std::size_t batch_size = 8;
  bool augment = true;
  std::uint64_t seed = 0;

  /// Desk-scale profile: widths 16..128, one block per stage, r = 2, 30 epochs.
  static BamCdConfig mini();
  /// ResNet-101-style stage layout: stem 64, widths 256..2048, blocks 3/4/23/3.
  static BamCdConfig paper_like();

  /// Spatial reduction between input and deepest level; inputs must be divisible by it.
  std::size_t total_stride() const noexcept { return std::size_t{1} << (widths.size() - 1); }

  /// Throws ConfigError.
  void validate() const;

  /// Applies one key=value setting. Returns false for keys this config does not own;
  /// throws ConfigError on malformed values.
  bool set(std::string_view key, std::string_view value);
  /// key=value lines, one per field, in a fixed order.
  std::string serialize() const;
  static BamCdConfig parse(std::string_view text);

  friend bool operator==(const BamCdConfig&, const BamCdConfig&) = default;
};

namespace bamcd {

using TF = ad::Tensor<float>;

struct Conv {
  TF weight;  ///< [out, in, k, k]
  TF bias;    ///< [out], undefined when followed by normalization
  int stride = 1;
  int padding = 0;
};

struct Norm {
  TF gamma;
  TF beta;
  TF running_mean;
  TF running_var;
};

struct ResBlock {
  Conv conv1;
  Norm norm1;
  Conv conv2;
  Norm norm2;
  bool projected = false;
  Conv proj;
  Norm proj_norm;
};

struct Encoder {
  Conv stem;
  Norm stem_norm;
  std::vector<std::vector<ResBlock>> stages;
};

/// Concurrent channel and spatial squeeze-and-excitation.
struct Attention {
  TF fc1_weight;  ///< [C, C/r]
  TF fc1_bias;    ///< [C/r]
  TF fc2_weight;  ///< [C/r, C]
  TF fc2_bias;    ///< [C]
  Conv spatial;   ///< 1x1, C -> 1, with bias
};

struct ConvBlock {
  Conv conv1;
  Norm norm1;
  Conv conv2;
  Norm norm2;
  Attention attention;
};

struct NamedTensor {
  std::string name;
  TF tensor;
};

}  // namespace bamcd

/// Copies share tensor storage, like ad::Tensor; clone() makes an independent model.
class BamCdModel {
 public:
  BamCdConfig config;
  /// One encoder when siamese, two when pseudo-siamese.
  std::vector<bamcd::Encoder> encoders;
  /// decoder[l] produces level l, with level 0 at full resolution.
  std::vector<bamcd::ConvBlock> decoder;
  bamcd::Conv head;
  /// Per-band input standardization, (x - mean) / scale.
  std::vector<float> input_mean;
  std::vector<float> input_scale;

  const bamcd::Encoder& encoder(int stream) const { return encoders[encoders.size() == 1 ? 0 : stream]; }

  /// Trainable tensors, each storage listed once, in a fixed order.
  std::vector<bamcd::NamedTensor> parameters() const;
  /// Normalization running statistics.
  std::vector<bamcd::NamedTensor> buffers() const;
  std::size_t parameter_count() const;
  BamCdModel clone() const;
};

/// Closed-form trainable-parameter count of the network `build(config)` produces.
std::size_t count_parameters(const BamCdConfig& config);

/// He-normal convolutions, unit/zero normalization, seeded from config.seed.
BamCdModel build(const BamCdConfig& config);

/// Stacks patches into [N, bands, H, W] standardized with the model's statistics.
ad::Tensor<float> input_tensor(const BamCdModel& model, const std::vector<const RasterPatch*>& patches);

/// Logit map [N, 1, H, W]. Training mode uses batch statistics and updates running ones.
ad::Tensor<float> forward_logits(ad::Tape<float>* tape, const BamCdModel& model, const ad::Tensor<float>& pre,
                                 const ad::Tensor<float>& post, bool training);

/// Probability map of one bitemporal pair in eval mode, [1, 1, H, W].
ad::Tensor<float> forward(const BamCdModel& model, const RasterPatch& pre, const RasterPatch& post);

/// Configured loss of sigmoid(logits) against {0,1} targets.
ad::Tensor<float> apply_loss(ad::Tape<float>* tape, const BamCdConfig& config, const ad::Tensor<float>& probability,
                             const ad::Tensor<float>& target);

ad::Tensor<float> scse(ad::Tape<float>* tape, const bamcd::Attention& attention, const ad::Tensor<float>& x,
                       AttentionCombine combine);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1_burnt = 0.0;
};

struct TrainResult {
  BamCdModel model;  ///< checkpoint with the highest validation burnt F1
  std::vector<EpochRecord> trace;
  int best_epoch = -1;
};

/// Trains a clone of `model` with Adam on the configured loss. After each epoch the
/// validation burnt F1 at 0.5 is recorded and the best checkpoint (first on ties) is
/// kept. Zero epochs return the model unchanged. Throws DivergenceError on a
/// non-finite loss.
TrainResult train(const BamCdModel& model, const std::vector<BitemporalSample>& train_set,
                  const std::vector<BitemporalSample>& val_set);
TrainResult train(const BamCdModel& model, const DatasetManifest& manifest);

/// "epoch,train_loss,val_f1_burnt" rows.
std::string trace_csv(const std::vector<EpochRecord>& trace);

/// Pixels with probability >= 0.5.
BinaryMask predict_mask(const BamCdModel& model, const RasterPatch& pre, const RasterPatch& post);

/// Pooled confusion counts of predict_mask over the samples.
ConfusionCounts evaluate(const BamCdModel& model, const std::vector<BitemporalSample>& samples);

/// Tiles the scene row-major with patch_size tiles; the last row/column of tiles is
/// shifted inward to end at the border. Tiles run on `threads` workers (0 = hardware).
BinaryMask predict_scene(const BamCdModel& model, const RasterPatch& pre, const RasterPatch& post,
                         std::size_t patch_size, unsigned threads = 0);

/// Tile origins along one axis of length `extent`.
std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t patch_size);

void save_bamcd(const BamCdModel& model, const std::filesystem::path& path);
BamCdModel load_bamcd(const std::filesystem::path& path);

}  // namespace burnscar
