#include "burnscar/bamcd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "burnscar/archive.hpp"
#include "burnscar/config.hpp"
#include "burnscar/error.hpp"
#include "burnscar/rng.hpp"

namespace burnscar {

using bamcd::TF;
namespace ad = burnscar::ad;

// ------------------------------------------------------------------ config

std::string_view sharing_name(SharingMode m) noexcept {
  return m == SharingMode::Siamese ? "siamese" : "pseudo_siamese";
}

std::string_view loss_name(LossKind k) noexcept {
  switch (k) {
    case LossKind::Bce: return "bce";
    case LossKind::Focal: return "focal";
    case LossKind::Dice: return "dice";
    case LossKind::BceDice: return "bce_dice";
  }
  return "?";
}

std::string_view combine_name(AttentionCombine c) noexcept { return c == AttentionCombine::Max ? "max" : "add"; }
std::string_view skip_name(SkipMode s) noexcept { return s == SkipMode::Concat ? "concat" : "difference"; }

LossKind parse_loss(std::string_view name) {
  for (auto k : {LossKind::Bce, LossKind::Focal, LossKind::Dice, LossKind::BceDice}) {
    if (name == loss_name(k)) return k;
  }
  throw ConfigError(fmt::format("unknown loss '{}' (expected bce, focal, dice or bce_dice)", name));
}

BamCdConfig BamCdConfig::mini() {
  BamCdConfig c;
  c.epochs = 30;
  return c;
}

BamCdConfig BamCdConfig::paper_like() {
  BamCdConfig c;
  c.stem_width = 64;
  c.widths = {256, 512, 1024, 2048};
  c.blocks = {3, 4, 23, 3};
  c.reduction = 16;
  c.batch_size = 16;
  return c;
}

void BamCdConfig::validate() const {
  if (bands.empty()) throw ConfigError("bamcd: band list is empty");
  if (widths.size() < 2) throw ConfigError("bamcd: at least two encoder stages are required");
  if (widths.size() != blocks.size()) {
    throw ConfigError(fmt::format("bamcd: {} stage widths but {} block counts", widths.size(), blocks.size()));
  }
  if (widths.size() > 16) throw ConfigError("bamcd: too many encoder stages");
  if (stem_width == 0) throw ConfigError("bamcd: stem_width must be positive");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] == 0) throw ConfigError(fmt::format("bamcd: stage {} width must be positive", i));
    if (blocks[i] == 0) throw ConfigError(fmt::format("bamcd: stage {} needs at least one block", i));
    if (reduction == 0 || widths[i] < reduction) {
      throw ConfigError(fmt::format("bamcd: reduction {} incompatible with width {}", reduction, widths[i]));
    }
  }
  if (!(focal_alpha > 0.0 && focal_alpha < 1.0)) throw ConfigError("bamcd: focal_alpha must be in (0, 1)");
  if (!(focal_gamma > 0.0)) throw ConfigError("bamcd: focal_gamma must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("bamcd: learning_rate must be positive");
  if (epochs < 0) throw ConfigError("bamcd: epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("bamcd: batch_size must be positive");
}

bool BamCdConfig::set(std::string_view key, std::string_view value) {
  if (key == "bands") {
    bands.clear();
    for (const auto& b : split_list(value)) {
      try {
        bands.push_back(parse_band(b));
      } catch (const DataError& e) {
        throw ConfigError(fmt::format("bands: {}", e.what()));
      }
    }
  } else if (key == "stem_width") {
    stem_width = parse_u64(key, value);
  } else if (key == "widths") {
    widths = parse_size_list(key, value);
  } else if (key == "blocks") {
    blocks = parse_size_list(key, value);
  } else if (key == "reduction") {
    reduction = parse_u64(key, value);
  } else if (key == "sharing") {
    if (value == "siamese") {
      sharing = SharingMode::Siamese;
    } else if (value == "pseudo_siamese") {
      sharing = SharingMode::PseudoSiamese;
    } else {
      throw ConfigError(fmt::format("sharing: expected siamese or pseudo_siamese, got '{}'", value));
    }
  } else if (key == "attention") {
    if (value == "max") {
      combine = AttentionCombine::Max;
    } else if (value == "add") {
      combine = AttentionCombine::Add;
    } else {
      throw ConfigError(fmt::format("attention: expected max or add, got '{}'", value));
    }
  } else if (key == "skip") {
    if (value == "concat") {
      skip = SkipMode::Concat;
    } else if (value == "difference") {
      skip = SkipMode::Difference;
    } else {
      throw ConfigError(fmt::format("skip: expected concat or difference, got '{}'", value));
    }
  } else if (key == "loss") {
    loss = parse_loss(value);
  } else if (key == "focal_alpha") {
    focal_alpha = parse_f64(key, value);
  } else if (key == "focal_gamma") {
    focal_gamma = parse_f64(key, value);
  } else if (key == "optimizer") {
    if (value != "adam") throw ConfigError(fmt::format("optimizer: only adam is supported, got '{}'", value));
  } else if (key == "learning_rate") {
    learning_rate = parse_f64(key, value);
  } else if (key == "epochs") {
    epochs = static_cast<int>(parse_i64(key, value));
  } else if (key == "batch_size") {
    batch_size = parse_u64(key, value);
  } else if (key == "augment") {
    augment = parse_bool(key, value);
  } else if (key == "seed") {
    seed = parse_u64(key, value);
  } else {
    return false;
  }
  return true;
}

std::string BamCdConfig::serialize() const {
  std::vector<std::string_view> band_names;
  for (auto b : bands) band_names.push_back(band_name(b));
  std::string s;
  s += fmt::format("bands={}\n", fmt::join(band_names, ","));
  s += fmt::format("stem_width={}\n", stem_width);
  s += fmt::format("widths={}\n", fmt::join(widths, ","));
  s += fmt::format("blocks={}\n", fmt::join(blocks, ","));
  s += fmt::format("reduction={}\n", reduction);
  s += fmt::format("sharing={}\n", sharing_name(sharing));
  s += fmt::format("attention={}\n", combine_name(combine));
  s += fmt::format("skip={}\n", skip_name(skip));
  s += fmt::format("loss={}\n", loss_name(loss));
  s += fmt::format("focal_alpha={}\n", focal_alpha);
  s += fmt::format("focal_gamma={}\n", focal_gamma);
  s += "optimizer=adam\n";
  s += fmt::format("learning_rate={}\n", learning_rate);
  s += fmt::format("epochs={}\n", epochs);
  s += fmt::format("batch_size={}\n", batch_size);
  s += fmt::format("augment={}\n", augment);
  s += fmt::format("seed={}\n", seed);
  return s;
}

BamCdConfig BamCdConfig::parse(std::string_view text) {
  BamCdConfig c;
  for (const auto& kv : parse_key_values(text)) {
    if (!c.set(kv.key, kv.value)) throw ConfigError(fmt::format("line {}: unknown bamcd key '{}'", kv.line, kv.key));
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------------ parameter counting

namespace {

std::size_t conv_bn(std::size_t cin, std::size_t cout, std::size_t k) { return cin * cout * k * k + 2 * cout; }

std::size_t scse_params(std::size_t c, std::size_t r) {
  const std::size_t h = c / r;
  return c * h + h + h * c + c + c + 1;
}

std::size_t skip_channels(const BamCdConfig& c, std::size_t level) {
  return c.skip == SkipMode::Concat ? 2 * c.widths[level] : c.widths[level];
}

std::size_t decoder_input(const BamCdConfig& c, std::size_t level) {
  const std::size_t deeper = level + 1 < c.widths.size() ? c.widths[level + 1] : 0;
  return skip_channels(c, level) + deeper;
}

}  // namespace

std::size_t count_parameters(const BamCdConfig& config) {
  config.validate();
  std::size_t encoder = conv_bn(config.bands.size(), config.stem_width, 3);
  std::size_t cin = config.stem_width;
  for (std::size_t s = 0; s < config.widths.size(); ++s) {
    const std::size_t w = config.widths[s];
    for (std::size_t b = 0; b < config.blocks[s]; ++b) {
      const bool project = b == 0 && (s > 0 || cin != w);
      encoder += conv_bn(cin, w, 3) + conv_bn(w, w, 3) + (project ? conv_bn(cin, w, 1) : 0);
      cin = w;
    }
  }
  std::size_t decoder = 0;
  for (std::size_t l = 0; l < config.widths.size(); ++l) {
    const std::size_t w = config.widths[l];
    decoder += conv_bn(decoder_input(config, l), w, 3) + conv_bn(w, w, 3) + scse_params(w, config.reduction);
  }
  const std::size_t head = config.widths[0] + 1;
  const std::size_t streams = config.sharing == SharingMode::Siamese ? 1 : 2;
  return streams * encoder + decoder + head;
}

// ------------------------------------------------------------------ construction

namespace {

using bamcd::Attention;
using bamcd::Conv;
using bamcd::ConvBlock;
using bamcd::Encoder;
using bamcd::NamedTensor;
using bamcd::Norm;
using bamcd::ResBlock;

std::vector<std::size_t> dims(std::initializer_list<std::size_t> d) { return d; }

TF normal_tensor(ad::Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<float> v(ad::shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(dist(rng));
  return TF(std::move(shape), std::move(v), true);
}

Conv make_conv(std::size_t cin, std::size_t cout, std::size_t k, int stride, bool bias, Rng& rng) {
  Conv c;
  c.weight = normal_tensor(dims({cout, cin, k, k}), std::sqrt(2.0 / static_cast<double>(cin * k * k)), rng);
  if (bias) c.bias = TF(dims({cout}), true);
  c.stride = stride;
  c.padding = static_cast<int>(k / 2);
  return c;
}

Norm make_norm(std::size_t c) {
  return {TF(dims({c}), std::vector<float>(c, 1.0f), true), TF(dims({c}), true), TF(dims({c})),
          TF(dims({c}), std::vector<float>(c, 1.0f))};
}

Encoder make_encoder(const BamCdConfig& config, Rng& rng) {
  Encoder e;
  e.stem = make_conv(config.bands.size(), config.stem_width, 3, 1, false, rng);
  e.stem_norm = make_norm(config.stem_width);
  std::size_t cin = config.stem_width;
  for (std::size_t s = 0; s < config.widths.size(); ++s) {
    const std::size_t w = config.widths[s];
    auto& stage = e.stages.emplace_back();
    for (std::size_t b = 0; b < config.blocks[s]; ++b) {
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      ResBlock r;
      r.conv1 = make_conv(cin, w, 3, stride, false, rng);
      r.norm1 = make_norm(w);
      r.conv2 = make_conv(w, w, 3, 1, false, rng);
      r.norm2 = make_norm(w);
      r.projected = b == 0 && (s > 0 || cin != w);
      if (r.projected) {
        r.proj = make_conv(cin, w, 1, stride, false, rng);
        r.proj_norm = make_norm(w);
      }
      stage.push_back(std::move(r));
      cin = w;
    }
  }
  return e;
}

Attention make_attention(std::size_t c, std::size_t r, Rng& rng) {
  const std::size_t h = c / r;
  Attention a;
  a.fc1_weight = normal_tensor(dims({c, h}), std::sqrt(2.0 / static_cast<double>(c)), rng);
  a.fc1_bias = TF(dims({h}), true);
  a.fc2_weight = normal_tensor(dims({h, c}), std::sqrt(1.0 / static_cast<double>(h)), rng);
  a.fc2_bias = TF(dims({c}), true);
  a.spatial = make_conv(c, 1, 1, 1, true, rng);
  return a;
}

template <typename Fn>
void visit_conv(const std::string& prefix, const Conv& c, Fn&& fn) {
  fn(prefix + ".weight", c.weight, false);
  if (c.bias.defined()) fn(prefix + ".bias", c.bias, false);
}

template <typename Fn>
void visit_norm(const std::string& prefix, const Norm& n, Fn&& fn) {
  fn(prefix + ".gamma", n.gamma, false);
  fn(prefix + ".beta", n.beta, false);
  fn(prefix + ".running_mean", n.running_mean, true);
  fn(prefix + ".running_var", n.running_var, true);
}

/// Calls fn(name, tensor, is_buffer) for every tensor of the model in a fixed order.
template <typename Fn>
void visit(const BamCdModel& m, Fn&& fn) {
  for (std::size_t e = 0; e < m.encoders.size(); ++e) {
    const auto& enc = m.encoders[e];
    const std::string p = fmt::format("encoder{}", e);
    visit_conv(p + ".stem", enc.stem, fn);
    visit_norm(p + ".stem_norm", enc.stem_norm, fn);
    for (std::size_t s = 0; s < enc.stages.size(); ++s) {
      for (std::size_t b = 0; b < enc.stages[s].size(); ++b) {
        const auto& r = enc.stages[s][b];
        const std::string q = fmt::format("{}.stage{}.block{}", p, s, b);
        visit_conv(q + ".conv1", r.conv1, fn);
        visit_norm(q + ".norm1", r.norm1, fn);
        visit_conv(q + ".conv2", r.conv2, fn);
        visit_norm(q + ".norm2", r.norm2, fn);
        if (r.projected) {
          visit_conv(q + ".proj", r.proj, fn);
          visit_norm(q + ".proj_norm", r.proj_norm, fn);
        }
      }
    }
  }
  for (std::size_t l = 0; l < m.decoder.size(); ++l) {
    const auto& d = m.decoder[l];
    const std::string p = fmt::format("decoder{}", l);
    visit_conv(p + ".conv1", d.conv1, fn);
    visit_norm(p + ".norm1", d.norm1, fn);
    visit_conv(p + ".conv2", d.conv2, fn);
    visit_norm(p + ".norm2", d.norm2, fn);
    fn(p + ".cse.fc1.weight", d.attention.fc1_weight, false);
    fn(p + ".cse.fc1.bias", d.attention.fc1_bias, false);
    fn(p + ".cse.fc2.weight", d.attention.fc2_weight, false);
    fn(p + ".cse.fc2.bias", d.attention.fc2_bias, false);
    visit_conv(p + ".sse", d.attention.spatial, fn);
  }
  visit_conv("head", m.head, fn);
}

}  // namespace

std::vector<bamcd::NamedTensor> BamCdModel::parameters() const {
  std::vector<NamedTensor> out;
  visit(*this, [&](const std::string& name, const TF& t, bool buffer) {
    if (!buffer) out.push_back({name, t});
  });
  return out;
}

std::vector<bamcd::NamedTensor> BamCdModel::buffers() const {
  std::vector<NamedTensor> out;
  visit(*this, [&](const std::string& name, const TF& t, bool buffer) {
    if (buffer) out.push_back({name, t});
  });
  return out;
}

std::size_t BamCdModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

BamCdModel BamCdModel::clone() const {
  BamCdModel m = build(config);
  std::vector<TF> dst;
  visit(m, [&](const std::string&, const TF& t, bool) { dst.push_back(t); });
  std::size_t i = 0;
  visit(*this, [&](const std::string&, const TF& t, bool) {
    std::copy(t.values().begin(), t.values().end(), dst[i++].values().begin());
  });
  m.input_mean = input_mean;
  m.input_scale = input_scale;
  return m;
}

BamCdModel build(const BamCdConfig& config) {
  config.validate();
  BamCdModel m;
  m.config = config;
  Rng rng(derive_seed(config.seed, "bamcd-init"));
  const std::size_t streams = config.sharing == SharingMode::Siamese ? 1 : 2;
  for (std::size_t e = 0; e < streams; ++e) m.encoders.push_back(make_encoder(config, rng));
  for (std::size_t l = 0; l < config.widths.size(); ++l) {
    const std::size_t w = config.widths[l];
    ConvBlock d;
    d.conv1 = make_conv(decoder_input(config, l), w, 3, 1, false, rng);
    d.norm1 = make_norm(w);
    d.conv2 = make_conv(w, w, 3, 1, false, rng);
    d.norm2 = make_norm(w);
    d.attention = make_attention(w, config.reduction, rng);
    m.decoder.push_back(std::move(d));
  }
  m.head = make_conv(config.widths[0], 1, 1, 1, true, rng);
  m.input_mean.assign(config.bands.size(), 0.0f);
  m.input_scale.assign(config.bands.size(), 1.0f);
  return m;
}

// ------------------------------------------------------------------ forward

namespace {

using Tape = ad::Tape<float>;

TF apply(Tape* t, const Conv& c, const TF& x) { return ad::conv2d(t, x, c.weight, c.bias, c.stride, c.padding); }

TF apply(Tape* t, const Norm& n, const TF& x, bool training) {
  TF mean = n.running_mean, var = n.running_var;
  return ad::batch_norm(t, x, n.gamma, n.beta, mean, var, training);
}

TF res_block(Tape* t, const ResBlock& r, const TF& x, bool training) {
  TF h = ad::relu(t, apply(t, r.norm1, apply(t, r.conv1, x), training));
  h = apply(t, r.norm2, apply(t, r.conv2, h), training);
  const TF shortcut = r.projected ? apply(t, r.proj_norm, apply(t, r.proj, x), training) : x;
  return ad::relu(t, ad::add(t, h, shortcut));
}

std::vector<TF> encode(Tape* t, const Encoder& e, const TF& x, bool training) {
  std::vector<TF> levels;
  TF h = ad::relu(t, apply(t, e.stem_norm, apply(t, e.stem, x), training));
  for (const auto& stage : e.stages) {
    for (const auto& block : stage) h = res_block(t, block, h, training);
    levels.push_back(h);
  }
  return levels;
}

TF conv_block(Tape* t, const ConvBlock& d, const TF& x, bool training, AttentionCombine combine) {
  TF h = ad::relu(t, apply(t, d.norm1, apply(t, d.conv1, x), training));
  h = ad::relu(t, apply(t, d.norm2, apply(t, d.conv2, h), training));
  return scse(t, d.attention, h, combine);
}

TF negate(Tape* t, const TF& x) { return ad::mul(t, x, TF(x.shape(), std::vector<float>(x.numel(), -1.0f))); }

}  // namespace

ad::Tensor<float> scse(ad::Tape<float>* tape, const bamcd::Attention& a, const ad::Tensor<float>& x,
                       AttentionCombine combine) {
  if (x.rank() != 4) throw ShapeError(fmt::format("scse: expected a rank-4 input, got {}", ad::shape_string(x.shape())));
  const std::size_t n = x.dim(0), c = x.dim(1);
  TF z = ad::reshape(tape, ad::global_avg_pool(tape, x), {n, c});
  z = ad::relu(tape, ad::add_bias(tape, ad::matmul(tape, z, a.fc1_weight), a.fc1_bias));
  z = ad::sigmoid(tape, ad::add_bias(tape, ad::matmul(tape, z, a.fc2_weight), a.fc2_bias));
  const TF channel = ad::broadcast_mul(tape, x, ad::reshape(tape, z, {n, c, 1, 1}));
  const TF spatial = ad::broadcast_mul(tape, x, ad::sigmoid(tape, apply(tape, a.spatial, x)));
  return combine == AttentionCombine::Max ? ad::maximum(tape, channel, spatial) : ad::add(tape, channel, spatial);
}

ad::Tensor<float> forward_logits(ad::Tape<float>* tape, const BamCdModel& m, const ad::Tensor<float>& pre,
                                 const ad::Tensor<float>& post, bool training) {
  const auto& cfg = m.config;
  if (pre.rank() != 4 || pre.shape() != post.shape()) {
    throw ShapeError(fmt::format("bamcd forward: pre {} and post {} must be equal rank-4 shapes",
                                 ad::shape_string(pre.shape()), ad::shape_string(post.shape())));
  }
  if (pre.dim(1) != cfg.bands.size()) {
    throw ShapeError(fmt::format("bamcd forward: input has {} bands, model expects {}", pre.dim(1), cfg.bands.size()));
  }
  const std::size_t stride = cfg.total_stride();
  if (pre.dim(2) % stride != 0 || pre.dim(3) % stride != 0 || pre.dim(2) == 0 || pre.dim(3) == 0) {
    throw ShapeError(fmt::format("bamcd forward: spatial size {}x{} is not a positive multiple of {}", pre.dim(2),
                                 pre.dim(3), stride));
  }
  const auto a = encode(tape, m.encoder(0), pre, training);
  const auto b = encode(tape, m.encoder(1), post, training);
  const auto skip = [&](std::size_t l) {
    return cfg.skip == SkipMode::Concat ? ad::concat_channels<float>(tape, {a[l], b[l]})
                                        : ad::add(tape, b[l], negate(tape, a[l]));
  };
  const std::size_t levels = cfg.widths.size();
  TF d = conv_block(tape, m.decoder[levels - 1], skip(levels - 1), training, cfg.combine);
  for (std::size_t l = levels - 1; l-- > 0;) {
    const TF x = ad::concat_channels<float>(tape, {ad::upsample_bilinear2x(tape, d), skip(l)});
    d = conv_block(tape, m.decoder[l], x, training, cfg.combine);
  }
  return apply(tape, m.head, d);
}

ad::Tensor<float> input_tensor(const BamCdModel& m, const std::vector<const RasterPatch*>& patches) {
  if (patches.empty()) throw DataError("bamcd: empty batch");
  const std::size_t h = patches[0]->height(), w = patches[0]->width(), nb = m.config.bands.size();
  TF t({patches.size(), nb, h, w});
  auto out = t.values();
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& p = *patches[i];
    if (p.height() != h || p.width() != w) throw ShapeError("bamcd: patches in a batch must share one size");
    for (std::size_t b = 0; b < nb; ++b) {
      const auto plane = p.plane(m.config.bands[b]);
      float* dst = out.data() + (i * nb + b) * h * w;
      for (std::size_t k = 0; k < h * w; ++k) dst[k] = (plane[k] - m.input_mean[b]) / m.input_scale[b];
    }
  }
  return t;
}

ad::Tensor<float> forward(const BamCdModel& m, const RasterPatch& pre, const RasterPatch& post) {
  if (pre.height() != post.height() || pre.width() != post.width()) {
    throw ShapeError("bamcd forward: pre and post differ in size");
  }
  const TF logits = forward_logits(nullptr, m, input_tensor(m, {&pre}), input_tensor(m, {&post}), false);
  return ad::sigmoid<float>(nullptr, logits);
}

ad::Tensor<float> apply_loss(ad::Tape<float>* tape, const BamCdConfig& c, const ad::Tensor<float>& p,
                             const ad::Tensor<float>& y) {
  switch (c.loss) {
    case LossKind::Bce: return ad::loss_bce(tape, p, y);
    case LossKind::Focal: return ad::loss_focal(tape, p, y, c.focal_alpha, c.focal_gamma);
    case LossKind::Dice: return ad::loss_dice(tape, p, y);
    case LossKind::BceDice: return ad::loss_bce_dice(tape, p, y);
  }
  throw ConfigError("bamcd: unknown loss");
}

BinaryMask predict_mask(const BamCdModel& m, const RasterPatch& pre, const RasterPatch& post) {
  const TF p = forward(m, pre, post);
  BinaryMask mask(pre.height(), pre.width());
  const auto v = p.values();
  for (std::size_t i = 0; i < mask.labels.size(); ++i) mask.labels[i] = v[i] >= 0.5f ? 1 : 0;
  return mask;
}

ConfusionCounts evaluate(const BamCdModel& m, const std::vector<BitemporalSample>& samples) {
  ConfusionCounts counts;
  for (const auto& s : samples) counts += accumulate(predict_mask(m, s.pre, s.post), s.truth);
  return counts;
}

// ------------------------------------------------------------------ training

namespace {

void check_bands(const BamCdConfig& c, const RasterPatch& p, std::string_view what) {
  for (auto b : c.bands) {
    if (!p.has_band(b)) throw DataError(fmt::format("bamcd: {} lacks configured band {}", what, band_name(b)));
  }
}

void check_samples(const BamCdModel& m, const std::vector<BitemporalSample>& samples, std::string_view split) {
  if (samples.empty()) throw DataError(fmt::format("bamcd: the {} split is empty", split));
  const std::size_t h = samples[0].height(), w = samples[0].width();
  for (const auto& s : samples) {
    s.validate();
    check_bands(m.config, s.pre, s.event_id);
    check_bands(m.config, s.post, s.event_id);
    if (s.height() != h || s.width() != w) {
      throw ShapeError(fmt::format("bamcd: {} patch {} is {}x{}, expected {}x{}", split, s.event_id, s.height(),
                                   s.width(), h, w));
    }
    if (h % m.config.total_stride() != 0 || w % m.config.total_stride() != 0) {
      throw ShapeError(fmt::format("bamcd: patch size {}x{} is not a multiple of {}", h, w, m.config.total_stride()));
    }
  }
}

void fit_normalization(BamCdModel& m, const std::vector<BitemporalSample>& samples) {
  const std::size_t nb = m.config.bands.size();
  for (std::size_t b = 0; b < nb; ++b) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
      for (const RasterPatch* p : {&s.pre, &s.post}) {
        for (float v : p->plane(m.config.bands[b])) {
          sum += v;
          sq += static_cast<double>(v) * v;
        }
        n += p->pixel_count();
      }
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
    m.input_mean[b] = static_cast<float>(mean);
    m.input_scale[b] = var > 1e-12 ? static_cast<float>(std::sqrt(var)) : 1.0f;
  }
}

/// Writes the standardized, optionally flipped planes of one patch into `dst`.
void fill_input(const BamCdModel& m, const RasterPatch& p, bool flip_h, bool flip_v, float* dst) {
  const std::size_t h = p.height(), w = p.width();
  for (std::size_t b = 0; b < m.config.bands.size(); ++b) {
    const auto plane = p.plane(m.config.bands[b]);
    const float mean = m.input_mean[b], scale = m.input_scale[b];
    for (std::size_t r = 0; r < h; ++r) {
      const std::size_t sr = flip_v ? h - 1 - r : r;
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t sc = flip_h ? w - 1 - c : c;
        dst[(b * h + r) * w + c] = (plane[sr * w + sc] - mean) / scale;
      }
    }
  }
}

void fill_target(const BinaryMask& t, bool flip_h, bool flip_v, float* dst) {
  for (std::size_t r = 0; r < t.height; ++r) {
    const std::size_t sr = flip_v ? t.height - 1 - r : r;
    for (std::size_t c = 0; c < t.width; ++c) {
      dst[r * t.width + c] = t.at(sr, flip_h ? t.width - 1 - c : c);
    }
  }
}

struct Adam {
  std::vector<std::vector<float>> m, v;
  long step = 0;
};

void adam_step(Adam& opt, const std::vector<NamedTensor>& params, const BamCdConfig& cfg) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++opt.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(opt.step));
  const float lr_t = static_cast<float>(cfg.learning_rate * std::sqrt(c2) / c1);
  const float eps_t = static_cast<float>(eps * std::sqrt(c2));
  for (std::size_t i = 0; i < params.size(); ++i) {
    TF p = params[i].tensor;
    if (!p.has_grad()) continue;
    auto value = p.values();
    const auto g = p.grad();
    auto& m = opt.m[i];
    auto& v = opt.v[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = static_cast<float>(beta1) * m[k] + static_cast<float>(1.0 - beta1) * g[k];
      v[k] = static_cast<float>(beta2) * v[k] + static_cast<float>(1.0 - beta2) * g[k] * g[k];
      value[k] -= lr_t * m[k] / (std::sqrt(v[k]) + eps_t);
    }
  }
}

std::vector<std::vector<float>> snapshot(const BamCdModel& m) {
  std::vector<std::vector<float>> out;
  visit(m, [&](const std::string&, const TF& t, bool) { out.emplace_back(t.values().begin(), t.values().end()); });
  return out;
}

void restore(const BamCdModel& m, const std::vector<std::vector<float>>& saved) {
  std::size_t i = 0;
  visit(m, [&](const std::string&, const TF& t, bool) {
    TF h = t;
    std::copy(saved[i].begin(), saved[i].end(), h.values().begin());
    ++i;
  });
}

}  // namespace

TrainResult train(const BamCdModel& initial, const std::vector<BitemporalSample>& train_set,
                  const std::vector<BitemporalSample>& val_set) {
  BamCdModel model = initial.clone();
  const auto& cfg = model.config;
  cfg.validate();
  check_samples(model, train_set, "train");
  check_samples(model, val_set, "val");
  TrainResult result;
  if (cfg.epochs == 0) {
    result.model = std::move(model);
    return result;
  }
  fit_normalization(model, train_set);

  const auto params = model.parameters();
  Adam opt;
  for (const auto& p : params) {
    opt.m.emplace_back(p.tensor.numel(), 0.0f);
    opt.v.emplace_back(p.tensor.numel(), 0.0f);
  }
  const std::size_t n = train_set.size(), nb = cfg.bands.size();
  const std::size_t h = train_set[0].height(), w = train_set[0].width();
  double best_f1 = -1.0;
  std::vector<std::vector<float>> best;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, "bamcd-shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng flip_rng(derive_seed(cfg.seed, "bamcd-augment", static_cast<std::uint64_t>(epoch)));
    std::bernoulli_distribution coin(0.5);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, n - start);
      TF pre({bs, nb, h, w}), post({bs, nb, h, w}), target({bs, 1, h, w});
      for (std::size_t i = 0; i < bs; ++i) {
        const auto& s = train_set[order[start + i]];
        const bool fh = cfg.augment && coin(flip_rng);
        const bool fv = cfg.augment && coin(flip_rng);
        fill_input(model, s.pre, fh, fv, pre.data() + i * nb * h * w);
        fill_input(model, s.post, fh, fv, post.data() + i * nb * h * w);
        fill_target(s.truth, fh, fv, target.data() + i * h * w);
      }
      for (const auto& p : params) TF(p.tensor).clear_grad();
      ad::Tape<float> tape;
      const TF prob = ad::sigmoid(&tape, forward_logits(&tape, model, pre, post, true));
      TF loss = apply_loss(&tape, cfg, prob, target);
      const double value = loss.item();
      if (!std::isfinite(value)) throw DivergenceError(epoch);
      tape.backward(loss);
      adam_step(opt, params, cfg);
      loss_sum += value * static_cast<double>(bs);
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) throw DivergenceError(epoch);

    const double f1 = compute_metrics(evaluate(model, val_set)).burnt.f1;
    result.trace.push_back({epoch, epoch_loss, f1});
    if (f1 > best_f1) {
      best_f1 = f1;
      best = snapshot(model);
      result.best_epoch = epoch;
    }
  }
  for (const auto& p : params) TF(p.tensor).clear_grad();
  restore(model, best);
  result.model = std::move(model);
  return result;
}

TrainResult train(const BamCdModel& model, const DatasetManifest& manifest) {
  return train(model, manifest.load_split(Split::Train), manifest.load_split(Split::Val));
}

std::string trace_csv(const std::vector<EpochRecord>& trace) {
  std::string s = "epoch,train_loss,val_f1_burnt\n";
  for (const auto& r : trace) s += fmt::format("{},{:.9g},{:.9g}\n", r.epoch, r.train_loss, r.val_f1_burnt);
  return s;
}

// ------------------------------------------------------------------ scene prediction

std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t patch_size) {
  if (patch_size == 0 || extent < patch_size) {
    throw DataError(fmt::format("scene extent {} is smaller than the tile size {}", extent, patch_size));
  }
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o + patch_size <= extent; o += patch_size) out.push_back(o);
  if (out.back() + patch_size < extent) out.push_back(extent - patch_size);
  return out;
}

BinaryMask predict_scene(const BamCdModel& m, const RasterPatch& pre, const RasterPatch& post, std::size_t patch_size,
                         unsigned threads) {
  check_bands(m.config, pre, "pre scene");
  check_bands(m.config, post, "post scene");
  if (pre.height() != post.height() || pre.width() != post.width()) {
    throw ShapeError("predict_scene: pre and post scenes differ in size");
  }
  if (patch_size % m.config.total_stride() != 0) {
    throw ShapeError(fmt::format("predict_scene: tile size {} is not a multiple of {}", patch_size,
                                 m.config.total_stride()));
  }
  const auto rows = tile_origins(pre.height(), patch_size);
  const auto cols = tile_origins(pre.width(), patch_size);
  const std::size_t tiles = rows.size() * cols.size();
  std::vector<BinaryMask> masks(tiles);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tiles; t = next++) {
      const std::size_t r0 = rows[t / cols.size()], c0 = cols[t % cols.size()];
      masks[t] = predict_mask(m, pre.crop(r0, c0, patch_size, patch_size), post.crop(r0, c0, patch_size, patch_size));
    }
  };
  std::size_t workers = threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, tiles);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  BinaryMask out(pre.height(), pre.width());
  for (std::size_t t = 0; t < tiles; ++t) {
    const std::size_t r0 = rows[t / cols.size()], c0 = cols[t % cols.size()];
    for (std::size_t r = 0; r < patch_size; ++r) {
      for (std::size_t c = 0; c < patch_size; ++c) out.at(r0 + r, c0 + c) = masks[t].at(r, c);
    }
  }
  return out;
}

// ------------------------------------------------------------------ checkpoints

void save_bamcd(const BamCdModel& model, const std::filesystem::path& path) {
  ParamArchive a("bamcd");
  a.put_text("config", model.config.serialize());
  a.put("input_mean", {model.input_mean.size()}, std::span<const float>(model.input_mean));
  a.put("input_scale", {model.input_scale.size()}, std::span<const float>(model.input_scale));
  visit(model, [&](const std::string& name, const TF& t, bool) {
    std::vector<std::uint64_t> shape(t.shape().begin(), t.shape().end());
    a.put(name, std::move(shape), t.values());
  });
  a.save(path);
}

BamCdModel load_bamcd(const std::filesystem::path& path) {
  const auto a = ParamArchive::load(path, "bamcd");
  BamCdModel m = build(BamCdConfig::parse(a.get_text("config")));
  const auto fail = [&](const std::string& what) { return FormatError(fmt::format("{}: {}", path.string(), what), 0); };
  m.input_mean = a.get_f32("input_mean");
  m.input_scale = a.get_f32("input_scale");
  if (m.input_mean.size() != m.config.bands.size() || m.input_scale.size() != m.config.bands.size()) {
    throw fail("input statistics do not match the band list");
  }
  visit(m, [&](const std::string& name, const TF& t, bool) {
    const auto& block = a.block(name);
    if (!std::equal(block.shape.begin(), block.shape.end(), t.shape().begin(), t.shape().end())) {
      throw fail(fmt::format("block {} has shape mismatching the configured architecture", name));
    }
    const auto values = a.get_f32(name);
    TF h = t;
    std::copy(values.begin(), values.end(), h.values().begin());
  });
  return m;
}

}  // namespace burnscar
