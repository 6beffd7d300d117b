#include "burnscar/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "burnscar/error.hpp"

namespace burnscar {

static_assert(std::endian::native == std::endian::little, "archive IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'L', 'G', 'M'};

std::size_t type_size(BlockType t) {
  switch (t) {
    case BlockType::F32: return 4;
    case BlockType::F64: return 8;
    case BlockType::I64: return 8;
    case BlockType::Text: return 1;
  }
  return 0;
}

std::string_view type_name(BlockType t) {
  switch (t) {
    case BlockType::F32: return "f32";
    case BlockType::F64: return "f64";
    case BlockType::I64: return "i64";
    case BlockType::Text: return "text";
  }
  return "?";
}

template <typename T>
void append(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::size_t offset() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == b_.size(); }

  template <typename T>
  T read(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what).data(), sizeof(T));
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) throw FormatError(fmt::format("truncated archive while reading {}", what), pos_);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

template <typename T>
ParamBlock make_block(std::string name, BlockType type, std::vector<std::uint64_t> shape,
                      std::span<const T> v) {
  ParamBlock b{std::move(name), type, std::move(shape), {}};
  if (b.element_count() != v.size()) {
    throw ShapeError(fmt::format("block '{}' shape holds {} elements, got {}", b.name,
                                 b.element_count(), v.size()));
  }
  b.bytes.resize(v.size_bytes());
  if (!v.empty()) std::memcpy(b.bytes.data(), v.data(), v.size_bytes());
  return b;
}

template <typename T>
std::vector<T> unpack(const ParamBlock& b, BlockType want) {
  if (b.type != want) {
    throw FormatError(fmt::format("block '{}' has type {}, expected {}", b.name, type_name(b.type),
                                  type_name(want)),
                      0);
  }
  std::vector<T> out(b.bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), b.bytes.data(), b.bytes.size());
  return out;
}

}  // namespace

std::size_t ParamBlock::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

bool ParamArchive::contains(std::string_view name) const noexcept {
  for (const auto& b : blocks_) {
    if (b.name == name) return true;
  }
  return false;
}

void ParamArchive::add(ParamBlock block) {
  if (block.name.empty() || block.name.size() > 0xFFFF) throw DataError("archive block name must be 1..65535 bytes");
  if (contains(block.name)) throw DataError(fmt::format("duplicate archive block '{}'", block.name));
  if (block.shape.size() > 255) throw DataError("archive block rank exceeds 255");
  blocks_.push_back(std::move(block));
}

void ParamArchive::put(std::string name, std::vector<std::uint64_t> shape, std::span<const float> v) {
  add(make_block(std::move(name), BlockType::F32, std::move(shape), v));
}
void ParamArchive::put(std::string name, std::vector<std::uint64_t> shape, std::span<const double> v) {
  add(make_block(std::move(name), BlockType::F64, std::move(shape), v));
}
void ParamArchive::put(std::string name, std::vector<std::uint64_t> shape,
                       std::span<const std::int64_t> v) {
  add(make_block(std::move(name), BlockType::I64, std::move(shape), v));
}
void ParamArchive::put_text(std::string name, std::string_view text) {
  ParamBlock b{std::move(name), BlockType::Text, {text.size()}, {text.begin(), text.end()}};
  add(std::move(b));
}

const ParamBlock& ParamArchive::block(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw FormatError(fmt::format("archive has no block '{}'", name), 0);
}

std::vector<float> ParamArchive::get_f32(std::string_view name) const {
  return unpack<float>(block(name), BlockType::F32);
}
std::vector<double> ParamArchive::get_f64(std::string_view name) const {
  return unpack<double>(block(name), BlockType::F64);
}
std::vector<std::int64_t> ParamArchive::get_i64(std::string_view name) const {
  return unpack<std::int64_t>(block(name), BlockType::I64);
}
std::string ParamArchive::get_text(std::string_view name) const {
  const auto& b = block(name);
  if (b.type != BlockType::Text) {
    throw FormatError(fmt::format("block '{}' has type {}, expected text", b.name, type_name(b.type)), 0);
  }
  return {b.bytes.begin(), b.bytes.end()};
}

std::vector<std::uint8_t> ParamArchive::encode() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  append<std::uint16_t>(out, kVersion);
  append<std::uint32_t>(out, static_cast<std::uint32_t>(kind_.size()));
  out.insert(out.end(), kind_.begin(), kind_.end());
  append<std::uint32_t>(out, static_cast<std::uint32_t>(blocks_.size()));
  for (const auto& b : blocks_) {
    append<std::uint16_t>(out, static_cast<std::uint16_t>(b.name.size()));
    out.insert(out.end(), b.name.begin(), b.name.end());
    append<std::uint8_t>(out, static_cast<std::uint8_t>(b.type));
    append<std::uint8_t>(out, static_cast<std::uint8_t>(b.shape.size()));
    for (auto d : b.shape) append<std::uint64_t>(out, d);
    out.insert(out.end(), b.bytes.begin(), b.bytes.end());
  }
  return out;
}

ParamArchive ParamArchive::decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("bad archive magic", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.read<std::uint16_t>("version");
  if (version != kVersion) {
    throw FormatError(fmt::format("unsupported archive version {}", version), version_at);
  }
  const auto kind_len = r.read<std::uint32_t>("kind length");
  const auto kind = r.take(kind_len, "kind");
  ParamArchive a(std::string(kind.begin(), kind.end()));
  const auto count = r.read<std::uint32_t>("block count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t block_at = r.offset();
    ParamBlock b;
    const auto name_len = r.read<std::uint16_t>("block name length");
    const auto name = r.take(name_len, "block name");
    b.name.assign(name.begin(), name.end());
    const std::size_t type_at = r.offset();
    const auto type = r.read<std::uint8_t>("block type");
    if (type > static_cast<std::uint8_t>(BlockType::Text)) {
      throw FormatError(fmt::format("unknown block type {}", type), type_at);
    }
    b.type = static_cast<BlockType>(type);
    const auto ndim = r.read<std::uint8_t>("block rank");
    for (std::uint8_t d = 0; d < ndim; ++d) b.shape.push_back(r.read<std::uint64_t>("block shape"));
    const auto payload = r.take(b.element_count() * type_size(b.type), "block payload");
    b.bytes.assign(payload.begin(), payload.end());
    if (a.contains(b.name)) throw FormatError(fmt::format("duplicate block '{}'", b.name), block_at);
    a.blocks_.push_back(std::move(b));
  }
  if (!r.done()) throw FormatError("trailing bytes after archive", r.offset());
  return a;
}

void ParamArchive::save(const std::filesystem::path& path) const {
  const auto bytes = encode();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

ParamArchive ParamArchive::load(const std::filesystem::path& path, std::string_view expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ParamArchive a;
  try {
    a = decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.detail()), e.offset());
  }
  if (!expected_kind.empty() && a.kind() != expected_kind) {
    throw DataError(fmt::format("{}: archive holds a '{}' model, expected '{}'", path.string(), a.kind(),
                                expected_kind));
  }
  return a;
}

}  // namespace burnscar
