#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace burnscar {

enum class BlockType : std::uint8_t { F32 = 0, F64 = 1, I64 = 2, Text = 3 };

/// One named, shaped array inside a ParamArchive.
struct ParamBlock {
  std::string name;
  BlockType type = BlockType::F64;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> bytes;  ///< little-endian payload

  std::size_t element_count() const;
};

/// Versioned container of named parameter blocks ("FLGM" magic). Block order is
/// preserved; names are unique.
///
/// Layout: "FLGM", u16 version, u32 kind_len, kind bytes, u32 block count, then per
/// block u16 name_len, name, u8 type, u8 ndim, u64 dims[ndim], payload.
class ParamArchive {
 public:
  static constexpr std::uint16_t kVersion = 1;

  ParamArchive() = default;
  explicit ParamArchive(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }
  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  bool contains(std::string_view name) const noexcept;

  void put(std::string name, std::vector<std::uint64_t> shape, std::span<const float> v);
  void put(std::string name, std::vector<std::uint64_t> shape, std::span<const double> v);
  void put(std::string name, std::vector<std::uint64_t> shape, std::span<const std::int64_t> v);
  void put_text(std::string name, std::string_view text);

  /// Getters throw FormatError when the block is missing or has another type.
  std::vector<float> get_f32(std::string_view name) const;
  std::vector<double> get_f64(std::string_view name) const;
  std::vector<std::int64_t> get_i64(std::string_view name) const;
  std::string get_text(std::string_view name) const;
  const ParamBlock& block(std::string_view name) const;

  std::vector<std::uint8_t> encode() const;
  /// Throws FormatError with the byte offset of the problem.
  static ParamArchive decode(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  /// `expected_kind` (when non-empty) must match the stored kind.
  static ParamArchive load(const std::filesystem::path& path, std::string_view expected_kind = {});

 private:
  void add(ParamBlock block);

  std::string kind_;
  std::vector<ParamBlock> blocks_;
};

}  // namespace burnscar
