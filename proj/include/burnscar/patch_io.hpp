#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "burnscar/raster.hpp"

namespace burnscar {

// FLG1 patch file, little-endian:
//
//   "FLG1" | u16 version | u16 patch_size | u8 band_count | band_count x char[4] name
//   | u8 mask_flags (bit0 truth, bit1 water) | u8 split | u16 id_len | id bytes
//   | f32 pre[band][row][col] | f32 post[band][row][col] | u8 truth[row][col] | u8 water[row][col]
//
// Band names are ASCII, NUL-padded to four bytes.
inline constexpr std::uint16_t kPatchFormatVersion = 1;

std::vector<std::uint8_t> encode_patch(const BitemporalSample& sample);
/// Throws FormatError with the failing byte offset.
BitemporalSample decode_patch(const std::vector<std::uint8_t>& bytes);

void write_patch_file(const BitemporalSample& sample, const std::filesystem::path& path);
BitemporalSample read_patch_file(const std::filesystem::path& path);

struct ManifestEntry {
  std::string event_id;
  Split split = Split::Train;
  std::string path;  ///< relative to the manifest's directory unless absolute
  std::size_t positive_pixels = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  float clip_max = 1.0f;
  std::size_t patch_size = 256;
  std::filesystem::path root;  ///< directory that relative entry paths resolve against

  std::vector<ManifestEntry> split_entries(Split split) const;
  BitemporalSample load(const ManifestEntry& entry) const;
  std::vector<BitemporalSample> load_split(Split split) const;
};

// Manifest text file: '#'-prefixed clip_max/patch_size lines, then a header row
// "event_id,split,path,positive_pixels" and one comma-separated row per patch.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace burnscar
