#include "burnscar/patch_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>

#include "burnscar/error.hpp"

namespace burnscar {

namespace {

static_assert(std::endian::native == std::endian::little,
              "patch encoding assumes a little-endian host");

constexpr char kMagic[4] = {'F', 'L', 'G', '1'};
constexpr std::uint8_t kTruthFlag = 0x1;
constexpr std::uint8_t kWaterFlag = 0x2;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xff));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1, "u8");
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2, "u16");
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  void raw(void* out, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(fmt::format("truncated patch file while reading {} ({} bytes needed, {} left)",
                                    what, n, bytes_.size() - pos_),
                        pos_);
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_patch(const BitemporalSample& sample) {
  sample.validate();
  if (sample.height() != sample.width()) {
    throw DataError("FLG1 stores square patches only");
  }
  if (sample.height() > 0xffff) throw DataError("patch too large for FLG1");
  if (sample.event_id.size() > 0xffff) throw DataError("event id too long for FLG1");

  ByteWriter w;
  w.raw(kMagic, 4);
  w.u16(kPatchFormatVersion);
  w.u16(static_cast<std::uint16_t>(sample.height()));
  w.u8(static_cast<std::uint8_t>(sample.pre.bands().size()));
  for (BandId b : sample.pre.bands()) {
    char name[4] = {0, 0, 0, 0};
    const auto s = band_name(b);
    std::memcpy(name, s.data(), s.size());
    w.raw(name, 4);
  }
  w.u8(static_cast<std::uint8_t>(kTruthFlag | (sample.water ? kWaterFlag : 0)));
  w.u8(static_cast<std::uint8_t>(sample.split));
  w.u16(static_cast<std::uint16_t>(sample.event_id.size()));
  w.raw(sample.event_id.data(), sample.event_id.size());
  w.raw(sample.pre.data().data(), sample.pre.data().size_bytes());
  w.raw(sample.post.data().data(), sample.post.data().size_bytes());
  w.raw(sample.truth.labels.data(), sample.truth.labels.size());
  if (sample.water) w.raw(sample.water->labels.data(), sample.water->labels.size());
  return w.take();
}

BitemporalSample decode_patch(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, expected FLG1", 0);
  const std::size_t version_at = r.pos();
  const auto version = r.u16();
  if (version != kPatchFormatVersion) {
    throw FormatError(fmt::format("unsupported FLG1 version {}", version), version_at);
  }
  const std::size_t size = r.u16();
  const std::size_t band_count = r.u8();
  const std::size_t bands_at = r.pos();
  std::vector<BandId> bands;
  for (std::size_t i = 0; i < band_count; ++i) {
    const std::size_t at = r.pos();
    char name[5] = {0, 0, 0, 0, 0};
    r.raw(name, 4, "band name");
    try {
      bands.push_back(parse_band(std::string_view(name)));
    } catch (const DataError&) {
      throw FormatError(fmt::format("unknown band name '{}'", std::string_view(name)), at);
    }
  }
  const std::size_t flags_at = r.pos();
  const auto flags = r.u8();
  if (!(flags & kTruthFlag) || (flags & ~(kTruthFlag | kWaterFlag))) {
    throw FormatError(fmt::format("invalid mask flags 0x{:02x}", flags), flags_at);
  }
  const std::size_t split_at = r.pos();
  const auto split = r.u8();
  if (split > 2) throw FormatError("invalid split code", split_at);
  std::string event_id(r.u16(), '\0');
  r.raw(event_id.data(), event_id.size(), "event id");

  const std::size_t n = size * size * band_count;
  std::vector<float> pre(n), post(n);
  r.raw(pre.data(), n * sizeof(float), "pre-fire array");
  r.raw(post.data(), n * sizeof(float), "post-fire array");

  BitemporalSample s;
  try {
    s.pre = RasterPatch(size, size, bands, std::move(pre));
    s.post = RasterPatch(size, size, bands, std::move(post));
  } catch (const DataError& e) {
    throw FormatError(e.what(), bands_at);
  }
  s.truth = BinaryMask(size, size);
  r.raw(s.truth.labels.data(), s.truth.labels.size(), "truth mask");
  if (flags & kWaterFlag) {
    s.water = BinaryMask(size, size);
    r.raw(s.water->labels.data(), s.water->labels.size(), "water mask");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after payload", r.pos());
  s.event_id = std::move(event_id);
  s.split = static_cast<Split>(split);
  return s;
}

void write_patch_file(const BitemporalSample& sample, const std::filesystem::path& path) {
  const auto bytes = encode_patch(sample);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(fmt::format("write failed for '{}'", path.string()));
}

BitemporalSample read_patch_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_patch(bytes);
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.detail()), e.offset());
  }
}

std::vector<ManifestEntry> DatasetManifest::split_entries(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

BitemporalSample DatasetManifest::load(const ManifestEntry& entry) const {
  std::filesystem::path p(entry.path);
  if (p.is_relative()) p = root / p;
  auto sample = read_patch_file(p);
  sample.event_id = entry.event_id;
  sample.split = entry.split;
  return sample;
}

std::vector<BitemporalSample> DatasetManifest::load_split(Split split) const {
  std::vector<BitemporalSample> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(load(e));
  }
  return out;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  out << fmt::format("# clip_max={}\n# patch_size={}\n", manifest.clip_max, manifest.patch_size);
  out << "event_id,split,path,positive_pixels\n";
  for (const auto& e : manifest.entries) {
    if (e.event_id.find(',') != std::string::npos || e.path.find(',') != std::string::npos) {
      throw DataError("manifest fields must not contain commas");
    }
    out << fmt::format("{},{},{},{}\n", e.event_id, split_name(e.split), e.path, e.positive_pixels);
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open manifest '{}'", path.string()));
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      const std::string value = line.substr(eq + 1);
      try {
        if (key == "clip_max") m.clip_max = std::stof(value);
        if (key == "patch_size") m.patch_size = std::stoul(value);
      } catch (const std::exception&) {
        throw DataError(fmt::format("{}:{}: bad value for {}", path.string(), line_no, key));
      }
      continue;
    }
    if (!header_seen) {
      if (line != "event_id,split,path,positive_pixels") {
        throw DataError(fmt::format("{}:{}: unexpected manifest header", path.string(), line_no));
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) {
      throw DataError(fmt::format("{}:{}: expected 4 fields", path.string(), line_no));
    }
    ManifestEntry e;
    e.event_id = fields[0];
    e.split = parse_split(fields[1]);
    e.path = fields[2];
    try {
      e.positive_pixels = std::stoul(fields[3]);
    } catch (const std::exception&) {
      throw DataError(fmt::format("{}:{}: bad positive_pixels", path.string(), line_no));
    }
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw DataError(fmt::format("manifest '{}' has no header", path.string()));
  return m;
}

}  // namespace burnscar
