#include <array>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <zlib.h>

#include "bmaforge/data.hpp"
#include "bmaforge/error.hpp"

namespace bmaforge {
namespace {

constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::uint32_t kImageMagic = 0x00000803;

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

// gzread also reads uncompressed files transparently.
GzHandle open_read(const std::string& path) {
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw IoError(fmt::format("cannot open {}", path));
  return f;
}

void read_exact(gzFile f, void* dst, std::size_t n, const std::string& path) {
  const int got = gzread(f, dst, static_cast<unsigned>(n));
  if (got < 0 || static_cast<std::size_t>(got) != n) {
    throw ParseError(fmt::format("{}: truncated IDX payload", path));
  }
}

std::uint32_t read_be32(gzFile f, const std::string& path) {
  std::array<unsigned char, 4> b{};
  read_exact(f, b.data(), b.size(), path);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<unsigned char> bytes;
};

IdxArray read_idx(const std::string& path, std::uint32_t expected_magic) {
  GzHandle f = open_read(path);
  const std::uint32_t magic = read_be32(f.get(), path);
  if (magic != expected_magic) {
    throw ParseError(fmt::format("{}: bad IDX magic 0x{:08x}, expected 0x{:08x}", path, magic,
                                 expected_magic));
  }
  IdxArray a;
  std::size_t total = 1;
  for (std::uint32_t d = 0; d < (magic & 0xFF); ++d) {
    a.dims.push_back(read_be32(f.get(), path));
    total *= a.dims.back();
  }
  a.bytes.resize(total);
  if (total > 0) read_exact(f.get(), a.bytes.data(), total, path);
  return a;
}

GzHandle open_write(const std::string& path) {
  const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  GzHandle f(gzopen(path.c_str(), gz ? "wb9" : "wbT"));
  if (!f) throw IoError(fmt::format("cannot open {} for writing", path));
  return f;
}

void write_be32(gzFile f, std::uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v >> 24),
                                       static_cast<unsigned char>(v >> 16),
                                       static_cast<unsigned char>(v >> 8),
                                       static_cast<unsigned char>(v)};
  gzwrite(f, b.data(), 4);
}

void finish(GzHandle f, const std::string& path) {
  if (gzclose(f.release()) != Z_OK) throw IoError(fmt::format("failed writing {}", path));
}

}  // namespace

ImageSet load_idx(const std::string& path) {
  IdxArray a = read_idx(path, kImageMagic);
  ImageSet images;
  images.rows = static_cast<int>(a.dims[1]);
  images.cols = static_cast<int>(a.dims[2]);
  const Index n = a.dims[0];
  const Index px = Index{images.rows} * images.cols;
  images.pixels.resize(n, px);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < px; ++j) {
      images.pixels(i, j) = a.bytes[static_cast<std::size_t>(i * px + j)] / 255.0;
    }
  }
  return images;
}

std::vector<int> load_idx_labels(const std::string& path) {
  IdxArray a = read_idx(path, kLabelMagic);
  return {a.bytes.begin(), a.bytes.end()};
}

ImageSet load_idx(const std::string& image_path, const std::string& label_path) {
  ImageSet images = load_idx(image_path);
  images.labels = load_idx_labels(label_path);
  if (images.labels.size() != static_cast<std::size_t>(images.size())) {
    throw ParseError(fmt::format("{} images but {} labels", images.size(), images.labels.size()));
  }
  return images;
}

void write_idx_images(const ImageSet& images, const std::string& path) {
  if (images.channels != 1) throw DimensionError("IDX image files hold single-channel images");
  GzHandle f = open_write(path);
  write_be32(f.get(), kImageMagic);
  write_be32(f.get(), static_cast<std::uint32_t>(images.size()));
  write_be32(f.get(), static_cast<std::uint32_t>(images.rows));
  write_be32(f.get(), static_cast<std::uint32_t>(images.cols));
  std::vector<unsigned char> bytes(static_cast<std::size_t>(images.pixels.size()));
  std::size_t k = 0;
  for (Index i = 0; i < images.pixels.rows(); ++i) {
    for (Index j = 0; j < images.pixels.cols(); ++j) {
      const double v = std::clamp(images.pixels(i, j), 0.0, 1.0);
      bytes[k++] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  if (!bytes.empty()) gzwrite(f.get(), bytes.data(), static_cast<unsigned>(bytes.size()));
  finish(std::move(f), path);
}

void write_idx_labels(std::span<const int> labels, const std::string& path) {
  GzHandle f = open_write(path);
  write_be32(f.get(), kLabelMagic);
  write_be32(f.get(), static_cast<std::uint32_t>(labels.size()));
  std::vector<unsigned char> bytes;
  for (int l : labels) {
    if (l < 0 || l > 255) throw DimensionError(fmt::format("label {} does not fit a byte", l));
    bytes.push_back(static_cast<unsigned char>(l));
  }
  if (!bytes.empty()) gzwrite(f.get(), bytes.data(), static_cast<unsigned>(bytes.size()));
  finish(std::move(f), path);
}

}  // namespace bmaforge
