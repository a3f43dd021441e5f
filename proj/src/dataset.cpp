#include "hiceaa/dataset.hpp"

#include <zlib.h>

#include <array>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "hiceaa/errors.hpp"

namespace hiceaa {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
  std::array<char, 11> buf{};
  std::snprintf(buf.data(), buf.size(), "0x%08x", v);
  return buf.data();
}

void check_magic(std::span<const std::uint8_t> bytes, std::uint32_t expected) {
  if (bytes.size() < 4) {
    throw FormatError(FormatError::Reason::length, "IDX header truncated");
  }
  const auto magic = read_be32(bytes, 0);
  if (magic != expected) {
    throw FormatError(FormatError::Reason::magic,
                      "bad IDX magic " + hex32(magic) + ", expected " + hex32(expected));
  }
}

std::vector<std::uint8_t> inflate_gzip(const std::vector<std::uint8_t>& in, const std::string& name) {
  z_stream zs{};
  // 16 + MAX_WBITS: gzip wrapper only.
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw IoError("inflateInit2 failed for " + name);
  }
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());

  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IoError("corrupt gzip stream in " + name);
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw IoError("truncated gzip stream in " + name);
    }
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace

GrayImage::GrayImage(std::size_t width, std::vector<std::uint8_t> pixels)
    : width_(width), pixels_(std::move(pixels)) {
  if (pixels_.size() != width_ * width_) {
    throw UnsupportedShape("image of width " + std::to_string(width_) + " needs " +
                           std::to_string(width_ * width_) + " pixels, got " +
                           std::to_string(pixels_.size()));
  }
}

GrayImage GrayImage::filled(std::size_t width, std::uint8_t value) {
  return GrayImage(width, std::vector<std::uint8_t>(width * width, value));
}

std::vector<GrayImage> parse_idx_images(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kIdxImagesMagic);
  if (bytes.size() < 16) {
    throw FormatError(FormatError::Reason::length, "IDX image header truncated");
  }
  const std::size_t n = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  if (rows != cols) {
    throw UnsupportedShape("non-square IDX images: " + std::to_string(rows) + "x" +
                           std::to_string(cols));
  }
  const std::size_t plane = rows * cols;
  const std::size_t expected = 16 + n * plane;
  if (bytes.size() != expected) {
    throw FormatError(FormatError::Reason::length,
                      "IDX image payload is " + std::to_string(bytes.size()) + " bytes, header implies " +
                          std::to_string(expected));
  }

  std::vector<GrayImage> images;
  images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* first = bytes.data() + 16 + i * plane;
    images.emplace_back(cols, std::vector<std::uint8_t>(first, first + plane));
  }
  return images;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kIdxLabelsMagic);
  if (bytes.size() < 8) {
    throw FormatError(FormatError::Reason::length, "IDX label header truncated");
  }
  const std::size_t n = read_be32(bytes, 4);
  if (bytes.size() != 8 + n) {
    throw FormatError(FormatError::Reason::length,
                      "IDX label payload is " + std::to_string(bytes.size() - 8) +
                          " bytes, header implies " + std::to_string(n));
  }
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9) {
      throw FormatError(FormatError::Reason::label, "label " + std::to_string(labels[i]) +
                                                        " at index " + std::to_string(i) +
                                                        " outside 0..9");
    }
  }
  return labels;
}

std::vector<std::uint8_t> serialize_idx_images(std::span<const GrayImage> images, std::size_t width) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size() * width * width);
  write_be32(out, kIdxImagesMagic);
  write_be32(out, static_cast<std::uint32_t>(images.size()));
  write_be32(out, static_cast<std::uint32_t>(width));
  write_be32(out, static_cast<std::uint32_t>(width));
  for (const auto& img : images) {
    if (img.width() != width) {
      throw UnsupportedShape("mixed image widths in one IDX file");
    }
    out.insert(out.end(), img.pixels().begin(), img.pixels().end());
  }
  return out;
}

std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kIdxLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

Split pair_examples(std::vector<GrayImage> images, std::span<const std::uint8_t> labels) {
  if (images.size() != labels.size()) {
    throw FormatError(FormatError::Reason::length,
                      "image/label count mismatch: " + std::to_string(images.size()) + " images, " +
                          std::to_string(labels.size()) + " labels");
  }
  Split split;
  split.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width() != kMnistWidth) {
      throw UnsupportedShape("examples must be 28x28, got width " + std::to_string(images[i].width()));
    }
    split.push_back(LabeledExample{std::move(images[i]), labels[i], i});
  }
  return split;
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read failed for " + path.string());
  }
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) {
    return inflate_gzip(raw, path.string());
  }
  return raw;
}

namespace {

std::filesystem::path locate(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& candidate : {dir / stem, dir / (stem + ".gz")}) {
    if (std::filesystem::exists(candidate)) {
      return candidate;
    }
  }
  throw IoError("missing " + stem + "[.gz] in " + dir.string());
}

}  // namespace

Split load_split(const std::filesystem::path& dir, SplitName which) {
  const std::string prefix = which == SplitName::train ? "train" : "t10k";
  auto images = parse_idx_images(read_maybe_gzip(locate(dir, prefix + "-images-idx3-ubyte")));
  const auto labels = parse_idx_labels(read_maybe_gzip(locate(dir, prefix + "-labels-idx1-ubyte")));
  return pair_examples(std::move(images), labels);
}

std::filesystem::path resolve_dataset_dir(const std::filesystem::path& flag_value) {
  if (!flag_value.empty()) {
    return flag_value;
  }
  if (const char* env = std::getenv("HICEAA_DATA"); env != nullptr && *env != '\0') {
    return env;
  }
  return {};
}

const LabeledExample& sample_example(std::span<const LabeledExample> split, Rng& rng) {
  if (split.empty()) {
    throw EmptyDataset();
  }
  return split[rng.below(split.size())];
}

Split subsample(std::span<const LabeledExample> split, std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  n = std::min(n, order.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + rng.below(order.size() - i);
    std::swap(order[i], order[j]);
  }
  Split out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(split[order[i]]);
  }
  return out;
}

Split balanced_subsample(std::span<const LabeledExample> split, std::size_t per_class, Rng& rng) {
  std::array<std::vector<std::size_t>, 10> by_label;
  for (std::size_t i = 0; i < split.size(); ++i) {
    by_label[split[i].label].push_back(i);
  }
  Split out;
  for (auto& members : by_label) {
    const auto take = std::min(per_class, members.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + rng.below(members.size() - i);
      std::swap(members[i], members[j]);
    }
    for (std::size_t i = 0; i < take; ++i) {
      out.push_back(split[members[i]]);
    }
  }
  return out;
}

}  // namespace hiceaa
