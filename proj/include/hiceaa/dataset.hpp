#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hiceaa/random.hpp"

namespace hiceaa {

/// Square 8-bit grayscale raster, row-major. Intensity 0 is background.
class GrayImage {
 public:
  GrayImage() = default;
  /// Throws UnsupportedShape when pixels.size() != width * width.
  GrayImage(std::size_t width, std::vector<std::uint8_t> pixels);
  static GrayImage filled(std::size_t width, std::uint8_t value);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return width_; }
  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels_[row * width_ + col]; }
  std::uint8_t& at(std::size_t row, std::size_t col) { return pixels_[row * width_ + col]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

inline constexpr std::size_t kMnistWidth = 28;

struct LabeledExample {
  GrayImage image;            // 28x28
  std::uint8_t label = 0;     // 0..9
  std::size_t dataset_index = 0;  // position in the source file

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

/// Immutable collection of examples; safe for concurrent readers.
using Split = std::vector<LabeledExample>;

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// IDX container (big-endian header). Parsers consume the whole buffer.
std::vector<GrayImage> parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx_images(std::span<const GrayImage> images, std::size_t width);
std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels);

/// Zips images with labels; throws FormatError(length) on a count mismatch.
Split pair_examples(std::vector<GrayImage> images, std::span<const std::uint8_t> labels);

/// Reads a file, transparently inflating it when it starts with the gzip magic.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

enum class SplitName {
  train,       // 60k train file, used by the machine baseline
  validation,  // 10k t10k file, the labeling study pool
};

/// Loads one of the canonical MNIST file pairs from `dir`. Each file may be
/// raw or gzipped and named with or without the `.gz` suffix.
Split load_split(const std::filesystem::path& dir, SplitName which);

/// Resolves the dataset directory: explicit flag value, else $HICEAA_DATA.
/// Returns an empty path when neither is set.
std::filesystem::path resolve_dataset_dir(const std::filesystem::path& flag_value);

/// Uniform draw from `split`. Throws EmptyDataset.
const LabeledExample& sample_example(std::span<const LabeledExample> split, Rng& rng);

/// `n` distinct examples chosen uniformly without replacement, in draw order.
/// n larger than the split returns a shuffled copy of the whole split.
Split subsample(std::span<const LabeledExample> split, std::size_t n, Rng& rng);

/// Up to `per_class` randomly chosen examples of every label, grouped by label.
Split balanced_subsample(std::span<const LabeledExample> split, std::size_t per_class, Rng& rng);

}  // namespace hiceaa
