#include "hiceaa/resample.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "hiceaa/errors.hpp"

namespace hiceaa {

namespace {

struct Tap {
  std::size_t source;
  std::uint64_t weight;
};

// Per-axis coverage in units scaled by `dst` (so every boundary is an integer):
// source pixel k spans [k*dst, (k+1)*dst), output pixel j spans [j*src, (j+1)*src).
// Weights of one output pixel sum to `src`.
std::vector<std::vector<Tap>> axis_taps(std::size_t src, std::size_t dst) {
  std::vector<std::vector<Tap>> taps(dst);
  for (std::size_t j = 0; j < dst; ++j) {
    const std::size_t lo = j * src;
    const std::size_t hi = lo + src;
    for (std::size_t k = lo / dst; k * dst < hi; ++k) {
      const std::size_t overlap = std::min(hi, (k + 1) * dst) - std::max(lo, k * dst);
      if (overlap > 0) {
        taps[j].push_back({k, overlap});
      }
    }
  }
  return taps;
}

}  // namespace

GrayImage downsample_area(const GrayImage& src, std::size_t target_width) {
  const std::size_t w = src.width();
  if (target_width == 0 || target_width > w) {
    throw ResampleError("target width " + std::to_string(target_width) + " outside [1, " +
                        std::to_string(w) + "]");
  }
  if (target_width == w) {
    return src;
  }

  const auto taps = axis_taps(w, target_width);
  // Sum of all weights for one output pixel.
  const std::uint64_t denom = static_cast<std::uint64_t>(w) * w;

  std::vector<std::uint8_t> out(target_width * target_width);
  for (std::size_t i = 0; i < target_width; ++i) {
    for (std::size_t j = 0; j < target_width; ++j) {
      std::uint64_t num = 0;
      for (const auto& ty : taps[i]) {
        for (const auto& tx : taps[j]) {
          num += ty.weight * tx.weight * src.at(ty.source, tx.source);
        }
      }
      // Non-negative, so half away from zero is floor(x + 1/2).
      const std::uint64_t rounded = (2 * num + denom) / (2 * denom);
      out[i * target_width + j] = static_cast<std::uint8_t>(std::min<std::uint64_t>(rounded, 255));
    }
  }
  return GrayImage(target_width, std::move(out));
}

std::size_t count_object_pixels(const GrayImage& img) {
  const auto px = img.pixels();
  return static_cast<std::size_t>(std::count_if(px.begin(), px.end(), [](std::uint8_t p) { return p > 0; }));
}

GrayImage upscale_nearest(const GrayImage& img, std::size_t display_width) {
  const std::size_t w = img.width();
  if (display_width < w) {
    throw ResampleError("display width " + std::to_string(display_width) +
                        " smaller than image width " + std::to_string(w));
  }
  std::vector<std::uint8_t> out(display_width * display_width);
  for (std::size_t i = 0; i < display_width; ++i) {
    const std::size_t si = i * w / display_width;
    for (std::size_t j = 0; j < display_width; ++j) {
      out[i * display_width + j] = img.at(si, j * w / display_width);
    }
  }
  return GrayImage(display_width, std::move(out));
}

}  // namespace hiceaa
