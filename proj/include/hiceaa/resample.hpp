#pragma once

#include <cstddef>

#include "hiceaa/dataset.hpp"

namespace hiceaa {

/// 3.25 inch at the 96 px/inch CSS reference density.
inline constexpr std::size_t kDefaultDisplayPx = 312;

/// Area decimation. Output pixel (i, j) is the coverage-weighted mean of the
/// source over the box [j*s, (j+1)*s) x [i*s, (i+1)*s), s = src.width / target_width,
/// rounded half away from zero. The weights are exact rationals, so the result
/// does not depend on floating-point evaluation order.
///
/// Throws ResampleError unless 1 <= target_width <= src.width().
GrayImage downsample_area(const GrayImage& src, std::size_t target_width);

/// Number of pixels with intensity > 0.
std::size_t count_object_pixels(const GrayImage& img);

/// Nearest-neighbor projection: output (i, j) copies source (i*w/W, j*w/W).
/// Throws ResampleError when display_width < img.width().
GrayImage upscale_nearest(const GrayImage& img, std::size_t display_width);

}  // namespace hiceaa
