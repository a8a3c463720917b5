#pragma once

#include <string>

#include "ssdiff/array.hpp"

namespace ssdiff {

/// rgb is (3,H,W) in [0,1]; values are clipped.
void write_png_rgb(const std::string& path, const Array& rgb);

/// Band triplet 4,2,1 for 8-band imagery, 2,1,0 for 4-band, else first band
/// replicated.
Array rgb_preview(const Array& img);

/// Colormapped per-pixel mean absolute error, normalized by its maximum.
Array error_heatmap(const Array& pred, const Array& gt);

}  // namespace ssdiff
