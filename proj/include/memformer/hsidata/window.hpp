#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "memformer/hsidata/cube.hpp"

namespace memformer {

/// Maps a possibly out-of-range coordinate onto [0, extent) by mirroring
/// about the border with the edge sample repeated (-1 -> 0, extent -> extent - 1).
std::size_t mirror_index(long long index, std::size_t extent);

/// size x size x S window whose top-left corner sits at
/// (row - size / 2, col - size / 2); out-of-bounds pixels are mirror padded.
/// Requires 1 <= size <= 2 * min(H, W).
std::vector<float> extract_window(const HSICube& cube, std::size_t row, std::size_t col, std::size_t size);

/// Same as extract_window, writing into `out` (size * size * S values).
void extract_window_into(const HSICube& cube, std::size_t row, std::size_t col, std::size_t size,
                         std::span<double> out);

}  // namespace memformer
