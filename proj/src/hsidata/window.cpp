#include "memformer/hsidata/window.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace memformer {

std::size_t mirror_index(long long index, std::size_t extent) {
    const auto n = static_cast<long long>(extent);
    const long long period = 2 * n;
    long long i = index % period;
    if (i < 0) {
        i += period;
    }
    return static_cast<std::size_t>(i < n ? i : period - 1 - i);
}

void extract_window_into(const HSICube& cube, std::size_t row, std::size_t col, std::size_t size,
                         std::span<double> out) {
    if (size == 0) {
        throw std::invalid_argument("extract_window: window size must be at least 1");
    }
    if (size > 2 * std::min(cube.height(), cube.width())) {
        throw std::invalid_argument("extract_window: window size " + std::to_string(size) +
                                    " exceeds twice the smaller cube extent");
    }
    if (row >= cube.height() || col >= cube.width()) {
        throw std::out_of_range("extract_window: pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                                ") outside the cube");
    }
    const std::size_t bands = cube.bands();
    if (out.size() != size * size * bands) {
        throw std::invalid_argument("extract_window: output buffer has the wrong length");
    }
    const long long top = static_cast<long long>(row) - static_cast<long long>(size / 2);
    const long long left = static_cast<long long>(col) - static_cast<long long>(size / 2);
    for (std::size_t i = 0; i < size; ++i) {
        const std::size_t r = mirror_index(top + static_cast<long long>(i), cube.height());
        for (std::size_t j = 0; j < size; ++j) {
            const std::size_t c = mirror_index(left + static_cast<long long>(j), cube.width());
            auto spectrum = cube.spectrum(r, c);
            std::copy(spectrum.begin(), spectrum.end(), out.begin() + static_cast<std::ptrdiff_t>((i * size + j) * bands));
        }
    }
}

std::vector<float> extract_window(const HSICube& cube, std::size_t row, std::size_t col, std::size_t size) {
    std::vector<double> buffer(size * size * cube.bands());
    extract_window_into(cube, row, col, size, buffer);
    return std::vector<float>(buffer.begin(), buffer.end());
}

}  // namespace memformer
