#include "memformer/hsidata/cube.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "memformer/common/byteio.hpp"

namespace memformer {

namespace {

constexpr std::size_t kCubeHeaderBytes = 16;
constexpr std::size_t kLabelHeaderBytes = 12;

std::size_t checked_product(std::initializer_list<std::uint64_t> extents, std::size_t offset) {
    std::uint64_t total = 1;
    for (auto e : extents) {
        if (e != 0 && total > std::numeric_limits<std::uint64_t>::max() / e) {
            throw byteio::FormatError(offset, "extent overflow");
        }
        total *= e;
    }
    if (total > std::numeric_limits<std::size_t>::max() / 8) {
        throw byteio::FormatError(offset, "extent overflow");
    }
    return static_cast<std::size_t>(total);
}

}  // namespace

HSICube::HSICube(std::size_t height, std::size_t width, std::size_t bands)
    : HSICube(height, width, bands, std::vector<float>(height * width * bands, 0.0f)) {}

HSICube::HSICube(std::size_t height, std::size_t width, std::size_t bands, std::vector<float> values)
    : height_(height), width_(width), bands_(bands), values_(std::move(values)) {
    if (height == 0 || width == 0 || bands == 0) {
        throw std::invalid_argument("cube extents must be at least 1");
    }
    if (values_.size() != height * width * bands) {
        throw std::invalid_argument("cube needs " + std::to_string(height * width * bands) + " values, got " +
                                    std::to_string(values_.size()));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw std::invalid_argument("cube value " + std::to_string(i) + " is not finite");
        }
    }
}

std::span<const float> HSICube::spectrum(std::size_t row, std::size_t col) const {
    return std::span<const float>(values_).subspan((row * width_ + col) * bands_, bands_);
}

std::span<float> HSICube::mutable_spectrum(std::size_t row, std::size_t col) {
    return std::span<float>(values_).subspan((row * width_ + col) * bands_, bands_);
}

LabelMap::LabelMap(std::size_t height, std::size_t width)
    : LabelMap(height, width, std::vector<std::uint16_t>(height * width, 0)) {}

LabelMap::LabelMap(std::size_t height, std::size_t width, std::vector<std::uint16_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
    if (height == 0 || width == 0) {
        throw std::invalid_argument("label map extents must be at least 1");
    }
    if (labels_.size() != height * width) {
        throw std::invalid_argument("label map needs " + std::to_string(height * width) + " labels, got " +
                                    std::to_string(labels_.size()));
    }
}

std::size_t LabelMap::num_classes() const {
    return *std::max_element(labels_.begin(), labels_.end());
}

std::vector<std::size_t> LabelMap::class_counts() const {
    std::vector<std::size_t> counts(num_classes() + 1, 0);
    for (auto l : labels_) {
        ++counts[l];
    }
    return counts;
}

void check_aligned(const HSICube& cube, const LabelMap& labels) {
    if (cube.height() != labels.height() || cube.width() != labels.width()) {
        throw std::invalid_argument("label map is " + std::to_string(labels.height()) + "x" +
                                    std::to_string(labels.width()) + " but cube is " + std::to_string(cube.height()) +
                                    "x" + std::to_string(cube.width()));
    }
}

std::vector<std::uint8_t> encode_cube(const HSICube& cube) {
    byteio::Writer w;
    w.raw("HSC1");
    w.u32(static_cast<std::uint32_t>(cube.height()));
    w.u32(static_cast<std::uint32_t>(cube.width()));
    w.u32(static_cast<std::uint32_t>(cube.bands()));
    for (float v : cube.values()) {
        w.f32(v);
    }
    return w.bytes();
}

HSICube decode_cube(std::vector<std::uint8_t> bytes) {
    byteio::Reader r(std::move(bytes));
    r.expect_magic("HSC1");
    const std::uint32_t h = r.u32("height");
    const std::uint32_t w = r.u32("width");
    const std::uint32_t s = r.u32("band count");
    if (h == 0 || w == 0 || s == 0) {
        throw byteio::FormatError(4, "zero extent in header " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                                         std::to_string(s));
    }
    const std::size_t count = checked_product({h, w, s}, 4);
    if (r.remaining() < count * 4) {
        throw byteio::FormatError(kCubeHeaderBytes, "truncated payload: header declares " + std::to_string(h) + "x" +
                                                        std::to_string(w) + "x" + std::to_string(s) + " needing " +
                                                        std::to_string(count * 4) + " bytes, found " +
                                                        std::to_string(r.remaining()));
    }
    std::vector<float> values(count);
    for (auto& v : values) {
        const std::size_t at = r.position();
        v = r.f32("payload");
        if (!std::isfinite(v)) {
            throw byteio::FormatError(at, "non-finite cube value");
        }
    }
    if (r.remaining() != 0) {
        throw byteio::FormatError(r.position(), std::to_string(r.remaining()) + " trailing bytes after payload");
    }
    return HSICube(h, w, s, std::move(values));
}

HSICube load_cube(const std::filesystem::path& path) { return decode_cube(byteio::read_file(path)); }

void save_cube(const HSICube& cube, const std::filesystem::path& path) {
    byteio::write_file(path, encode_cube(cube));
}

std::vector<std::uint8_t> encode_labels(const LabelMap& labels) {
    byteio::Writer w;
    w.raw("HSL1");
    w.u32(static_cast<std::uint32_t>(labels.height()));
    w.u32(static_cast<std::uint32_t>(labels.width()));
    for (auto l : labels.labels()) {
        w.u16(l);
    }
    return w.bytes();
}

LabelMap decode_labels(std::vector<std::uint8_t> bytes) {
    byteio::Reader r(std::move(bytes));
    r.expect_magic("HSL1");
    const std::uint32_t h = r.u32("height");
    const std::uint32_t w = r.u32("width");
    if (h == 0 || w == 0) {
        throw byteio::FormatError(4, "zero extent in header " + std::to_string(h) + "x" + std::to_string(w));
    }
    const std::size_t count = checked_product({h, w}, 4);
    if (r.remaining() < count * 2) {
        throw byteio::FormatError(kLabelHeaderBytes, "truncated payload: header declares " + std::to_string(h) + "x" +
                                                         std::to_string(w) + " needing " + std::to_string(count * 2) +
                                                         " bytes, found " + std::to_string(r.remaining()));
    }
    std::vector<std::uint16_t> labels(count);
    for (auto& l : labels) {
        l = r.u16("labels");
    }
    if (r.remaining() != 0) {
        throw byteio::FormatError(r.position(), std::to_string(r.remaining()) + " trailing bytes after payload");
    }
    return LabelMap(h, w, std::move(labels));
}

LabelMap load_labels(const std::filesystem::path& path) { return decode_labels(byteio::read_file(path)); }

void save_labels(const LabelMap& labels, const std::filesystem::path& path) {
    byteio::write_file(path, encode_labels(labels));
}

}  // namespace memformer
