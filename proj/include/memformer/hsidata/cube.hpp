#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace memformer {

/// H x W x S hyperspectral cube stored pixel-major, band-minor.
class HSICube {
public:
    HSICube(std::size_t height, std::size_t width, std::size_t bands);
    HSICube(std::size_t height, std::size_t width, std::size_t bands, std::vector<float> values);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t bands() const { return bands_; }

    float at(std::size_t row, std::size_t col, std::size_t band) const {
        return values_[(row * width_ + col) * bands_ + band];
    }
    std::span<const float> spectrum(std::size_t row, std::size_t col) const;
    std::span<float> mutable_spectrum(std::size_t row, std::size_t col);
    std::span<const float> values() const { return values_; }

    bool operator==(const HSICube&) const = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::size_t bands_;
    std::vector<float> values_;
};

/// Per-pixel class labels; 0 marks an unlabeled pixel, 1..C are classes.
class LabelMap {
public:
    LabelMap(std::size_t height, std::size_t width);
    LabelMap(std::size_t height, std::size_t width, std::vector<std::uint16_t> labels);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }

    std::uint16_t at(std::size_t row, std::size_t col) const { return labels_[row * width_ + col]; }
    void set(std::size_t row, std::size_t col, std::uint16_t label) { labels_[row * width_ + col] = label; }
    std::span<const std::uint16_t> labels() const { return labels_; }

    /// Largest label present (C).
    std::size_t num_classes() const;
    /// counts[c] = number of pixels labeled c, for c in 0..C.
    std::vector<std::size_t> class_counts() const;

    bool operator==(const LabelMap&) const = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<std::uint16_t> labels_;
};

/// Throws if the label map's extents differ from the cube's.
void check_aligned(const HSICube& cube, const LabelMap& labels);

// HSC1: "HSC1", u32 H, W, S, then H*W*S f32, all little-endian.
HSICube load_cube(const std::filesystem::path& path);
void save_cube(const HSICube& cube, const std::filesystem::path& path);
HSICube decode_cube(std::vector<std::uint8_t> bytes);
std::vector<std::uint8_t> encode_cube(const HSICube& cube);

// HSL1: "HSL1", u32 H, W, then H*W u16 labels row-major.
LabelMap load_labels(const std::filesystem::path& path);
void save_labels(const LabelMap& labels, const std::filesystem::path& path);
LabelMap decode_labels(std::vector<std::uint8_t> bytes);
std::vector<std::uint8_t> encode_labels(const LabelMap& labels);

}  // namespace memformer
