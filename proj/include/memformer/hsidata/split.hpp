#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memformer/hsidata/cube.hpp"

namespace memformer {

struct PixelRef {
    std::size_t row = 0;
    std::size_t col = 0;
    std::uint16_t label = 0;  // 1-based class

    auto operator<=>(const PixelRef&) const = default;
};

struct SplitFractions {
    double train = 0.20;
    double val = 0.05;
    double test = 0.50;

    bool operator==(const SplitFractions&) const = default;
};

struct SplitManifest {
    std::vector<PixelRef> train;
    std::vector<PixelRef> val;
    std::vector<PixelRef> test;
    std::uint64_t seed = 0;
    SplitFractions fractions;

    bool operator==(const SplitManifest&) const = default;
};

/// Per-class stratified draw. For a class with n labeled pixels the split
/// sizes are round(fraction * n); anything left over is not used. Throws
/// std::invalid_argument naming the class if any class 1..C has fewer than
/// three labeled pixels.
SplitManifest stratified_split(const LabelMap& labels, SplitFractions fractions, std::uint64_t seed);

/// Text form: "# seed=..." and "# fractions=..." header lines followed by one
/// "split,row,col,class" line per entry.
std::string format_manifest(const SplitManifest& manifest);
SplitManifest parse_manifest(const std::string& text);
void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest load_manifest(const std::filesystem::path& path);

/// 64-bit FNV-1a of the entry lines of format_manifest, as 16 hex digits.
std::string manifest_hash(const SplitManifest& manifest);

}  // namespace memformer
