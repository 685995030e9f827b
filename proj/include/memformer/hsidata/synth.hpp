#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "memformer/hsidata/cube.hpp"

namespace memformer {

using Rng64 = std::mt19937_64;

struct SynthParams {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t bands = 16;
    std::size_t classes = 3;
    double noise_sigma = 0.05;
    std::size_t blob_count = 4;  // spatial blobs per class
    std::uint64_t seed = 0;
};

/// Generates a labeled scene: every class gets a smooth random spectral
/// signature, labels form a Voronoi partition around C * blob_count seed
/// pixels, and each pixel is its class signature plus N(0, noise_sigma^2).
/// Every pixel is labeled.
std::pair<HSICube, LabelMap> synth_scene(const SynthParams& params);

/// The noiseless class signatures used by synth_scene for these parameters:
/// row c - 1 holds class c.
std::vector<std::vector<float>> synth_signatures(const SynthParams& params);

}  // namespace memformer
