#include "memformer/hsidata/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace memformer {

namespace {

constexpr int kHarmonics = 3;

void validate(const SynthParams& p) {
    if (p.classes < 2) {
        throw std::invalid_argument("synth_scene: need at least 2 classes");
    }
    if (p.bands < 2) {
        throw std::invalid_argument("synth_scene: need at least 2 bands");
    }
    if (p.height == 0 || p.width == 0) {
        throw std::invalid_argument("synth_scene: extents must be positive");
    }
    if (p.classes > 65535) {
        throw std::invalid_argument("synth_scene: class count exceeds label range");
    }
    if (p.blob_count == 0 || p.height * p.width < p.classes * p.blob_count) {
        throw std::invalid_argument("synth_scene: cannot place " + std::to_string(p.classes * p.blob_count) +
                                    " blobs in a " + std::to_string(p.height) + "x" + std::to_string(p.width) +
                                    " scene");
    }
    if (!(p.noise_sigma >= 0.0) || !std::isfinite(p.noise_sigma)) {
        throw std::invalid_argument("synth_scene: noise sigma must be finite and non-negative");
    }
}

// Smooth signature: offset plus a few low-frequency sinusoids over the band axis.
std::vector<std::vector<float>> draw_signatures(const SynthParams& p, Rng64& rng) {
    std::uniform_real_distribution<double> offset(0.2, 1.0);
    std::uniform_real_distribution<double> amplitude(0.1, 0.5);
    std::uniform_real_distribution<double> frequency(0.5, 2.5);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<std::vector<float>> signatures(p.classes, std::vector<float>(p.bands));
    for (auto& sig : signatures) {
        const double base = offset(rng);
        double amp[kHarmonics], freq[kHarmonics], ph[kHarmonics];
        for (int k = 0; k < kHarmonics; ++k) {
            amp[k] = amplitude(rng);
            freq[k] = frequency(rng);
            ph[k] = phase(rng);
        }
        for (std::size_t s = 0; s < p.bands; ++s) {
            const double t = static_cast<double>(s) / static_cast<double>(p.bands - 1);
            double v = base;
            for (int k = 0; k < kHarmonics; ++k) {
                v += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * t + ph[k]);
            }
            sig[s] = static_cast<float>(v);
        }
    }
    return signatures;
}

}  // namespace

std::vector<std::vector<float>> synth_signatures(const SynthParams& params) {
    validate(params);
    Rng64 rng(params.seed);
    return draw_signatures(params, rng);
}

std::pair<HSICube, LabelMap> synth_scene(const SynthParams& p) {
    validate(p);
    Rng64 rng(p.seed);
    const auto signatures = draw_signatures(p, rng);

    // Distinct seed pixels; seed i belongs to class (i mod C) + 1.
    const std::size_t seeds = p.classes * p.blob_count;
    std::vector<std::size_t> pixels(p.height * p.width);
    std::iota(pixels.begin(), pixels.end(), std::size_t{0});
    std::shuffle(pixels.begin(), pixels.end(), rng);
    pixels.resize(seeds);

    LabelMap labels(p.height, p.width);
    for (std::size_t r = 0; r < p.height; ++r) {
        for (std::size_t c = 0; c < p.width; ++c) {
            std::size_t best = 0;
            long long best_dist = -1;
            for (std::size_t i = 0; i < seeds; ++i) {
                const auto dr = static_cast<long long>(pixels[i] / p.width) - static_cast<long long>(r);
                const auto dc = static_cast<long long>(pixels[i] % p.width) - static_cast<long long>(c);
                const long long dist = dr * dr + dc * dc;
                if (best_dist < 0 || dist < best_dist) {
                    best_dist = dist;
                    best = i;
                }
            }
            labels.set(r, c, static_cast<std::uint16_t>(best % p.classes + 1));
        }
    }

    std::vector<float> values(p.height * p.width * p.bands);
    std::normal_distribution<double> noise(0.0, p.noise_sigma > 0.0 ? p.noise_sigma : 1.0);
    for (std::size_t px = 0; px < p.height * p.width; ++px) {
        const auto& sig = signatures[labels.labels()[px] - 1];
        for (std::size_t s = 0; s < p.bands; ++s) {
            values[px * p.bands + s] =
                p.noise_sigma > 0.0 ? static_cast<float>(sig[s] + noise(rng)) : sig[s];
        }
    }
    return {HSICube(p.height, p.width, p.bands, std::move(values)), std::move(labels)};
}

}  // namespace memformer
