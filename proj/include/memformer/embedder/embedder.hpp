#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memformer/numkernel/init.hpp"
#include "memformer/numkernel/ops.hpp"

namespace memformer {

/// Grid position of a sub-patch inside its window, in tokens.
struct TokenCoord {
    std::size_t row = 0;
    std::size_t col = 0;

    bool operator==(const TokenCoord&) const = default;
};

/// Row-major coordinates of the (window / patch)^2 sub-patches.
std::vector<TokenCoord> token_grid(std::size_t window, std::size_t patch);

/// Splits a window x window x S block (pixel-major, band-minor) into
/// non-overlapping patch x patch x S sub-patches. Token i occupies
/// out[i * patch * patch * S, ...) in (row, col, band) order.
std::vector<double> tokenize(std::span<const double> window_values, std::size_t window, std::size_t bands,
                             std::size_t patch);

/// Batched tokenize: [B, W, W, S] -> [B, N, patch * patch * S], no gradient.
Tensor tokenize_batch(const Tensor& windows, std::size_t patch);

/// Shallow convolution with stride equal to its kernel size: each sub-patch
/// maps to ReLU(<kernel[k], patch> + bias[k]).
class PatchProjector {
public:
    PatchProjector() = default;
    PatchProjector(std::size_t embed, std::size_t patch, std::size_t bands, Rng& rng);

    std::size_t embed() const { return embed_; }
    std::size_t patch() const { return patch_; }
    std::size_t bands() const { return bands_; }

    /// tokens: [..., patch * patch * S] -> [..., K]
    Tensor project(const Tensor& tokens) const;

    Tensor kernel;  // [K, w, w, S]
    Tensor bias;    // [K]

private:
    std::size_t embed_ = 0;
    std::size_t patch_ = 0;
    std::size_t bands_ = 0;
};

enum class PositionalMode { none, learnable, sinusoidal1d, sspe };

std::string_view to_string(PositionalMode mode);
/// Throws std::invalid_argument on an unknown name.
PositionalMode parse_positional_mode(std::string_view name);

/// Constants of the spatial-spectral sinusoids.
struct SSPEConfig {
    double wavelength = 10000.0;  // spatial lambda
    double spectral_scale = 10000.0;  // gamma
    std::size_t sinusoid_dim = 0;  // d
    std::size_t spatial_dim = 0;  // K_s, even; split evenly between row and column
    std::size_t spectral_dim = 0;  // K_sigma, even
};

/// [E_x(row); E_y(col)] where each half interleaves sin/cos of
/// coord / wavelength^(2j / d). Throws on odd spatial_dim.
std::vector<double> sspe_spatial(double row, double col, const SSPEConfig& cfg);

/// Sin/cos encoding of one band index s: entry 2k = sin(s / gamma^(2k / d)),
/// entry 2k + 1 the matching cosine.
std::vector<double> spectral_band_encoding(double band, const SSPEConfig& cfg);

/// Energy-weighted mixture of band encodings: sum_j w_j E(j) with w the
/// profile normalized to sum 1, or uniform when the profile is all zero.
std::vector<double> sspe_spectral(std::span<const double> band_profile, const SSPEConfig& cfg);

/// Standard 1-D sinusoid of a sequence index, width `dim`.
std::vector<double> sinusoid_1d(double position, std::size_t dim, double wavelength, std::size_t sinusoid_dim);

/// Trainable parts of the spatial-spectral embedding.
struct SSPEWeights {
    Tensor spatial_proj;   // [K_s, K]
    Tensor spectral_proj;  // [K_sigma, K]
    Tensor fuse_w1;        // [2K, K]
    Tensor fuse_b1;        // [K]
    Tensor fuse_w2;        // [K, K]
    Tensor fuse_b2;        // [K]
};

/// Builds the positional rows added to the [CLS; tokens] sequence. Row 0
/// (the CLS position) is zero in every mode.
class PositionalEncoder {
public:
    PositionalEncoder() = default;
    PositionalEncoder(PositionalMode mode, std::size_t window, std::size_t patch, std::size_t bands,
                      std::size_t embed, SSPEConfig cfg, Rng& rng);

    PositionalMode mode() const { return mode_; }
    const SSPEConfig& sspe_config() const { return cfg_; }
    std::size_t tokens() const { return coords_.size(); }

    /// tokens: [B, N, w * w * S] (the raw sub-patches; SSPE reads their band
    /// energies). Returns [N + 1, K] for none / learnable / sinusoidal1d and
    /// [B, N + 1, K] for sspe; both broadcast onto [B, N + 1, K] via add().
    Tensor build(const Tensor& tokens) const;

    ParameterList parameters(const std::string& prefix) const;

    Tensor learnable_table;  // [N, K], learnable mode only
    SSPEWeights sspe;        // sspe mode only

private:
    Tensor fixed_rows() const;

    PositionalMode mode_ = PositionalMode::none;
    std::size_t patch_ = 0;
    std::size_t bands_ = 0;
    std::size_t embed_ = 0;
    SSPEConfig cfg_;
    std::vector<TokenCoord> coords_;
    Tensor constant_rows_;   // [N + 1, K] for none / sinusoidal1d
    Tensor spatial_codes_;   // [N, K_s]
    std::vector<double> band_codes_;  // [S, K_sigma]
};

/// Fills zero sinusoid/spatial/spectral dimensions with the embedding width.
SSPEConfig resolve_sspe_config(SSPEConfig cfg, std::size_t embed);

}  // namespace memformer
