#include "memformer/embedder/embedder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace memformer {

namespace {

void check_divides(std::size_t window, std::size_t patch) {
    if (patch == 0 || window == 0 || window % patch != 0) {
        throw std::invalid_argument("sub-patch side " + std::to_string(patch) + " does not divide window " +
                                    std::to_string(window));
    }
}

// Interleaved sin/cos of position / base^(2j / d) for entries [0, width).
void write_sinusoid(double position, double base, std::size_t d, std::size_t width, double* out) {
    for (std::size_t e = 0; e < width; ++e) {
        const std::size_t j = e / 2;
        const double angle = position / std::pow(base, 2.0 * static_cast<double>(j) / static_cast<double>(d));
        out[e] = (e % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
}

void check_sspe(const SSPEConfig& cfg) {
    if (cfg.spatial_dim == 0 || cfg.spatial_dim % 2 != 0) {
        throw std::invalid_argument("SSPE spatial dimension must be positive and even, got " +
                                    std::to_string(cfg.spatial_dim));
    }
    if (cfg.spectral_dim == 0 || cfg.spectral_dim % 2 != 0) {
        throw std::invalid_argument("SSPE spectral dimension must be positive and even, got " +
                                    std::to_string(cfg.spectral_dim));
    }
    if (cfg.sinusoid_dim == 0) {
        throw std::invalid_argument("SSPE sinusoid dimension must be positive");
    }
    if (!(cfg.wavelength > 0.0) || !(cfg.spectral_scale > 0.0)) {
        throw std::invalid_argument("SSPE wavelength and spectral scale must be positive");
    }
}

}  // namespace

std::vector<TokenCoord> token_grid(std::size_t window, std::size_t patch) {
    check_divides(window, patch);
    const std::size_t side = window / patch;
    std::vector<TokenCoord> coords;
    coords.reserve(side * side);
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            coords.push_back({r, c});
        }
    }
    return coords;
}

std::vector<double> tokenize(std::span<const double> window_values, std::size_t window, std::size_t bands,
                             std::size_t patch) {
    check_divides(window, patch);
    if (window_values.size() != window * window * bands) {
        throw std::invalid_argument("tokenize: expected " + std::to_string(window * window * bands) + " values, got " +
                                    std::to_string(window_values.size()));
    }
    const std::size_t side = window / patch;
    const std::size_t token_len = patch * patch * bands;
    std::vector<double> out(window_values.size());
    for (std::size_t tr = 0; tr < side; ++tr) {
        for (std::size_t tc = 0; tc < side; ++tc) {
            double* dst = out.data() + (tr * side + tc) * token_len;
            for (std::size_t i = 0; i < patch; ++i) {
                const double* src = window_values.data() + ((tr * patch + i) * window + tc * patch) * bands;
                std::copy(src, src + patch * bands, dst + i * patch * bands);
            }
        }
    }
    return out;
}

Tensor tokenize_batch(const Tensor& windows, std::size_t patch) {
    if (windows.rank() != 4 || windows.dim(1) != windows.dim(2)) {
        throw std::invalid_argument("tokenize_batch: expected [B, W, W, S], got " + shape_string(windows.shape()));
    }
    const std::size_t batch = windows.dim(0);
    const std::size_t window = windows.dim(1);
    const std::size_t bands = windows.dim(3);
    check_divides(window, patch);
    const std::size_t per_sample = window * window * bands;
    std::vector<double> out;
    out.reserve(windows.size());
    for (std::size_t b = 0; b < batch; ++b) {
        auto tokens = tokenize(windows.data().subspan(b * per_sample, per_sample), window, bands, patch);
        out.insert(out.end(), tokens.begin(), tokens.end());
    }
    const std::size_t side = window / patch;
    return Tensor::from({batch, side * side, patch * patch * bands}, std::move(out));
}

PatchProjector::PatchProjector(std::size_t embed, std::size_t patch, std::size_t bands, Rng& rng)
    : embed_(embed), patch_(patch), bands_(bands) {
    const std::size_t fan_in = patch * patch * bands;
    kernel = xavier_uniform({embed, patch, patch, bands}, fan_in, embed, rng);
    bias = Tensor::zeros({embed}, true);
}

Tensor PatchProjector::project(const Tensor& tokens) const {
    if (tokens.rank() == 0 || tokens.shape().back() != patch_ * patch_ * bands_) {
        throw std::invalid_argument("project: sub-patch of shape " + shape_string(tokens.shape()) +
                                    " does not match a " + std::to_string(patch_) + "x" + std::to_string(patch_) +
                                    "x" + std::to_string(bands_) + " kernel");
    }
    return relu(add(matmul_nt(tokens, kernel), bias));
}

std::string_view to_string(PositionalMode mode) {
    switch (mode) {
        case PositionalMode::none: return "none";
        case PositionalMode::learnable: return "learnable";
        case PositionalMode::sinusoidal1d: return "sinusoidal1d";
        case PositionalMode::sspe: return "sspe";
    }
    return "?";
}

PositionalMode parse_positional_mode(std::string_view name) {
    for (auto mode : {PositionalMode::none, PositionalMode::learnable, PositionalMode::sinusoidal1d,
                      PositionalMode::sspe}) {
        if (name == to_string(mode)) {
            return mode;
        }
    }
    throw std::invalid_argument("unknown positional mode \"" + std::string(name) +
                                "\" (expected none, learnable, sinusoidal1d or sspe)");
}

std::vector<double> sspe_spatial(double row, double col, const SSPEConfig& cfg) {
    check_sspe(cfg);
    const std::size_t half = cfg.spatial_dim / 2;
    std::vector<double> out(cfg.spatial_dim);
    write_sinusoid(row, cfg.wavelength, cfg.sinusoid_dim, half, out.data());
    write_sinusoid(col, cfg.wavelength, cfg.sinusoid_dim, half, out.data() + half);
    return out;
}

std::vector<double> spectral_band_encoding(double band, const SSPEConfig& cfg) {
    check_sspe(cfg);
    std::vector<double> out(cfg.spectral_dim);
    write_sinusoid(band, cfg.spectral_scale, cfg.sinusoid_dim, cfg.spectral_dim, out.data());
    return out;
}

std::vector<double> sspe_spectral(std::span<const double> band_profile, const SSPEConfig& cfg) {
    check_sspe(cfg);
    if (band_profile.empty()) {
        throw std::invalid_argument("sspe_spectral: empty band profile");
    }
    double total = 0.0;
    for (double v : band_profile) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("sspe_spectral: band profile entries must be finite and non-negative");
        }
        total += v;
    }
    const double uniform = 1.0 / static_cast<double>(band_profile.size());
    std::vector<double> out(cfg.spectral_dim, 0.0);
    for (std::size_t j = 0; j < band_profile.size(); ++j) {
        const double weight = total > 0.0 ? band_profile[j] / total : uniform;
        if (weight == 0.0) {
            continue;
        }
        const auto code = spectral_band_encoding(static_cast<double>(j), cfg);
        for (std::size_t e = 0; e < out.size(); ++e) {
            out[e] += weight * code[e];
        }
    }
    return out;
}

std::vector<double> sinusoid_1d(double position, std::size_t dim, double wavelength, std::size_t sinusoid_dim) {
    if (dim == 0 || sinusoid_dim == 0 || !(wavelength > 0.0)) {
        throw std::invalid_argument("sinusoid_1d: dimensions and wavelength must be positive");
    }
    std::vector<double> out(dim);
    write_sinusoid(position, wavelength, sinusoid_dim, dim, out.data());
    return out;
}

SSPEConfig resolve_sspe_config(SSPEConfig cfg, std::size_t embed) {
    if (cfg.sinusoid_dim == 0) {
        cfg.sinusoid_dim = embed;
    }
    if (cfg.spatial_dim == 0) {
        cfg.spatial_dim = embed;
    }
    if (cfg.spectral_dim == 0) {
        cfg.spectral_dim = embed;
    }
    return cfg;
}

PositionalEncoder::PositionalEncoder(PositionalMode mode, std::size_t window, std::size_t patch, std::size_t bands,
                                     std::size_t embed, SSPEConfig cfg, Rng& rng)
    : mode_(mode), patch_(patch), bands_(bands), embed_(embed), cfg_(resolve_sspe_config(cfg, embed)),
      coords_(token_grid(window, patch)) {
    const std::size_t n = coords_.size();
    switch (mode_) {
        case PositionalMode::none:
            constant_rows_ = Tensor::zeros({n + 1, embed});
            break;
        case PositionalMode::learnable:
            learnable_table = xavier_uniform({n, embed}, n, embed, rng);
            break;
        case PositionalMode::sinusoidal1d: {
            std::vector<double> rows((n + 1) * embed, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                auto code = sinusoid_1d(static_cast<double>(i), embed, cfg_.wavelength, cfg_.sinusoid_dim);
                std::copy(code.begin(), code.end(), rows.begin() + static_cast<std::ptrdiff_t>((i + 1) * embed));
            }
            constant_rows_ = Tensor::from({n + 1, embed}, std::move(rows));
            break;
        }
        case PositionalMode::sspe: {
            check_sspe(cfg_);
            std::vector<double> spatial;
            spatial.reserve(n * cfg_.spatial_dim);
            for (const auto& c : coords_) {
                auto code = sspe_spatial(static_cast<double>(c.row), static_cast<double>(c.col), cfg_);
                spatial.insert(spatial.end(), code.begin(), code.end());
            }
            spatial_codes_ = Tensor::from({n, cfg_.spatial_dim}, std::move(spatial));
            band_codes_.reserve(bands * cfg_.spectral_dim);
            for (std::size_t s = 0; s < bands; ++s) {
                auto code = spectral_band_encoding(static_cast<double>(s), cfg_);
                band_codes_.insert(band_codes_.end(), code.begin(), code.end());
            }
            sspe.spatial_proj = xavier_uniform({cfg_.spatial_dim, embed}, cfg_.spatial_dim, embed, rng);
            sspe.spectral_proj = xavier_uniform({cfg_.spectral_dim, embed}, cfg_.spectral_dim, embed, rng);
            sspe.fuse_w1 = xavier_uniform({2 * embed, embed}, 2 * embed, embed, rng);
            sspe.fuse_b1 = Tensor::zeros({embed}, true);
            sspe.fuse_w2 = xavier_uniform({embed, embed}, embed, embed, rng);
            sspe.fuse_b2 = Tensor::zeros({embed}, true);
            break;
        }
    }
}

Tensor PositionalEncoder::build(const Tensor& tokens) const {
    const std::size_t n = coords_.size();
    const std::size_t token_len = patch_ * patch_ * bands_;
    if (tokens.rank() != 3 || tokens.dim(1) != n || tokens.dim(2) != token_len) {
        throw std::invalid_argument("positional encoder expects tokens [B, " + std::to_string(n) + ", " +
                                    std::to_string(token_len) + "], got " + shape_string(tokens.shape()));
    }
    switch (mode_) {
        case PositionalMode::none:
        case PositionalMode::sinusoidal1d:
            return constant_rows_;
        case PositionalMode::learnable:
            return reshape(prepend_token(Tensor::zeros({embed_}), reshape(learnable_table, {1, n, embed_})),
                           {n + 1, embed_});
        case PositionalMode::sspe:
            break;
    }

    // Per-token band energy: mean |value| over the token's pixels.
    const std::size_t batch = tokens.dim(0);
    const std::size_t pixels = patch_ * patch_;
    const std::size_t ks = cfg_.spectral_dim;
    auto td = tokens.data();
    std::vector<double> spectral(batch * n * ks, 0.0);
    std::vector<double> profile(bands_);
    for (std::size_t t = 0; t < batch * n; ++t) {
        const double* tok = td.data() + t * token_len;
        std::fill(profile.begin(), profile.end(), 0.0);
        double total = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) {
            for (std::size_t s = 0; s < bands_; ++s) {
                profile[s] += std::abs(tok[p * bands_ + s]);
            }
        }
        for (double v : profile) {
            total += v;
        }
        double* out = spectral.data() + t * ks;
        for (std::size_t s = 0; s < bands_; ++s) {
            const double weight = total > 0.0 ? profile[s] / total : 1.0 / static_cast<double>(bands_);
            const double* code = band_codes_.data() + s * ks;
            for (std::size_t e = 0; e < ks; ++e) {
                out[e] += weight * code[e];
            }
        }
    }
    auto spectral_codes = Tensor::from({batch, n, ks}, std::move(spectral));

    auto spatial = tile(matmul(spatial_codes_, sspe.spatial_proj), batch);
    auto fused_in = concat_last(spatial, matmul(spectral_codes, sspe.spectral_proj));
    auto hidden = relu(add(matmul(fused_in, sspe.fuse_w1), sspe.fuse_b1));
    auto fused = add(matmul(hidden, sspe.fuse_w2), sspe.fuse_b2);
    return prepend_token(Tensor::zeros({embed_}), fused);
}

ParameterList PositionalEncoder::parameters(const std::string& prefix) const {
    switch (mode_) {
        case PositionalMode::learnable:
            return {{prefix + "table", learnable_table}};
        case PositionalMode::sspe:
            return {{prefix + "spatial_proj", sspe.spatial_proj}, {prefix + "spectral_proj", sspe.spectral_proj},
                    {prefix + "fuse_w1", sspe.fuse_w1},           {prefix + "fuse_b1", sspe.fuse_b1},
                    {prefix + "fuse_w2", sspe.fuse_w2},           {prefix + "fuse_b2", sspe.fuse_b2}};
        default:
            return {};
    }
}

}  // namespace memformer
