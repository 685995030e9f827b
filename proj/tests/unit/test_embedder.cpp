#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "memformer/embedder/embedder.hpp"
#include "memformer/numkernel/gradcheck.hpp"

using namespace memformer;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) {
        v = dist(rng);
    }
    return Tensor::from(std::move(shape), std::move(values));
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return std::sqrt(d);
}

std::vector<double> row_of(const Tensor& t, std::size_t row) {
    const std::size_t width = t.shape().back();
    auto d = t.data().subspan(row * width, width);
    return {d.begin(), d.end()};
}

void fill(Tensor t, double value) {
    for (auto& v : t.mutable_data()) {
        v = value;
    }
}

SSPEConfig small_sspe(std::size_t spatial, std::size_t spectral, std::size_t d) {
    SSPEConfig cfg;
    cfg.sinusoid_dim = d;
    cfg.spatial_dim = spatial;
    cfg.spectral_dim = spectral;
    return cfg;
}

}  // namespace

TEST_CASE("tokenize examples") {
    CHECK(token_grid(14, 2).size() == 49);
    auto single = token_grid(14, 14);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == TokenCoord{0, 0});
    CHECK(token_grid(4, 2) == std::vector<TokenCoord>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    CHECK_THROWS_AS(token_grid(14, 3), std::invalid_argument);
    CHECK_THROWS_AS(tokenize(std::vector<double>(14 * 14), 14, 1, 4), std::invalid_argument);
}

TEST_CASE("tokenization partitions the window") {
    Rng rng(4);
    for (std::size_t patch : {1u, 2u, 3u, 6u}) {
        const std::size_t window = 6;
        const std::size_t bands = 3;
        auto values = random_tensor({window * window * bands}, rng);
        auto tokens = tokenize(values.data(), window, bands, patch);
        const auto coords = token_grid(window, patch);
        const std::size_t token_len = patch * patch * bands;
        // Reassemble the window from the tokens and compare exactly.
        std::vector<double> rebuilt(values.size(), NAN);
        for (std::size_t t = 0; t < coords.size(); ++t) {
            for (std::size_t i = 0; i < patch; ++i) {
                for (std::size_t j = 0; j < patch; ++j) {
                    for (std::size_t b = 0; b < bands; ++b) {
                        const std::size_t r = coords[t].row * patch + i;
                        const std::size_t c = coords[t].col * patch + j;
                        rebuilt[(r * window + c) * bands + b] = tokens[t * token_len + (i * patch + j) * bands + b];
                    }
                }
            }
        }
        CHECK(rebuilt == std::vector<double>(values.data().begin(), values.data().end()));
    }
}

TEST_CASE("project examples") {
    Rng rng(1);
    PatchProjector projector(4, 2, 3, rng);
    auto patch = random_tensor({1, 12}, rng);

    fill(projector.kernel, 0.0);
    fill(projector.bias, 0.5);
    auto biased = projector.project(patch);
    for (double v : biased.data()) {
        CHECK(v == 0.5);
    }
    fill(projector.bias, -1.0);
    auto clamped = projector.project(patch);
    for (double v : clamped.data()) {
        CHECK(v == 0.0);
    }

    PatchProjector scalar(1, 1, 1, rng);
    fill(scalar.kernel, 3.0);
    fill(scalar.bias, -1.0);
    CHECK(scalar.project(Tensor::from({1}, {2.0})).item() == 5.0);

    CHECK_THROWS_AS(projector.project(Tensor::zeros({1, 11})), std::invalid_argument);
}

TEST_CASE("projected embeddings are non-negative") {
    Rng rng(8);
    PatchProjector projector(16, 2, 5, rng);
    auto tokens = random_tensor({3, 9, 20}, rng, -5.0, 5.0);
    auto z = projector.project(tokens);
    CHECK(z.shape() == Shape{3, 9, 16});
    for (double v : z.data()) {
        CHECK(v >= 0.0);
    }
}

TEST_CASE("sspe_spatial examples") {
    const auto cfg = small_sspe(8, 4, 4);
    auto origin = sspe_spatial(0, 0, cfg);
    for (std::size_t e = 0; e < origin.size(); ++e) {
        CHECK(origin[e] == (e % 2 == 0 ? 0.0 : 1.0));
    }
    // Row block entry 2 is sin(x / lambda^(2 * 1 / d)).
    auto code = sspe_spatial(3, 0, cfg);
    CHECK(code[2] == doctest::Approx(std::sin(0.03)).epsilon(1e-15));
    CHECK(code[3] == doctest::Approx(std::cos(0.03)).epsilon(1e-15));
    CHECK(code[6] == 0.0);  // column block still encodes 0

    auto odd = small_sspe(7, 4, 4);
    CHECK_THROWS_AS(sspe_spatial(0, 0, odd), std::invalid_argument);
}

TEST_CASE("spatial encodings are distinct over a 7x7 token grid") {
    auto cfg = resolve_sspe_config(SSPEConfig{}, 64);
    std::vector<std::vector<double>> codes;
    for (const auto& c : token_grid(14, 2)) {
        codes.push_back(sspe_spatial(static_cast<double>(c.row), static_cast<double>(c.col), cfg));
    }
    for (std::size_t i = 0; i < codes.size(); ++i) {
        for (std::size_t j = i + 1; j < codes.size(); ++j) {
            CHECK(l2_distance(codes[i], codes[j]) > 0.0);
        }
    }
}

TEST_CASE("sspe_spectral examples") {
    const auto cfg = small_sspe(4, 4, 4);
    auto one_hot = sspe_spectral(std::vector<double>{1.0, 0.0, 0.0}, cfg);
    CHECK(one_hot == std::vector<double>{0.0, 1.0, 0.0, 1.0});

    auto flat = sspe_spectral(std::vector<double>{0.0, 0.0, 0.0}, cfg);
    for (std::size_t e = 0; e < 4; ++e) {
        double expected = 0.0;
        for (int band = 0; band < 3; ++band) {
            expected += spectral_band_encoding(band, cfg)[e] / 3.0;
        }
        CHECK(flat[e] == doctest::Approx(expected).epsilon(1e-15));
    }

    // S = 2, equal energy: 0.5 E(0) + 0.5 E(1) with gamma = 10^4, d = 4.
    auto pair = sspe_spectral(std::vector<double>{1.0, 1.0}, cfg);
    const std::vector<double> expected{0.5 * std::sin(1.0), 0.5 + 0.5 * std::cos(1.0), 0.5 * std::sin(0.01),
                                       0.5 + 0.5 * std::cos(0.01)};
    for (std::size_t e = 0; e < 4; ++e) {
        CHECK(pair[e] == doctest::Approx(expected[e]).epsilon(1e-15));
    }

    CHECK_THROWS_AS(sspe_spectral(std::vector<double>{1.0, -1.0}, cfg), std::invalid_argument);
}

TEST_CASE("positional modes") {
    Rng rng(12);
    const std::size_t window = 4, patch = 2, bands = 3, embed = 8;
    auto tokens = random_tensor({2, 4, 12}, rng);

    SUBCASE("every mode has shape (N+1) x K with a zero CLS row") {
        for (auto mode : {PositionalMode::none, PositionalMode::learnable, PositionalMode::sinusoidal1d,
                          PositionalMode::sspe}) {
            PositionalEncoder pe(mode, window, patch, bands, embed, {}, rng);
            auto rows = pe.build(tokens);
            const Shape& s = rows.shape();
            REQUIRE(s.size() >= 2);
            CHECK(s[s.size() - 2] == 5);
            CHECK(s.back() == embed);
            const std::size_t samples = s.size() == 3 ? s[0] : 1;
            for (std::size_t b = 0; b < samples; ++b) {
                for (double v : row_of(rows, b * 5)) {
                    CHECK(v == 0.0);
                }
            }
        }
    }
    SUBCASE("none is all zero") {
        PositionalEncoder pe(PositionalMode::none, window, patch, bands, embed, {}, rng);
        auto rows = pe.build(tokens);
        for (double v : rows.data()) {
            CHECK(v == 0.0);
        }
        CHECK(pe.parameters("pe.").empty());
    }
    SUBCASE("sinusoidal1d encodes token index 0 in row 1") {
        PositionalEncoder pe(PositionalMode::sinusoidal1d, window, patch, bands, embed, {}, rng);
        auto row = row_of(pe.build(tokens), 1);
        for (std::size_t e = 0; e < embed; ++e) {
            CHECK(row[e] == (e % 2 == 0 ? 0.0 : 1.0));
        }
        CHECK(row_of(pe.build(tokens), 2)[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
    }
    SUBCASE("sspe collapses to zero when the fusion network is zero") {
        PositionalEncoder pe(PositionalMode::sspe, window, patch, bands, embed, {}, rng);
        fill(pe.sspe.fuse_w1, 0.0);
        fill(pe.sspe.fuse_w2, 0.0);
        auto rows = pe.build(tokens);
        for (double v : rows.data()) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("unknown mode names are rejected") {
        CHECK(parse_positional_mode("sspe") == PositionalMode::sspe);
        CHECK_THROWS_AS(parse_positional_mode("rotary"), std::invalid_argument);
    }
    SUBCASE("sspe with odd embedding width is rejected") {
        CHECK_THROWS_AS(PositionalEncoder(PositionalMode::sspe, window, patch, bands, 15, {}, rng),
                        std::invalid_argument);
    }
}

TEST_CASE("fused SSPE rows are distinct across a 7x7 grid") {
    Rng rng(21);
    PositionalEncoder pe(PositionalMode::sspe, 14, 2, 4, 64, {}, rng);
    auto tokens = Tensor::full({1, 49, 16}, 1.0);  // identical spectra, only position differs
    auto rows = pe.build(tokens);
    for (std::size_t i = 1; i <= 49; ++i) {
        for (std::size_t j = i + 1; j <= 49; ++j) {
            CHECK(l2_distance(row_of(rows, i), row_of(rows, j)) > 0.0);
        }
    }
}

TEST_CASE("gradients reach every embedding parameter") {
    Rng rng(33);
    const std::size_t window = 4, patch = 2, bands = 3, embed = 6;
    PatchProjector projector(embed, patch, bands, rng);
    auto tokens = random_tensor({2, 4, 12}, rng, 0.1, 1.0);
    auto probe = random_tensor({2, 5, embed}, rng);

    for (auto mode : {PositionalMode::learnable, PositionalMode::sspe}) {
        PositionalEncoder pe(mode, window, patch, bands, embed, {}, rng);
        auto cls = Tensor::zeros({embed}, true);
        auto loss_fn = [&] {
            auto seq = prepend_token(cls, projector.project(tokens));
            return sum(mul(add(seq, pe.build(tokens)), probe));
        };
        ParameterList params = pe.parameters("pe.");
        params.push_back({"kernel", projector.kernel});
        params.push_back({"bias", projector.bias});
        for (auto& p : params) {
            p.tensor.zero_grad();
        }
        backward(loss_fn());
        for (auto& p : params) {
            INFO(p.name);
            REQUIRE(p.tensor.has_grad());
            std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
            double norm = 0.0;
            for (double g : analytic) {
                norm += g * g;
            }
            CHECK(norm > 0.0);
            auto numeric = finite_diff_grad([&](const Tensor&) { return loss_fn().item(); }, p.tensor, 1e-5);
            CHECK(max_relative_error(analytic, numeric.data()) < 1e-4);
        }
    }
}
