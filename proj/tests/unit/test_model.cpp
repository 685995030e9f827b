#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "../support/oracle.hpp"
#include "memformer/common/byteio.hpp"
#include "memformer/model/model.hpp"
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

std::vector<double> values_of(const Tensor& t) {
    return {t.data().begin(), t.data().end()};
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.window = 4;
    cfg.subpatch = 2;
    cfg.bands = 3;
    cfg.embed = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.ffn_hidden = 16;
    cfg.memory_len = 2;
    cfg.classes = 2;
    cfg.dropout = 0.0;
    cfg.seed = 7;
    return cfg;
}

Tensor random_batch(const ModelConfig& cfg, std::size_t batch, Rng& rng) {
    return random_tensor({batch, cfg.window, cfg.window, cfg.bands}, rng, 0.0, 1.0);
}

// Closed-form trainable count derived from the architecture.
std::size_t expected_trainable(const ModelConfig& cfg) {
    const std::size_t k = cfg.embed, d = cfg.hidden(), w = cfg.subpatch, s = cfg.bands;
    const std::size_t n = cfg.tokens();
    std::size_t total = k * w * w * s + k;  // patch projector
    total += k;                             // CLS token
    const std::size_t ks = cfg.sspe.spatial_dim == 0 ? k : cfg.sspe.spatial_dim;
    const std::size_t kr = cfg.sspe.spectral_dim == 0 ? k : cfg.sspe.spectral_dim;
    switch (cfg.pe) {
        case PositionalMode::learnable:
            total += n * k;
            break;
        case PositionalMode::sspe:
            total += ks * k + kr * k + (2 * k * k + k) + (k * k + k);
            break;
        default:
            break;
    }
    const std::size_t per_layer = 3 * k * k + 2 * k   // W_Q, W_K, W_V and the attention LayerNorm
                                  + k * d + d + d * k + k  // FFN
                                  + 2 * k;                 // FFN LayerNorm
    total += cfg.layers * per_layer;
    total += k * cfg.classes + cfg.classes;
    return total;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("memformer_test_model_" + name);
}

}  // namespace

TEST_CASE("forward produces one logit row per sample") {
    Rng rng(1);
    for (auto attention : {AttentionMode::memory, AttentionMode::standard, AttentionMode::hybrid}) {
        for (auto pe : {PositionalMode::none, PositionalMode::learnable, PositionalMode::sinusoidal1d,
                        PositionalMode::sspe}) {
            for (auto readout : {Readout::mean, Readout::cls}) {
                auto cfg = tiny_config();
                cfg.attention = attention;
                cfg.pe = pe;
                cfg.readout = readout;
                MemFormerModel model(cfg);
                auto logits = model.forward(random_batch(cfg, 3, rng), {});
                CHECK(logits.shape() == Shape{3, 2});
            }
        }
    }
    auto cfg = tiny_config();
    MemFormerModel model(cfg);
    CHECK_THROWS_AS(model.forward(Tensor::zeros({2, 4, 4, 2}), {}), std::invalid_argument);
}

TEST_CASE("eval mode treats each sample independently") {
    Rng rng(2);
    auto cfg = tiny_config();
    MemFormerModel model(cfg);
    auto one = random_batch(cfg, 1, rng);
    auto other = random_batch(cfg, 1, rng);
    std::vector<double> values = values_of(one);
    values.insert(values.end(), other.data().begin(), other.data().end());
    values.insert(values.end(), one.data().begin(), one.data().end());
    auto logits = model.forward(Tensor::from({3, 4, 4, 3}, values), {});
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(logits.at({0, c}) == logits.at({2, c}));
    }
    CHECK(values_of(model.forward(one, {})) == std::vector<double>{logits.at({0, 0}), logits.at({0, 1})});
}

TEST_CASE("zero-layer model matches a direct evaluation") {
    Rng rng(3);
    auto cfg = tiny_config();
    cfg.layers = 0;
    cfg.pe = PositionalMode::none;
    auto batch = random_batch(cfg, 2, rng);

    SUBCASE("cls readout reduces to the classifier applied to the CLS token") {
        cfg.readout = Readout::cls;
        MemFormerModel model(cfg);
        model.cls = random_tensor({8}, rng);
        auto logits = model.forward(batch, {});
        auto expected = oracle::matmul(values_of(model.cls), values_of(model.classifier_w), 1, 8, 2);
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t c = 0; c < 2; ++c) {
                CHECK(logits.at({b, c}) == doctest::Approx(expected[c]).epsilon(1e-14));
            }
        }
    }
    SUBCASE("mean readout averages CLS and the projected sub-patches") {
        cfg.readout = Readout::mean;
        MemFormerModel model(cfg);
        model.cls = random_tensor({8}, rng);
        auto logits = model.forward(batch, {});
        const auto kernel = values_of(model.projector.kernel);  // [K, w * w * S]
        for (std::size_t b = 0; b < 2; ++b) {
            std::vector<double> pooled = values_of(model.cls);
            for (std::size_t tr = 0; tr < 2; ++tr) {
                for (std::size_t tc = 0; tc < 2; ++tc) {
                    for (std::size_t k = 0; k < 8; ++k) {
                        double act = model.projector.bias.data()[k];
                        for (std::size_t i = 0; i < 2; ++i) {
                            for (std::size_t j = 0; j < 2; ++j) {
                                for (std::size_t s = 0; s < 3; ++s) {
                                    act += kernel[k * 12 + (i * 2 + j) * 3 + s] *
                                           batch.at({b, tr * 2 + i, tc * 2 + j, s});
                                }
                            }
                        }
                        pooled[k] += std::max(act, 0.0);
                    }
                }
            }
            for (auto& v : pooled) {
                v /= 5.0;
            }
            auto expected = oracle::matmul(pooled, values_of(model.classifier_w), 1, 8, 2);
            for (std::size_t c = 0; c < 2; ++c) {
                CHECK(logits.at({b, c}) == doctest::Approx(expected[c]).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("ffn examples") {
    Rng rng(4);
    auto x = random_tensor({2, 3, 4}, rng);
    auto c = random_tensor({4}, rng);
    auto constant = ffn(x, Tensor::zeros({4, 6}), random_tensor({6}, rng), Tensor::zeros({6, 4}), c);
    for (std::size_t r = 0; r < 6; ++r) {
        for (std::size_t e = 0; e < 4; ++e) {
            CHECK(constant.data()[r * 4 + e] == c.data()[e]);
        }
    }

    std::vector<double> eye(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        eye[i * 5] = 1.0;
    }
    auto nonneg = random_tensor({2, 3, 4}, rng, 0.0, 2.0);
    auto identity = ffn(nonneg, Tensor::from({4, 4}, eye), Tensor::zeros({4}), Tensor::from({4, 4}, eye),
                        Tensor::zeros({4}));
    CHECK(values_of(identity) == values_of(nonneg));

    auto w1 = random_tensor({4, 5}, rng), b1 = random_tensor({5}, rng);
    auto w2 = random_tensor({5, 4}, rng), b2 = random_tensor({4}, rng);
    auto y = ffn(x, w1, b1, w2, b2);
    auto hidden = oracle::matmul(values_of(x), values_of(w1), 6, 4, 5);
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        hidden[i] = std::max(hidden[i] + b1.data()[i % 5], 0.0);
    }
    auto expected = oracle::matmul(hidden, values_of(w2), 6, 5, 4);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        expected[i] += b2.data()[i % 4];
    }
    CHECK(oracle::max_abs_diff(values_of(y), expected) < 1e-12);
}

TEST_CASE("predict examples") {
    CHECK(argmax_rows(Tensor::from({1, 3}, {0.1, 0.9, 0.0})) == std::vector<std::size_t>{1});
    CHECK(argmax_rows(Tensor::from({1, 2}, {0.5, 0.5})) == std::vector<std::size_t>{0});
    CHECK(argmax_rows(Tensor::from({2, 3}, {2.0, 2.0, 2.0, -1.0, 3.0, 3.0})) == std::vector<std::size_t>{0, 1});

    Rng rng(5);
    auto logits = random_tensor({200, 5}, rng, -4.0, 4.0);
    CHECK(argmax_rows(logits) == argmax_rows(softmax_rows(logits)));
}

TEST_CASE("a uniform classifier-bias shift leaves predictions unchanged") {
    Rng rng(6);
    auto cfg = tiny_config();
    cfg.classes = 4;
    MemFormerModel model(cfg);
    auto batch = random_batch(cfg, 6, rng);
    auto before = model.forward(batch, {});
    const auto labels = model.predict(batch);
    for (auto& v : model.classifier_b.mutable_data()) {
        v += 2.5;
    }
    auto after = model.forward(batch, {});
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(after.data()[i] - before.data()[i] == doctest::Approx(2.5).epsilon(1e-12));
    }
    CHECK(model.predict(batch) == labels);
}

TEST_CASE("parameter census matches the closed form") {
    CHECK(count_elements({{"w", Tensor::zeros({3, 2}, true)}, {"b", Tensor::zeros({2}, true)}}) == 8);

    for (auto attention : {AttentionMode::memory, AttentionMode::standard, AttentionMode::hybrid}) {
        for (auto pe : {PositionalMode::none, PositionalMode::learnable, PositionalMode::sinusoidal1d,
                        PositionalMode::sspe}) {
            for (ModelConfig cfg : {ModelConfig{}, tiny_config()}) {
                cfg.attention = attention;
                cfg.pe = pe;
                MemFormerModel model(cfg);
                const auto census = model.count_params();
                INFO(to_string(attention), " ", to_string(pe));
                CHECK(census.trainable == expected_trainable(cfg));
                CHECK(census.non_trainable ==
                      (attention == AttentionMode::standard ? 0 : cfg.layers * cfg.memory_len * cfg.embed));
            }
        }
    }

    ModelConfig cfg;
    cfg.sspe.spatial_dim = 10;
    cfg.sspe.spectral_dim = 6;
    CHECK(MemFormerModel(cfg).count_params().trainable == expected_trainable(cfg));

    // Default config: memory buffers add L * M_len * K = 4 * 10 * 64.
    CHECK(MemFormerModel(ModelConfig{}).count_params().non_trainable == 2560);
}

TEST_CASE("census deltas between variants") {
    ModelConfig none;
    none.pe = PositionalMode::none;
    ModelConfig learnable = none;
    learnable.pe = PositionalMode::learnable;
    CHECK(MemFormerModel(learnable).count_params().trainable - MemFormerModel(none).count_params().trainable ==
          none.tokens() * none.embed);

    ModelConfig standard;
    standard.attention = AttentionMode::standard;
    const auto mem = MemFormerModel(ModelConfig{}).count_params();
    const auto std_census = MemFormerModel(standard).count_params();
    CHECK(mem.trainable == std_census.trainable);
    CHECK(mem.non_trainable - std_census.non_trainable == 4 * 10 * 64);
}

TEST_CASE("train mode updates memory, eval mode does not") {
    Rng rng(8);
    auto cfg = tiny_config();
    MemFormerModel model(cfg);
    auto batch = random_batch(cfg, 2, rng);
    const auto before = values_of(model.memories()[0]->entries());
    model.forward(batch, {});
    CHECK(values_of(model.memories()[0]->entries()) == before);
    ForwardContext train;
    train.train = true;
    model.forward(batch, train);
    const auto after = values_of(model.memories()[0]->entries());
    CHECK(after != before);
    // Old row 1 moved to row 0.
    CHECK(std::vector<double>(after.begin(), after.begin() + 8) ==
          std::vector<double>(before.begin() + 8, before.end()));

    model.set_memory_frozen(true);
    model.forward(batch, train);
    CHECK(values_of(model.memories()[0]->entries()) == after);
}

TEST_CASE("zero memory init starts from an all-zero buffer") {
    auto cfg = tiny_config();
    cfg.memory_init = MemoryInit::zeros;
    MemFormerModel model(cfg);
    for (const auto* buffer : model.memories()) {
        for (double v : buffer->entries().data()) {
            CHECK(v == 0.0);
        }
    }
}

TEST_CASE("non-finite activations are reported with their layer") {
    Rng rng(9);
    auto cfg = tiny_config();
    cfg.layers = 2;
    MemFormerModel model(cfg);
    auto batch = random_batch(cfg, 1, rng);
    model.layers[1].ffn_w2.mutable_data()[0] = INFINITY;
    CHECK_THROWS_WITH_AS(model.forward(batch, {}), doctest::Contains("encoder layer 1"), std::domain_error);

    auto poisoned = values_of(batch);
    poisoned[0] = NAN;
    MemFormerModel fresh(cfg);
    CHECK_THROWS_WITH_AS(fresh.forward(Tensor::from(batch.shape(), poisoned), {}), doctest::Contains("input batch"),
                         std::domain_error);
}

TEST_CASE("end-to-end gradients match finite differences on the tiny config") {
    Rng rng(10);
    for (auto pe : {PositionalMode::sspe, PositionalMode::learnable}) {
        for (auto attention : {AttentionMode::memory, AttentionMode::standard, AttentionMode::hybrid}) {
            for (auto readout : {Readout::mean, Readout::cls}) {
                auto cfg = tiny_config();
                cfg.pe = pe;
                cfg.attention = attention;
                cfg.readout = readout;
                MemFormerModel model(cfg);
                // Give every bias-like tensor a nonzero value so no gradient is
                // trivially zero.
                for (auto& p : model.parameters()) {
                    for (auto& v : p.tensor.mutable_data()) {
                        v += 0.1 * std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
                    }
                }
                auto batch = random_batch(cfg, 3, rng);
                const std::vector<std::size_t> targets{0, 1, 1};
                ForwardContext ctx;
                ctx.train = true;
                ctx.update_memory = false;
                auto loss_fn = [&] { return cross_entropy(model.forward(batch, ctx), targets); };
                auto params = model.parameters();
                for (auto& p : params) {
                    p.tensor.zero_grad();
                }
                backward(loss_fn());
                for (auto& p : params) {
                    INFO(to_string(pe), " ", to_string(attention), " ", to_string(readout), " ", p.name);
                    REQUIRE(p.tensor.has_grad());
                    std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
                    auto numeric =
                        finite_diff_grad([&](const Tensor&) { return loss_fn().item(); }, p.tensor, 1e-5);
                    CHECK(max_relative_error(analytic, numeric.data()) < 1e-4);
                }
            }
        }
    }
}

TEST_CASE("checkpoint round trip is the identity") {
    Rng rng(11);
    for (auto attention : {AttentionMode::memory, AttentionMode::standard, AttentionMode::hybrid}) {
        auto cfg = tiny_config();
        cfg.attention = attention;
        cfg.dropout = 0.25;
        MemFormerModel model(cfg);
        auto batch = random_batch(cfg, 4, rng);
        ForwardContext train;
        train.train = true;
        train.dropout = cfg.dropout;
        train.rng = &rng;
        model.forward(batch, train);  // move the memory away from its initial state
        for (auto& p : model.parameters()) {
            p.tensor.mutable_data()[0] += 0.125;
        }
        const auto path = temp_path("roundtrip.mfck");
        save_checkpoint(model, path);
        auto loaded = load_checkpoint(path, cfg);
        CHECK(loaded.config() == cfg);
        CHECK(values_of(loaded.forward(batch, {})) == values_of(model.forward(batch, {})));
        auto a = model.parameters();
        auto b = loaded.parameters();
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].name == b[i].name);
            CHECK(values_of(a[i].tensor) == values_of(b[i].tensor));
        }
        for (std::size_t i = 0; i < model.memories().size(); ++i) {
            CHECK(values_of(model.memories()[i]->entries()) == values_of(loaded.memories()[i]->entries()));
        }
        CHECK(encode_checkpoint(loaded) == encode_checkpoint(model));
        std::filesystem::remove(path);
    }
}

TEST_CASE("malformed checkpoints are rejected") {
    auto cfg = tiny_config();
    MemFormerModel model(cfg);
    const auto bytes = encode_checkpoint(model);

    SUBCASE("every truncation fails with a structured error") {
        for (std::size_t len = 0; len < bytes.size(); len += 7) {
            CHECK_THROWS_AS(decode_checkpoint({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len)}),
                            byteio::FormatError);
        }
        CHECK_THROWS_AS(decode_checkpoint({bytes.begin(), bytes.end() - 1}), byteio::FormatError);
    }
    SUBCASE("bad magic and version") {
        auto magic = bytes;
        magic[0] = 'X';
        CHECK_THROWS_AS(decode_checkpoint(magic), byteio::FormatError);
        auto version = bytes;
        version[4] = 9;
        try {
            decode_checkpoint(version);
            FAIL("expected a version error");
        } catch (const byteio::FormatError& e) {
            CHECK(e.offset() == 4);
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SUBCASE("trailing bytes") {
        auto extra = bytes;
        extra.push_back(0);
        CHECK_THROWS_AS(decode_checkpoint(extra), byteio::FormatError);
    }
    SUBCASE("config mismatch names the field") {
        const auto path = temp_path("mismatch.mfck");
        save_checkpoint(model, path);
        auto other = cfg;
        other.heads = 4;
        CHECK_THROWS_WITH_AS(load_checkpoint(path, other), doctest::Contains("heads"), std::invalid_argument);
        other = cfg;
        other.pe = PositionalMode::learnable;
        CHECK_THROWS_WITH_AS(load_checkpoint(path, other), doctest::Contains("field pe"), std::invalid_argument);
        std::filesystem::remove(path);
    }
}

TEST_CASE("config fields round trip through text") {
    ModelConfig cfg;
    cfg.dropout = 0.1;
    cfg.ln_eps = 1e-5;
    cfg.pe = PositionalMode::learnable;
    cfg.attention = AttentionMode::standard;
    cfg.seed = 123456789012345ULL;
    cfg.sspe.wavelength = 1234.5678;
    ModelConfig copy;
    for (const auto& [key, value] : config_fields(cfg)) {
        CHECK(set_config_field(copy, key, value));
    }
    CHECK(copy == cfg);
    CHECK(first_difference(copy, cfg).empty());
    copy.memory_len = 3;
    CHECK(first_difference(copy, cfg) == "memory_len");

    CHECK_FALSE(set_config_field(copy, "learning_rate", "0.1"));
    CHECK_THROWS_AS(set_config_field(copy, "embed", "sixty"), std::invalid_argument);
    CHECK_THROWS_AS(set_config_field(copy, "dropout", "0.1x"), std::invalid_argument);
    CHECK_THROWS_AS(set_config_field(copy, "pe", "rotary"), std::invalid_argument);
}

TEST_CASE("invalid configs are rejected by field") {
    auto bad = [](auto mutate, const char* field) {
        ModelConfig cfg;
        mutate(cfg);
        CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains(field), std::invalid_argument);
    };
    bad([](ModelConfig& c) { c.heads = 6; }, "heads");
    bad([](ModelConfig& c) { c.subpatch = 3; }, "subpatch");
    bad([](ModelConfig& c) { c.dropout = 1.0; }, "dropout");
    bad([](ModelConfig& c) { c.memory_len = 0; }, "memory_len");
    bad([](ModelConfig& c) { c.classes = 0; }, "classes");

    // K = 15 with a single head is a supported configuration.
    ModelConfig odd;
    odd.embed = 15;
    odd.heads = 1;
    odd.pe = PositionalMode::learnable;
    CHECK_NOTHROW(validate(odd));
    CHECK_NOTHROW(MemFormerModel{odd});
}
