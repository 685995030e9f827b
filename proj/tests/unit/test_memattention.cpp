#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "../support/oracle.hpp"
#include "memformer/memattention/memattention.hpp"
#include "memformer/numkernel/gradcheck.hpp"

using namespace memformer;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) {
        v = dist(rng);
    }
    return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

std::vector<double> values_of(const Tensor& t) {
    return {t.data().begin(), t.data().end()};
}

std::vector<double> slice(const Tensor& t, std::size_t index) {
    const std::size_t stride = t.size() / t.dim(0);
    auto d = t.data().subspan(index * stride, stride);
    return {d.begin(), d.end()};
}

AttentionWeights hand_weights(std::vector<double> q, std::vector<double> k, std::vector<double> v,
                              std::size_t width, std::size_t heads = 1) {
    AttentionWeights w;
    w.query = Tensor::from({width, width}, std::move(q), true);
    w.key = Tensor::from({width, width}, std::move(k), true);
    w.value = Tensor::from({width, width}, std::move(v), true);
    w.heads = heads;
    return w;
}

const std::vector<double> kGain{1.5, 0.5};
const std::vector<double> kBias{0.1, -0.2};

}  // namespace

TEST_CASE("memory buffer FIFO examples") {
    MemoryBuffer buffer(3, 2);
    buffer.assign(std::vector<double>{0, 1, 2, 3, 4, 5});
    buffer.push(std::vector<double>{9, 9});
    CHECK(values_of(buffer.entries()) == std::vector<double>{2, 3, 4, 5, 9, 9});
    CHECK(buffer.entries().shape() == Shape{3, 2});

    buffer.set_frozen(true);
    const auto before = values_of(buffer.entries());
    buffer.push(std::vector<double>{7, 7});
    CHECK(values_of(buffer.entries()) == before);

    CHECK_THROWS_AS(buffer.push(std::vector<double>{1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(buffer.assign(std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("update_memory averages over batch and tokens") {
    MemoryBuffer buffer(3, 2);
    buffer.assign(std::vector<double>{0, 0, 1, 1, 2, 2});
    update_memory(buffer, Tensor::from({1, 2, 2}, {1, 3, 3, 5}));
    CHECK(values_of(buffer.entries()) == std::vector<double>{1, 1, 2, 2, 2, 4});

    // Mean over B = 2 and T = 2.
    CHECK(token_mean(Tensor::from({2, 2, 1}, {1, 2, 3, 6})) == std::vector<double>{3.0});
}

TEST_CASE("replaying updates leaves the last M_len means in order") {
    Rng rng(5);
    const std::size_t capacity = 4, width = 3;
    MemoryBuffer buffer(capacity, width);
    std::vector<std::vector<double>> means;
    for (int step = 0; step < 11; ++step) {
        auto a = random_tensor({2, 3, width}, rng);
        means.push_back(token_mean(a));
        update_memory(buffer, a);
    }
    std::vector<double> expected;
    for (std::size_t i = means.size() - capacity; i < means.size(); ++i) {
        expected.insert(expected.end(), means[i].begin(), means[i].end());
    }
    CHECK(values_of(buffer.entries()) == expected);
}

TEST_CASE("project_memory examples") {
    Rng rng(2);
    AttentionWeights weights(4, 2, rng);
    MemoryBuffer zero(3, 4);
    auto projected = project_memory(zero, weights, 2);
    CHECK(projected.keys.shape() == Shape{2, 3, 4});
    for (double v : projected.keys.data()) {
        CHECK(v == 0.0);
    }
    for (double v : projected.values.data()) {
        CHECK(v == 0.0);
    }

    MemoryBuffer buffer(3, 4);
    buffer.assign(values_of(random_tensor({3, 4}, rng)));
    std::vector<double> identity(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        identity[i * 5] = 1.0;
    }
    weights.key = Tensor::from({4, 4}, identity, true);
    auto tiled = project_memory(buffer, weights, 3);
    for (std::size_t b = 0; b < 3; ++b) {
        CHECK(slice(tiled.keys, b) == values_of(buffer.entries()));
        CHECK(slice(tiled.values, b) == slice(tiled.values, 0));
    }

    CHECK_THROWS_AS(project_memory(buffer, weights, 0), std::invalid_argument);
    CHECK_THROWS_AS(project_memory(MemoryBuffer(3, 6), weights, 1), std::invalid_argument);
}

TEST_CASE("attend examples") {
    Rng rng(3);
    const std::size_t width = 4;
    auto q = random_tensor({2, 3, width}, rng);

    SUBCASE("zero memory gives exactly uniform weights and zero output") {
        MemoryBuffer zero(5, width);
        AttentionWeights weights(width, 2, rng);
        auto projected = project_memory(zero, weights, 2);
        auto result = attend(q, projected.keys, projected.values, 2);
        for (double w : result.weights.data()) {
            CHECK(w == 1.0 / 5.0);
        }
        for (double v : result.output.data()) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("a single key takes all the weight") {
        auto k = random_tensor({2, 1, width}, rng);
        auto v = random_tensor({2, 1, width}, rng);
        auto result = attend(q, k, v, 2);
        for (double w : result.weights.data()) {
            CHECK(w == 1.0);
        }
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t t = 0; t < 3; ++t) {
                for (std::size_t e = 0; e < width; ++e) {
                    CHECK(result.output.at({b, t, e}) == v.at({b, 0, e}));
                }
            }
        }
    }
    SUBCASE("shape mismatches are rejected") {
        auto k = random_tensor({2, 4, width}, rng);
        CHECK_THROWS_AS(attend(q, k, random_tensor({2, 5, width}, rng), 2), std::invalid_argument);
        CHECK_THROWS_AS(attend(q, random_tensor({2, 4, 6}, rng), random_tensor({2, 4, 6}, rng), 2),
                        std::invalid_argument);
        CHECK_THROWS_AS(attend(q, k, k, 3), std::invalid_argument);
    }
}

TEST_CASE("single-head memory attention matches a hand computation") {
    // Q = [1, 0]; keys [1, 0] and [0, 1]; values [2, 0] and [0, 4]; K = 2.
    auto q = Tensor::from({1, 1, 2}, {1, 0});
    auto k = Tensor::from({1, 2, 2}, {1, 0, 0, 1});
    auto v = Tensor::from({1, 2, 2}, {2, 0, 0, 4});
    auto result = attend(q, k, v, 1);
    const double w0 = std::exp(1.0 / std::sqrt(2.0)) / (std::exp(1.0 / std::sqrt(2.0)) + 1.0);
    CHECK(std::fabs(result.weights.at({0, 0, 0, 0}) - w0) < 1e-12);
    CHECK(std::fabs(result.output.at({0, 0, 0}) - 2.0 * w0) < 1e-12);
    CHECK(std::fabs(result.output.at({0, 0, 1}) - 4.0 * (1.0 - w0)) < 1e-12);
}

TEST_CASE("multi-head attention matches the naive oracle") {
    Rng rng(11);
    for (std::size_t heads : {1u, 2u, 4u}) {
        const std::size_t batch = 2, t_len = 3, s_len = 5, width = 8;
        auto q = random_tensor({batch, t_len, width}, rng);
        auto k = random_tensor({batch, s_len, width}, rng);
        auto v = random_tensor({batch, s_len, width}, rng);
        auto result = attend(q, k, v, heads);
        CHECK(result.weights.shape() == Shape{batch, heads, t_len, s_len});
        for (std::size_t b = 0; b < batch; ++b) {
            auto expected = oracle::attention(slice(q, b), slice(k, b), slice(v, b), t_len, s_len, width, heads);
            CHECK(oracle::max_abs_diff(slice(result.output, b), expected.output) < 1e-12);
            CHECK(oracle::max_abs_diff(slice(result.weights, b), expected.weights) < 1e-12);
        }
    }
}

TEST_CASE("attention weights sum to one per batch, token and head") {
    Rng rng(17);
    auto q = scale(random_tensor({3, 6, 8}, rng), 30.0);
    auto k = random_tensor({3, 10, 8}, rng);
    auto result = attend(q, k, k, 4);
    const std::size_t s_len = 10;
    auto w = result.weights.data();
    for (std::size_t row = 0; row < w.size() / s_len; ++row) {
        double total = 0.0;
        for (std::size_t j = 0; j < s_len; ++j) {
            CHECK(w[row * s_len + j] >= 0.0);
            total += w[row * s_len + j];
        }
        CHECK(std::fabs(total - 1.0) < 1e-6);
    }
}

TEST_CASE("residual_norm examples") {
    Rng rng(8);
    auto q = random_tensor({2, 3, 4}, rng);
    auto ones = Tensor::full({4}, 1.0);
    auto zeros = Tensor::zeros({4});
    auto a0 = residual_norm(q, Tensor::zeros({2, 3, 4}), ones, zeros, 1e-5);
    CHECK(values_of(a0) == values_of(layer_norm(q, ones, zeros, 1e-5)));

    auto constant = residual_norm(Tensor::full({1, 1, 4}, 2.0), Tensor::full({1, 1, 4}, 1.0), ones, zeros, 1e-5);
    for (double v : constant.data()) {
        CHECK(v == 0.0);
    }

    auto normed = residual_norm(q, random_tensor({2, 3, 4}, rng), ones, zeros, 1e-12);
    for (std::size_t r = 0; r < 6; ++r) {
        double mu = 0.0, sq = 0.0;
        for (std::size_t e = 0; e < 4; ++e) {
            mu += normed.data()[r * 4 + e] / 4.0;
            sq += normed.data()[r * 4 + e] * normed.data()[r * 4 + e] / 4.0;
        }
        CHECK(std::fabs(mu) < 1e-9);
        CHECK(std::fabs(sq - mu * mu - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(residual_norm(q, Tensor::zeros({2, 3, 5}), ones, zeros, 1e-5), std::invalid_argument);
}

TEST_CASE("two-pass memory attention matches a scripted replay") {
    // B = 1, N + 1 = 2, K = 2, M_len = 2, h = 1, every weight set by hand.
    const std::vector<double> z{0.5, -1.0, 1.5, 0.25};
    const std::vector<double> wq{1.0, 0.5, -0.5, 1.0};
    const std::vector<double> wk{0.3, -0.2, 0.7, 0.1};
    const std::vector<double> wv{1.0, 2.0, -1.0, 0.5};
    const std::vector<double> memory{0.2, 0.4, -0.6, 0.9};
    const double eps = 1e-5;

    auto weights = hand_weights(wq, wk, wv, 2);
    MemoryBuffer buffer(2, 2);
    buffer.assign(memory);
    ForwardContext ctx;
    ctx.train = true;
    AttentionTrace trace;
    auto out = memory_attention_forward(Tensor::from({1, 2, 2}, z), weights, buffer,
                                        Tensor::from({2}, kGain), Tensor::from({2}, kBias), eps, ctx, &trace);

    // Replay step by step.
    const auto q = oracle::matmul(z, wq, 2, 2, 2);
    auto first = oracle::attention(q, oracle::matmul(memory, wk, 2, 2, 2), oracle::matmul(memory, wv, 2, 2, 2), 2,
                                   2, 2, 1);
    const std::vector<double> m_new{(first.output[0] + first.output[2]) / 2.0,
                                    (first.output[1] + first.output[3]) / 2.0};
    const std::vector<double> updated{memory[2], memory[3], m_new[0], m_new[1]};
    auto second = oracle::attention(q, oracle::matmul(updated, wk, 2, 2, 2), oracle::matmul(updated, wv, 2, 2, 2),
                                    2, 2, 2, 1);
    const auto expected = oracle::layer_norm(oracle::plus(q, second.output), 2, kGain, kBias, eps);

    CHECK(oracle::max_abs_diff(values_of(trace.first.output), first.output) < 1e-12);
    CHECK(oracle::max_abs_diff(values_of(buffer.entries()), updated) < 1e-12);
    CHECK(oracle::max_abs_diff(values_of(trace.second.output), second.output) < 1e-12);
    CHECK(oracle::max_abs_diff(values_of(out), expected) < 1e-12);
}

TEST_CASE("hybrid attention attends over tokens followed by memory") {
    const std::vector<double> z{0.5, -1.0, 1.5, 0.25, -0.75, 2.0};
    const std::vector<double> wq{1.0, 0.5, -0.5, 1.0};
    const std::vector<double> wk{0.3, -0.2, 0.7, 0.1};
    const std::vector<double> wv{1.0, 2.0, -1.0, 0.5};
    const std::vector<double> memory{0.2, 0.4, -0.6, 0.9};
    const double eps = 1e-5;
    auto weights = hand_weights(wq, wk, wv, 2);

    auto kv_rows = [&](const std::vector<double>& mem) {
        std::vector<double> rows = z;
        rows.insert(rows.end(), mem.begin(), mem.end());
        return rows;
    };
    const auto q = oracle::matmul(z, wq, 3, 2, 2);
    auto pass = [&](const std::vector<double>& mem) {
        const auto rows = kv_rows(mem);
        return oracle::attention(q, oracle::matmul(rows, wk, 5, 2, 2), oracle::matmul(rows, wv, 5, 2, 2), 3, 5, 2,
                                 1);
    };

    SUBCASE("eval: one pass") {
        MemoryBuffer buffer(2, 2);
        buffer.assign(memory);
        AttentionTrace trace;
        auto out = memory_attention_forward(Tensor::from({1, 3, 2}, z), weights, buffer, Tensor::from({2}, kGain),
                                            Tensor::from({2}, kBias), eps, {}, &trace, true);
        CHECK(trace.first.weights.shape() == Shape{1, 1, 3, 5});
        const auto expected = oracle::layer_norm(oracle::plus(q, pass(memory).output), 2, kGain, kBias, eps);
        CHECK(oracle::max_abs_diff(values_of(out), expected) < 1e-12);
        CHECK(values_of(buffer.entries()) == memory);
    }
    SUBCASE("train: FIFO update and recomputation") {
        MemoryBuffer buffer(2, 2);
        buffer.assign(memory);
        ForwardContext ctx;
        ctx.train = true;
        auto out = memory_attention_forward(Tensor::from({1, 3, 2}, z), weights, buffer, Tensor::from({2}, kGain),
                                            Tensor::from({2}, kBias), eps, ctx, nullptr, true);
        const auto first = pass(memory).output;
        std::vector<double> m_new{(first[0] + first[2] + first[4]) / 3.0, (first[1] + first[3] + first[5]) / 3.0};
        const std::vector<double> updated{memory[2], memory[3], m_new[0], m_new[1]};
        CHECK(oracle::max_abs_diff(values_of(buffer.entries()), updated) < 1e-12);
        const auto expected = oracle::layer_norm(oracle::plus(q, pass(updated).output), 2, kGain, kBias, eps);
        CHECK(oracle::max_abs_diff(values_of(out), expected) < 1e-12);
    }
    SUBCASE("zero memory is not a fixed point") {
        MemoryBuffer buffer(2, 2);
        ForwardContext ctx;
        ctx.train = true;
        memory_attention_forward(Tensor::from({1, 3, 2}, z), weights, buffer, Tensor::from({2}, kGain),
                                 Tensor::from({2}, kBias), eps, ctx, nullptr, true);
        CHECK(buffer.entries().at({1, 0}) != 0.0);
    }
}

TEST_CASE("pure memory attention with a zero buffer stays zero") {
    // Without biases, zero keys/values give A = 0, whose mean is again zero.
    Rng rng(19);
    AttentionBlock block(AttentionMode::memory, 4, 2, 3, 1e-5, rng);
    ForwardContext ctx;
    ctx.train = true;
    for (int step = 0; step < 5; ++step) {
        block.forward(random_tensor({2, 3, 4}, rng), ctx);
    }
    for (double v : block.memory.entries().data()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("memory attention modes") {
    Rng rng(23);
    const std::size_t width = 8;
    AttentionBlock block(AttentionMode::memory, width, 2, 3, 1e-5, rng);
    block.memory.assign(values_of(random_tensor({3, width}, rng)));
    auto z = random_tensor({2, 4, width}, rng);

    SUBCASE("eval mode is pure and leaves the buffer untouched") {
        const auto before = values_of(block.memory.entries());
        ForwardContext eval;
        auto a = block.forward(z, eval);
        auto b = block.forward(z, eval);
        CHECK(values_of(a) == values_of(b));
        CHECK(values_of(block.memory.entries()) == before);
    }
    SUBCASE("a frozen buffer is not updated in train mode") {
        block.memory.set_frozen(true);
        const auto before = values_of(block.memory.entries());
        ForwardContext train;
        train.train = true;
        AttentionTrace trace;
        block.forward(z, train, &trace);
        CHECK(values_of(block.memory.entries()) == before);
        CHECK_FALSE(trace.second.output.defined());
    }
    SUBCASE("capacity one: the second pass attends only to the new mean") {
        AttentionBlock single(AttentionMode::memory, width, 2, 1, 1e-5, rng);
        ForwardContext train;
        train.train = true;
        AttentionTrace trace;
        single.forward(z, train, &trace);
        const auto m_new = token_mean(trace.first.output);
        CHECK(values_of(single.memory.entries()) == m_new);
        const auto v_new = oracle::matmul(m_new, values_of(single.weights.value), 1, width, width);
        for (std::size_t r = 0; r < 2 * 4; ++r) {
            for (std::size_t e = 0; e < width; ++e) {
                CHECK(trace.second.output.data()[r * width + e] == doctest::Approx(v_new[e]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("score tensors scale with memory length, not sequence length") {
    Rng rng(29);
    const std::size_t batch = 2, tokens = 7, width = 8, heads = 4, memory_len = 3;
    auto z = random_tensor({batch, tokens, width}, rng);
    AttentionBlock memory(AttentionMode::memory, width, heads, memory_len, 1e-5, rng);
    AttentionBlock standard(AttentionMode::standard, width, heads, 0, 1e-5, rng);
    AttentionBlock hybrid(AttentionMode::hybrid, width, heads, memory_len, 1e-5, rng);
    AttentionTrace trace;
    memory.forward(z, {}, &trace);
    CHECK(trace.first.weights.size() == batch * heads * tokens * memory_len);
    standard.forward(z, {}, &trace);
    CHECK(trace.first.weights.size() == batch * heads * tokens * tokens);
    hybrid.forward(z, {}, &trace);
    CHECK(trace.first.weights.size() == batch * heads * tokens * (tokens + memory_len));
}

TEST_CASE("no gradient leaks into the memory buffer") {
    Rng rng(31);
    const std::size_t width = 4;
    for (auto mode : {AttentionMode::memory, AttentionMode::hybrid}) {
        AttentionBlock block(mode, width, 2, 3, 1e-5, rng);
        block.memory.assign(values_of(random_tensor({3, width}, rng)));
        auto z = random_tensor({2, 3, width}, rng, true);
        ForwardContext train;
        train.train = true;
        auto before_entries = block.memory.entries();
        backward(sum(mul(block.forward(z, train), random_tensor({2, 3, width}, rng))));
        INFO(to_string(mode));
        CHECK_FALSE(before_entries.requires_grad());
        CHECK_FALSE(before_entries.has_grad());
        CHECK_FALSE(block.memory.entries().requires_grad());
        CHECK_FALSE(block.memory.entries().has_grad());
        for (const auto& p : block.parameters("")) {
            INFO(p.name);
            CHECK(p.tensor.has_grad());
        }
    }
}

TEST_CASE("standard attention examples") {
    Rng rng(37);
    SUBCASE("a single token attends to itself") {
        AttentionWeights weights(4, 2, rng);
        auto z = random_tensor({1, 1, 4}, rng);
        auto ones = Tensor::full({4}, 1.0);
        auto zeros = Tensor::zeros({4});
        AttentionTrace trace;
        auto out = standard_attention_forward(z, weights, ones, zeros, 1e-5, {}, &trace);
        for (double w : trace.first.weights.data()) {
            CHECK(w == 1.0);
        }
        auto expected = layer_norm(add(matmul(z, weights.query), matmul(z, weights.value)), ones, zeros, 1e-5);
        CHECK(oracle::max_abs_diff(values_of(out), values_of(expected)) < 1e-12);
    }
    SUBCASE("identical tokens get uniform weights") {
        AttentionWeights weights(4, 1, rng);
        auto row = values_of(random_tensor({4}, rng));
        std::vector<double> z;
        for (int t = 0; t < 5; ++t) {
            z.insert(z.end(), row.begin(), row.end());
        }
        AttentionTrace trace;
        standard_attention_forward(Tensor::from({1, 5, 4}, z), weights, Tensor::full({4}, 1.0), Tensor::zeros({4}),
                                   1e-5, {}, &trace);
        for (double w : trace.first.weights.data()) {
            CHECK(w == doctest::Approx(0.2).epsilon(1e-15));
        }
    }
    SUBCASE("three tokens match the naive oracle") {
        const std::vector<double> z{0.5, -1.0, 1.5, 0.25, -0.75, 2.0};
        const std::vector<double> wq{1.0, 0.5, -0.5, 1.0};
        const std::vector<double> wk{0.3, -0.2, 0.7, 0.1};
        const std::vector<double> wv{1.0, 2.0, -1.0, 0.5};
        auto weights = hand_weights(wq, wk, wv, 2);
        auto out = standard_attention_forward(Tensor::from({1, 3, 2}, z), weights, Tensor::from({2}, kGain),
                                              Tensor::from({2}, kBias), 1e-5, {});
        const auto q = oracle::matmul(z, wq, 3, 2, 2);
        auto att = oracle::attention(q, oracle::matmul(z, wk, 3, 2, 2), oracle::matmul(z, wv, 3, 2, 2), 3, 3, 2, 1);
        const auto expected = oracle::layer_norm(oracle::plus(q, att.output), 2, kGain, kBias, 1e-5);
        CHECK(oracle::max_abs_diff(values_of(out), expected) < 1e-12);
    }
}

TEST_CASE("attention block gradients match finite differences") {
    Rng rng(41);
    for (auto mode : {AttentionMode::memory, AttentionMode::standard, AttentionMode::hybrid}) {
        AttentionBlock block(mode, 4, 2, 3, 1e-5, rng);
        if (mode != AttentionMode::standard) {
            block.memory.assign(values_of(random_tensor({3, 4}, rng)));
        }
        auto z = random_tensor({2, 3, 4}, rng, true);
        auto probe = random_tensor({2, 3, 4}, rng);
        ForwardContext ctx;  // eval: memory is a constant
        auto loss_fn = [&] { return sum(mul(block.forward(z, ctx), probe)); };
        auto params = block.parameters("");
        params.push_back({"input", z});
        backward(loss_fn());
        for (auto& p : params) {
            INFO(to_string(mode), " ", p.name);
            std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
            auto numeric = finite_diff_grad([&](const Tensor&) { return loss_fn().item(); }, p.tensor, 1e-5);
            CHECK(max_relative_error(analytic, numeric.data()) < 1e-4);
        }
    }
}

TEST_CASE("attention mode names") {
    CHECK(parse_attention_mode("memory") == AttentionMode::memory);
    CHECK(parse_attention_mode("standard") == AttentionMode::standard);
    CHECK(parse_attention_mode("hybrid") == AttentionMode::hybrid);
    CHECK(to_string(AttentionMode::standard) == "standard");
    CHECK_THROWS_AS(parse_attention_mode("linear"), std::invalid_argument);
}
