#include "memformer/memattention/memattention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace memformer {

namespace {

void check_sequence(const Tensor& x, std::size_t width, const char* what) {
    if (x.rank() != 3 || x.dim(2) != width) {
        throw std::invalid_argument(std::string(what) + " must be [B, T, " + std::to_string(width) + "], got " +
                                    shape_string(x.shape()));
    }
}

Tensor apply_dropout(const Tensor& a, const ForwardContext& ctx) {
    if (!ctx.train || ctx.dropout == 0.0) {
        return a;
    }
    if (ctx.rng == nullptr) {
        throw std::invalid_argument("train-mode dropout needs a random generator");
    }
    return dropout(a, ctx.dropout, *ctx.rng, true);
}

}  // namespace

MemoryBuffer::MemoryBuffer(std::size_t capacity, std::size_t width)
    : capacity_(capacity), width_(width), entries_(Tensor::zeros({capacity, width})) {}

void MemoryBuffer::push(std::span<const double> row) {
    if (row.size() != width_) {
        throw std::invalid_argument("memory row has " + std::to_string(row.size()) + " entries, expected " +
                                    std::to_string(width_));
    }
    if (frozen_) {
        return;
    }
    auto old = entries_.data();
    std::vector<double> next(old.begin() + static_cast<std::ptrdiff_t>(width_), old.end());
    next.insert(next.end(), row.begin(), row.end());
    entries_ = Tensor::from({capacity_, width_}, std::move(next));
}

void MemoryBuffer::assign(std::span<const double> values) {
    if (values.size() != capacity_ * width_) {
        throw std::invalid_argument("memory assignment has " + std::to_string(values.size()) +
                                    " values, expected " + std::to_string(capacity_ * width_));
    }
    entries_ = Tensor::from({capacity_, width_}, {values.begin(), values.end()});
}

AttentionWeights::AttentionWeights(std::size_t width, std::size_t heads_, Rng& rng) : heads(heads_) {
    if (heads == 0 || width % heads != 0) {
        throw std::invalid_argument(std::to_string(heads) + " heads do not divide width " + std::to_string(width));
    }
    query = xavier_uniform({width, width}, width, width, rng);
    key = xavier_uniform({width, width}, width, width, rng);
    value = xavier_uniform({width, width}, width, width, rng);
}

MemoryProjection project_memory(const MemoryBuffer& buffer, const AttentionWeights& weights, std::size_t batch) {
    if (batch == 0) {
        throw std::invalid_argument("memory projection needs a batch of at least one sample");
    }
    if (buffer.width() != weights.width()) {
        throw std::invalid_argument("memory width " + std::to_string(buffer.width()) +
                                    " does not match attention width " + std::to_string(weights.width()));
    }
    return {tile(matmul(buffer.entries(), weights.key), batch),
            tile(matmul(buffer.entries(), weights.value), batch)};
}

AttentionResult attend(const Tensor& queries, const Tensor& keys, const Tensor& values, std::size_t heads) {
    if (queries.rank() != 3 || keys.rank() != 3 || keys.shape() != values.shape() ||
        queries.dim(0) != keys.dim(0) || queries.dim(2) != keys.dim(2)) {
        throw std::invalid_argument("attention shape mismatch: queries " + shape_string(queries.shape()) +
                                    ", keys " + shape_string(keys.shape()) + ", values " +
                                    shape_string(values.shape()));
    }
    const std::size_t width = queries.dim(2);
    if (heads == 0 || width % heads != 0) {
        throw std::invalid_argument(std::to_string(heads) + " heads do not divide width " + std::to_string(width));
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width / heads));
    auto scores = scale(bmm_nt(split_heads(queries, heads), split_heads(keys, heads)), inv_sqrt);
    auto weights = softmax_rows(scores);
    return {merge_heads(bmm(weights, split_heads(values, heads))), weights};
}

Tensor residual_norm(const Tensor& q, const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    if (q.shape() != a.shape()) {
        throw std::invalid_argument("residual shapes differ: " + shape_string(q.shape()) + " vs " +
                                    shape_string(a.shape()));
    }
    return layer_norm(add(q, a), gain, bias, eps);
}

std::vector<double> token_mean(const Tensor& a) {
    if (a.rank() != 3) {
        throw std::invalid_argument("expected [B, T, K] responses, got " + shape_string(a.shape()));
    }
    const std::size_t rows = a.dim(0) * a.dim(1);
    const std::size_t width = a.dim(2);
    std::vector<double> m(width, 0.0);
    auto d = a.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < width; ++k) {
            m[k] += d[r * width + k];
        }
    }
    for (auto& v : m) {
        v /= static_cast<double>(rows);
    }
    return m;
}

void update_memory(MemoryBuffer& buffer, const Tensor& a) {
    if (buffer.frozen()) {
        return;
    }
    buffer.push(token_mean(a));
}

std::string_view to_string(AttentionMode mode) {
    switch (mode) {
        case AttentionMode::memory:
            return "memory";
        case AttentionMode::standard:
            return "standard";
        case AttentionMode::hybrid:
            return "hybrid";
    }
    return "";
}

AttentionMode parse_attention_mode(std::string_view name) {
    if (name == "memory") {
        return AttentionMode::memory;
    }
    if (name == "standard") {
        return AttentionMode::standard;
    }
    if (name == "hybrid") {
        return AttentionMode::hybrid;
    }
    throw std::invalid_argument("unknown attention mode \"" + std::string(name) +
                                "\" (expected memory, standard or hybrid)");
}

Tensor memory_attention_forward(const Tensor& z, const AttentionWeights& weights, MemoryBuffer& buffer,
                                const Tensor& gain, const Tensor& bias, double eps, const ForwardContext& ctx,
                                AttentionTrace* trace, bool include_tokens) {
    check_sequence(z, weights.width(), "attention input");
    const std::size_t batch = z.dim(0);
    auto q = matmul(z, weights.query);
    Tensor token_keys, token_values;
    if (include_tokens) {
        token_keys = matmul(z, weights.key);
        token_values = matmul(z, weights.value);
    }
    // [tokens; memory] along the sequence axis when tokens are included.
    auto with_tokens = [&](const Tensor& tokens, const Tensor& mem) {
        if (!include_tokens) {
            return mem;
        }
        const std::size_t k = z.dim(2);
        const std::size_t rows = tokens.dim(1) + mem.dim(1);
        return reshape(concat_last(reshape(tokens, {batch, tokens.dim(1) * k}), reshape(mem, {batch, mem.dim(1) * k})),
                       {batch, rows, k});
    };
    auto project = [&] {
        auto m = project_memory(buffer, weights, batch);
        return MemoryProjection{with_tokens(token_keys, m.keys), with_tokens(token_values, m.values)};
    };
    auto memory = project();
    auto first = attend(q, memory.keys, memory.values, weights.heads);
    AttentionResult second;
    auto final_output = first.output;
    if (ctx.train && ctx.update_memory && !buffer.frozen()) {
        update_memory(buffer, first.output);
        memory = project();
        second = attend(q, memory.keys, memory.values, weights.heads);
        final_output = second.output;
    }
    if (trace != nullptr) {
        *trace = {q, first, second};
    }
    return residual_norm(q, apply_dropout(final_output, ctx), gain, bias, eps);
}

Tensor standard_attention_forward(const Tensor& z, const AttentionWeights& weights, const Tensor& gain,
                                  const Tensor& bias, double eps, const ForwardContext& ctx,
                                  AttentionTrace* trace) {
    check_sequence(z, weights.width(), "attention input");
    auto q = matmul(z, weights.query);
    auto result = attend(q, matmul(z, weights.key), matmul(z, weights.value), weights.heads);
    if (trace != nullptr) {
        *trace = {q, result, {}};
    }
    return residual_norm(q, apply_dropout(result.output, ctx), gain, bias, eps);
}

AttentionBlock::AttentionBlock(AttentionMode mode, std::size_t width, std::size_t heads, std::size_t memory_len,
                               double eps, Rng& rng)
    : weights(width, heads, rng),
      norm_gain(Tensor::full({width}, 1.0, true)),
      norm_bias(Tensor::zeros({width}, true)),
      mode_(mode),
      eps_(eps) {
    if (mode != AttentionMode::standard) {
        if (memory_len == 0) {
            throw std::invalid_argument("memory length must be at least 1");
        }
        memory = MemoryBuffer(memory_len, width);
    }
}

Tensor AttentionBlock::forward(const Tensor& z, const ForwardContext& ctx, AttentionTrace* trace) {
    if (mode_ != AttentionMode::standard) {
        return memory_attention_forward(z, weights, memory, norm_gain, norm_bias, eps_, ctx, trace,
                                        mode_ == AttentionMode::hybrid);
    }
    return standard_attention_forward(z, weights, norm_gain, norm_bias, eps_, ctx, trace);
}

ParameterList AttentionBlock::parameters(const std::string& prefix) const {
    return {{prefix + "w_q", weights.query},
            {prefix + "w_k", weights.key},
            {prefix + "w_v", weights.value},
            {prefix + "norm_gain", norm_gain},
            {prefix + "norm_bias", norm_bias}};
}

}  // namespace memformer
