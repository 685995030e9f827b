#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memformer/numkernel/init.hpp"
#include "memformer/numkernel/ops.hpp"

namespace memformer {

/// Fixed-capacity FIFO of global context vectors, [capacity, width].
///
/// Entries never carry gradients. Each push swaps in a fresh tensor rather
/// than writing in place, so graphs recorded against the old entries stay
/// valid for backward.
class MemoryBuffer {
public:
    MemoryBuffer() = default;
    /// Zero-filled buffer.
    MemoryBuffer(std::size_t capacity, std::size_t width);

    std::size_t capacity() const { return capacity_; }
    std::size_t width() const { return width_; }
    const Tensor& entries() const { return entries_; }

    bool frozen() const { return frozen_; }
    void set_frozen(bool frozen) { frozen_ = frozen; }

    /// Drops row 0 and appends `row` last. Ignored while frozen.
    void push(std::span<const double> row);
    /// Replaces all entries (capacity * width values, row-major).
    void assign(std::span<const double> values);

private:
    std::size_t capacity_ = 0;
    std::size_t width_ = 0;
    bool frozen_ = false;
    Tensor entries_;
};

/// Query/key/value projections of one attention block, each [K, K].
struct AttentionWeights {
    AttentionWeights() = default;
    /// Xavier-initialized projections. Throws unless heads divides width.
    AttentionWeights(std::size_t width, std::size_t heads, Rng& rng);

    std::size_t width() const { return query.dim(0); }

    Tensor query;
    Tensor key;
    Tensor value;
    std::size_t heads = 1;
};

struct MemoryProjection {
    Tensor keys;    // [B, M, K]
    Tensor values;  // [B, M, K]
};

/// Projects the memory into key/value space and tiles it over the batch.
MemoryProjection project_memory(const MemoryBuffer& buffer, const AttentionWeights& weights, std::size_t batch);

struct AttentionResult {
    Tensor output;   // [B, T, K]
    Tensor weights;  // [B, h, T, S] softmax over the S keys
};

/// Multi-head scaled dot-product attention of queries [B, T, K] over keys and
/// values [B, S, K]; scores are scaled by 1/sqrt(K / heads).
AttentionResult attend(const Tensor& queries, const Tensor& keys, const Tensor& values, std::size_t heads);

/// LayerNorm(q + a) over the last axis.
Tensor residual_norm(const Tensor& q, const Tensor& a, const Tensor& gain, const Tensor& bias, double eps);

/// Mean of a [B, T, K] tensor over batch and tokens.
std::vector<double> token_mean(const Tensor& a);

/// Pushes the detached batch/token mean of `a` into the buffer (no-op when
/// frozen).
void update_memory(MemoryBuffer& buffer, const Tensor& a);

/// Per-call switches shared by every block of a forward pass.
struct ForwardContext {
    bool train = false;
    bool update_memory = true;  // only consulted in train mode
    double dropout = 0.0;
    Rng* rng = nullptr;  // required when train && dropout > 0
};

/// Intermediate tensors of the last forward, for inspection in tests.
struct AttentionTrace {
    Tensor queries;
    AttentionResult first;
    AttentionResult second;  // undefined unless memory was updated
};

/// memory: keys/values come only from the FIFO buffer.
/// standard: ordinary token-token self-attention.
/// hybrid: self-attention whose keys/values are the tokens followed by the
/// buffer entries, with the same FIFO update and recomputation as memory.
enum class AttentionMode { memory, standard, hybrid };

std::string_view to_string(AttentionMode mode);
/// Throws std::invalid_argument on an unknown name.
AttentionMode parse_attention_mode(std::string_view name);

/// One attention sub-layer: projections, residual LayerNorm and, in memory
/// mode, the per-layer FIFO buffer.
class AttentionBlock {
public:
    AttentionBlock() = default;
    AttentionBlock(AttentionMode mode, std::size_t width, std::size_t heads, std::size_t memory_len, double eps,
                   Rng& rng);

    AttentionMode mode() const { return mode_; }
    double eps() const { return eps_; }

    /// z: [B, T, K] -> LayerNorm(Q + dropout(A_final)).
    ///
    /// Memory and hybrid modes attend over the buffer (hybrid: tokens and
    /// buffer); in train mode with updates enabled they then push mean(A),
    /// re-project and attend again. Standard mode is ordinary self-attention.
    Tensor forward(const Tensor& z, const ForwardContext& ctx, AttentionTrace* trace = nullptr);

    ParameterList parameters(const std::string& prefix) const;

    AttentionWeights weights;
    Tensor norm_gain;  // [K]
    Tensor norm_bias;  // [K]
    MemoryBuffer memory;  // empty in standard mode

private:
    AttentionMode mode_ = AttentionMode::memory;
    double eps_ = 1e-5;
};

/// Memory-conditioned attention sub-layer as a free function. With
/// `include_tokens` the projected tokens are placed ahead of the memory in
/// the key/value sequence.
Tensor memory_attention_forward(const Tensor& z, const AttentionWeights& weights, MemoryBuffer& buffer,
                                const Tensor& gain, const Tensor& bias, double eps, const ForwardContext& ctx,
                                AttentionTrace* trace = nullptr, bool include_tokens = false);

/// Token-token self-attention sub-layer (the ablation baseline).
Tensor standard_attention_forward(const Tensor& z, const AttentionWeights& weights, const Tensor& gain,
                                  const Tensor& bias, double eps, const ForwardContext& ctx,
                                  AttentionTrace* trace = nullptr);

}  // namespace memformer
