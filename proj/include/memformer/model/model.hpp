#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "memformer/embedder/embedder.hpp"
#include "memformer/memattention/memattention.hpp"

namespace memformer {

enum class MemoryInit { gaussian, zeros };
/// How the encoder output is reduced to one vector per sample.
enum class Readout { mean, cls };

std::string_view to_string(MemoryInit init);
std::string_view to_string(Readout readout);
MemoryInit parse_memory_init(std::string_view name);
Readout parse_readout(std::string_view name);

struct ModelConfig {
    std::size_t window = 14;   // W_s
    std::size_t subpatch = 2;  // w
    std::size_t embed = 64;    // K
    std::size_t layers = 4;    // L
    std::size_t heads = 8;     // h
    std::size_t ffn_hidden = 0;  // D; 0 means 4K
    std::size_t memory_len = 10;  // M_len
    double dropout = 0.1;
    PositionalMode pe = PositionalMode::sspe;
    AttentionMode attention = AttentionMode::hybrid;
    std::size_t classes = 3;  // C
    std::size_t bands = 16;   // S
    std::uint64_t seed = 0;
    MemoryInit memory_init = MemoryInit::gaussian;
    Readout readout = Readout::cls;
    double ln_eps = 1e-5;
    SSPEConfig sspe;

    std::size_t hidden() const { return ffn_hidden == 0 ? 4 * embed : ffn_hidden; }
    std::size_t tokens() const { return (window / subpatch) * (window / subpatch); }
    bool operator==(const ModelConfig&) const;
};

/// Throws std::invalid_argument naming the first invalid field.
void validate(const ModelConfig& cfg);

/// Every field as (key, text) in a fixed order. The text round-trips exactly
/// through set_config_field.
std::vector<std::pair<std::string, std::string>> config_fields(const ModelConfig& cfg);

/// Sets one field from its text form. Returns false for an unknown key and
/// throws std::invalid_argument for a malformed value.
bool set_config_field(ModelConfig& cfg, std::string_view key, std::string_view value);

/// Name of the first field on which two configs differ, or empty if equal.
std::string first_difference(const ModelConfig& a, const ModelConfig& b);

/// ReLU(x W1 + b1) W2 + b2.
Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

/// Attention sub-layer followed by the feed-forward sub-layer, each with a
/// residual LayerNorm.
struct EncoderLayer {
    AttentionBlock attention;
    Tensor ffn_w1;  // [K, D]
    Tensor ffn_b1;  // [D]
    Tensor ffn_w2;  // [D, K]
    Tensor ffn_b2;  // [K]
    Tensor norm_gain;  // [K]
    Tensor norm_bias;  // [K]

    Tensor forward(const Tensor& z, const ForwardContext& ctx, double eps);
    ParameterList parameters(const std::string& prefix) const;
};

struct ParamCensus {
    std::size_t trainable = 0;
    std::size_t non_trainable = 0;
};

class MemFormerModel {
public:
    /// Builds and initializes every tensor from cfg.seed.
    explicit MemFormerModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    /// batch: [B, W_s, W_s, S] -> logits [B, C].
    Tensor forward(const Tensor& batch, const ForwardContext& ctx);

    /// Eval-mode class probabilities [B, C].
    Tensor probabilities(const Tensor& batch);
    /// Eval-mode argmax labels (0-based).
    std::vector<std::size_t> predict(const Tensor& batch);

    /// Trainable tensors with stable, unique names.
    ParameterList parameters() const;
    /// Memory buffers, one per layer in memory mode.
    std::vector<MemoryBuffer*> memories();
    std::vector<const MemoryBuffer*> memories() const;
    void set_memory_frozen(bool frozen);

    ParamCensus count_params() const;

    Tensor cls;  // [K]
    PatchProjector projector;
    PositionalEncoder positional;
    std::vector<EncoderLayer> layers;
    Tensor classifier_w;  // [K, C]
    Tensor classifier_b;  // [C]

private:
    ModelConfig cfg_;
};

/// Index of the largest entry of each row of [B, C]; ties go to the lower
/// index.
std::vector<std::size_t> argmax_rows(const Tensor& scores);

/// Trainable count of a parameter list.
std::size_t count_elements(const ParameterList& params);

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const MemFormerModel& model, const std::filesystem::path& path);
/// Throws byteio::FormatError on malformed input; no partial model escapes.
MemFormerModel load_checkpoint(const std::filesystem::path& path);
/// As above, and throws std::invalid_argument naming the first field where
/// the stored config differs from `expected`.
MemFormerModel load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

std::vector<std::uint8_t> encode_checkpoint(const MemFormerModel& model);
MemFormerModel decode_checkpoint(std::vector<std::uint8_t> bytes);

}  // namespace memformer
