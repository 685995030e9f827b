#include "memformer/model/model.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <system_error>

#include "memformer/common/byteio.hpp"

namespace memformer {

namespace {

// Applies `f(name, field)` to every config field in a fixed order; the order
// defines the checkpoint config block and the config-file key listing.
template <typename Config, typename F>
void visit_fields(Config& cfg, F&& f) {
    f("window", cfg.window);
    f("subpatch", cfg.subpatch);
    f("embed", cfg.embed);
    f("layers", cfg.layers);
    f("heads", cfg.heads);
    f("ffn_hidden", cfg.ffn_hidden);
    f("memory_len", cfg.memory_len);
    f("dropout", cfg.dropout);
    f("pe", cfg.pe);
    f("attention", cfg.attention);
    f("classes", cfg.classes);
    f("bands", cfg.bands);
    f("seed", cfg.seed);
    f("memory_init", cfg.memory_init);
    f("readout", cfg.readout);
    f("ln_eps", cfg.ln_eps);
    f("sspe_wavelength", cfg.sspe.wavelength);
    f("sspe_spectral_scale", cfg.sspe.spectral_scale);
    f("sspe_sinusoid_dim", cfg.sspe.sinusoid_dim);
    f("sspe_spatial_dim", cfg.sspe.spatial_dim);
    f("sspe_spectral_dim", cfg.sspe.spectral_dim);
}

std::string format_value(std::size_t v) { return std::to_string(v); }

std::string format_value(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename E>
std::string format_value(E v) requires std::is_enum_v<E> {
    return std::string(to_string(v));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const std::string& expected) {
    throw std::invalid_argument("invalid value \"" + std::string(value) + "\" for " + std::string(key) +
                                " (expected " + expected + ")");
}

void parse_value(std::string_view key, std::string_view text, std::size_t& out) {
    std::size_t v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        bad_value(key, text, "a non-negative integer");
    }
    out = v;
}

void parse_value(std::string_view key, std::string_view text, double& out) {
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
        bad_value(key, text, "a finite real number");
    }
    out = v;
}

void parse_value(std::string_view, std::string_view text, PositionalMode& out) { out = parse_positional_mode(text); }
void parse_value(std::string_view, std::string_view text, AttentionMode& out) { out = parse_attention_mode(text); }
void parse_value(std::string_view, std::string_view text, MemoryInit& out) { out = parse_memory_init(text); }
void parse_value(std::string_view, std::string_view text, Readout& out) { out = parse_readout(text); }

void write_field(byteio::Writer& w, std::size_t v) { w.u64(v); }
void write_field(byteio::Writer& w, double v) { w.f64(v); }
template <typename E>
void write_field(byteio::Writer& w, E v) requires std::is_enum_v<E> {
    w.u16(static_cast<std::uint16_t>(v));
}

void read_field(byteio::Reader& r, const char* name, std::size_t& v) { v = r.u64(name); }
void read_field(byteio::Reader& r, const char* name, double& v) { v = r.f64(name); }
// Number of values of each enum stored in the config block.
constexpr std::uint16_t enum_count(PositionalMode) { return 4; }
constexpr std::uint16_t enum_count(AttentionMode) { return 3; }
constexpr std::uint16_t enum_count(MemoryInit) { return 2; }
constexpr std::uint16_t enum_count(Readout) { return 2; }

template <typename E>
void read_field(byteio::Reader& r, const char* name, E& v) requires std::is_enum_v<E> {
    const std::size_t at = r.position();
    const auto raw = r.u16(name);
    if (raw >= enum_count(E{})) {
        throw byteio::FormatError(at, std::string("invalid ") + name + " code " + std::to_string(raw));
    }
    v = static_cast<E>(raw);
}

void check_finite(const Tensor& t, const std::string& where) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) {
            throw std::domain_error("non-finite activation in " + where);
        }
    }
}

void require(bool ok, const char* field, const std::string& why) {
    if (!ok) {
        throw std::invalid_argument(std::string("invalid config field ") + field + ": " + why);
    }
}

}  // namespace

std::string_view to_string(MemoryInit init) {
    switch (init) {
        case MemoryInit::gaussian:
            return "gaussian";
        case MemoryInit::zeros:
            return "zeros";
    }
    return "";
}

std::string_view to_string(Readout readout) {
    switch (readout) {
        case Readout::mean:
            return "mean";
        case Readout::cls:
            return "cls";
    }
    return "";
}

MemoryInit parse_memory_init(std::string_view name) {
    if (name == "gaussian") {
        return MemoryInit::gaussian;
    }
    if (name == "zeros") {
        return MemoryInit::zeros;
    }
    throw std::invalid_argument("unknown memory init \"" + std::string(name) + "\" (expected gaussian or zeros)");
}

Readout parse_readout(std::string_view name) {
    if (name == "mean") {
        return Readout::mean;
    }
    if (name == "cls") {
        return Readout::cls;
    }
    throw std::invalid_argument("unknown readout \"" + std::string(name) + "\" (expected mean or cls)");
}

bool ModelConfig::operator==(const ModelConfig& other) const { return first_difference(*this, other).empty(); }

void validate(const ModelConfig& cfg) {
    require(cfg.window >= 1, "window", "must be at least 1");
    require(cfg.subpatch >= 1 && cfg.window % cfg.subpatch == 0, "subpatch", "must divide window");
    require(cfg.embed >= 1, "embed", "must be at least 1");
    require(cfg.heads >= 1 && cfg.embed % cfg.heads == 0, "heads", "must divide embed");
    require(cfg.attention == AttentionMode::standard || cfg.memory_len >= 1, "memory_len", "must be at least 1");
    require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "dropout", "must lie in [0, 1)");
    require(cfg.classes >= 1, "classes", "must be at least 1");
    require(cfg.bands >= 1, "bands", "must be at least 1");
    require(cfg.ln_eps > 0.0, "ln_eps", "must be positive");
    require(cfg.pe != PositionalMode::sspe || cfg.embed % 2 == 0, "embed", "must be even for sspe");
    require(cfg.sspe.wavelength > 0.0, "sspe_wavelength", "must be positive");
    require(cfg.sspe.spectral_scale > 0.0, "sspe_spectral_scale", "must be positive");
    require(cfg.sspe.spatial_dim % 2 == 0, "sspe_spatial_dim", "must be even");
    require(cfg.sspe.spectral_dim % 2 == 0, "sspe_spectral_dim", "must be even");
}

std::vector<std::pair<std::string, std::string>> config_fields(const ModelConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    visit_fields(cfg, [&](const char* name, const auto& v) { out.emplace_back(name, format_value(v)); });
    return out;
}

bool set_config_field(ModelConfig& cfg, std::string_view key, std::string_view value) {
    bool found = false;
    visit_fields(cfg, [&](const char* name, auto& field) {
        if (key == name) {
            parse_value(key, value, field);
            found = true;
        }
    });
    return found;
}

std::string first_difference(const ModelConfig& a, const ModelConfig& b) {
    const auto fa = config_fields(a);
    const auto fb = config_fields(b);
    for (std::size_t i = 0; i < fa.size(); ++i) {
        if (fa[i].second != fb[i].second) {
            return fa[i].first;
        }
    }
    return {};
}

Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
    return add(matmul(relu(add(matmul(x, w1), b1)), w2), b2);
}

Tensor EncoderLayer::forward(const Tensor& z, const ForwardContext& ctx, double eps) {
    auto a = attention.forward(z, ctx);
    auto f = ffn(a, ffn_w1, ffn_b1, ffn_w2, ffn_b2);
    if (ctx.train && ctx.dropout > 0.0) {
        f = dropout(f, ctx.dropout, *ctx.rng, true);
    }
    return layer_norm(add(a, f), norm_gain, norm_bias, eps);
}

ParameterList EncoderLayer::parameters(const std::string& prefix) const {
    auto params = attention.parameters(prefix + "attn.");
    params.insert(params.end(), {{prefix + "ffn_w1", ffn_w1},
                                 {prefix + "ffn_b1", ffn_b1},
                                 {prefix + "ffn_w2", ffn_w2},
                                 {prefix + "ffn_b2", ffn_b2},
                                 {prefix + "norm_gain", norm_gain},
                                 {prefix + "norm_bias", norm_bias}});
    return params;
}

MemFormerModel::MemFormerModel(const ModelConfig& cfg) : cfg_(cfg) {
    validate(cfg_);
    Rng rng(cfg_.seed);
    const std::size_t k = cfg_.embed;
    const std::size_t d = cfg_.hidden();
    projector = PatchProjector(k, cfg_.subpatch, cfg_.bands, rng);
    positional = PositionalEncoder(cfg_.pe, cfg_.window, cfg_.subpatch, cfg_.bands, k, cfg_.sspe, rng);
    cls = Tensor::zeros({k}, true);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        EncoderLayer layer;
        layer.attention = AttentionBlock(cfg_.attention, k, cfg_.heads, cfg_.memory_len, cfg_.ln_eps, rng);
        layer.ffn_w1 = xavier_uniform({k, d}, k, d, rng);
        layer.ffn_b1 = Tensor::zeros({d}, true);
        layer.ffn_w2 = xavier_uniform({d, k}, d, k, rng);
        layer.ffn_b2 = Tensor::zeros({k}, true);
        layer.norm_gain = Tensor::full({k}, 1.0, true);
        layer.norm_bias = Tensor::zeros({k}, true);
        layers.push_back(std::move(layer));
    }
    classifier_w = xavier_uniform({k, cfg_.classes}, k, cfg_.classes, rng);
    classifier_b = Tensor::zeros({cfg_.classes}, true);
    if (cfg_.memory_init == MemoryInit::gaussian) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto* buffer : memories()) {
            std::vector<double> values(buffer->capacity() * buffer->width());
            for (auto& v : values) {
                v = normal(rng);
            }
            buffer->assign(values);
        }
    }
}

Tensor MemFormerModel::forward(const Tensor& batch, const ForwardContext& ctx) {
    const Shape expected{cfg_.window, cfg_.window, cfg_.bands};
    if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != expected) {
        throw std::invalid_argument("model input must be [B, " + std::to_string(cfg_.window) + ", " +
                                    std::to_string(cfg_.window) + ", " + std::to_string(cfg_.bands) + "], got " +
                                    shape_string(batch.shape()));
    }
    if (ctx.train && ctx.dropout > 0.0 && ctx.rng == nullptr) {
        throw std::invalid_argument("train-mode dropout needs a random generator");
    }
    check_finite(batch, "the input batch");
    auto tokens = tokenize_batch(batch, cfg_.subpatch);
    auto z = add(prepend_token(cls, projector.project(tokens)), positional.build(tokens));
    check_finite(z, "the embedding");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        z = layers[l].forward(z, ctx, cfg_.ln_eps);
        check_finite(z, "encoder layer " + std::to_string(l));
    }
    Tensor pooled;
    if (cfg_.readout == Readout::cls) {
        pooled = select_token(z, 0);
    } else {
        const std::size_t b = z.dim(0);
        const std::size_t t = z.dim(1);
        auto weights = tile(Tensor::full({1, t}, 1.0 / static_cast<double>(t)), b);
        pooled = reshape(bmm(weights, z), {b, cfg_.embed});
    }
    return add(matmul(pooled, classifier_w), classifier_b);
}

Tensor MemFormerModel::probabilities(const Tensor& batch) { return softmax_rows(forward(batch, {}).detach()); }

std::vector<std::size_t> MemFormerModel::predict(const Tensor& batch) { return argmax_rows(forward(batch, {})); }

ParameterList MemFormerModel::parameters() const {
    ParameterList params{{"cls", cls}, {"projector.kernel", projector.kernel}, {"projector.bias", projector.bias}};
    auto pe = positional.parameters("pe.");
    params.insert(params.end(), pe.begin(), pe.end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto p = layers[l].parameters("layer" + std::to_string(l) + ".");
        params.insert(params.end(), p.begin(), p.end());
    }
    params.push_back({"classifier.w", classifier_w});
    params.push_back({"classifier.b", classifier_b});
    return params;
}

std::vector<MemoryBuffer*> MemFormerModel::memories() {
    std::vector<MemoryBuffer*> out;
    for (auto& layer : layers) {
        if (layer.attention.mode() != AttentionMode::standard) {
            out.push_back(&layer.attention.memory);
        }
    }
    return out;
}

std::vector<const MemoryBuffer*> MemFormerModel::memories() const {
    std::vector<const MemoryBuffer*> out;
    for (const auto& layer : layers) {
        if (layer.attention.mode() != AttentionMode::standard) {
            out.push_back(&layer.attention.memory);
        }
    }
    return out;
}

void MemFormerModel::set_memory_frozen(bool frozen) {
    for (auto* buffer : memories()) {
        buffer->set_frozen(frozen);
    }
}

ParamCensus MemFormerModel::count_params() const {
    ParamCensus census;
    census.trainable = count_elements(parameters());
    for (const auto* buffer : memories()) {
        census.non_trainable += buffer->entries().size();
    }
    return census;
}

std::vector<std::size_t> argmax_rows(const Tensor& scores) {
    if (scores.rank() != 2) {
        throw std::invalid_argument("argmax_rows expects [B, C], got " + shape_string(scores.shape()));
    }
    const std::size_t rows = scores.dim(0);
    const std::size_t cols = scores.dim(1);
    auto d = scores.data();
    std::vector<std::size_t> out(rows, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 1; c < cols; ++c) {
            if (d[r * cols + c] > d[r * cols + out[r]]) {
                out[r] = c;
            }
        }
    }
    return out;
}

std::size_t count_elements(const ParameterList& params) {
    std::size_t n = 0;
    for (const auto& p : params) {
        if (p.tensor.requires_grad()) {
            n += p.tensor.size();
        }
    }
    return n;
}

std::vector<std::uint8_t> encode_checkpoint(const MemFormerModel& model) {
    byteio::Writer w;
    w.raw("MFCK");
    w.u16(kCheckpointVersion);
    ModelConfig cfg = model.config();
    visit_fields(cfg, [&](const char*, const auto& v) { write_field(w, v); });

    ParameterList records = model.parameters();
    const auto buffers = model.memories();
    for (std::size_t l = 0, b = 0; l < model.layers.size(); ++l) {
        if (model.layers[l].attention.mode() != AttentionMode::standard) {
            records.push_back({"layer" + std::to_string(l) + ".memory", buffers[b++]->entries()});
        }
    }
    w.u32(static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) {
        w.u32(static_cast<std::uint32_t>(rec.name.size()));
        w.raw(rec.name);
        w.u32(static_cast<std::uint32_t>(rec.tensor.rank()));
        for (auto extent : rec.tensor.shape()) {
            w.u64(extent);
        }
        for (double v : rec.tensor.data()) {
            w.f64(v);
        }
    }
    return w.bytes();
}

MemFormerModel decode_checkpoint(std::vector<std::uint8_t> bytes) {
    byteio::Reader r(std::move(bytes));
    r.expect_magic("MFCK");
    const std::size_t version_at = r.position();
    const auto version = r.u16("version");
    if (version != kCheckpointVersion) {
        throw byteio::FormatError(version_at, "unsupported checkpoint version " + std::to_string(version) +
                                                  " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    ModelConfig cfg;
    const std::size_t config_at = r.position();
    visit_fields(cfg, [&](const char* name, auto& v) { read_field(r, name, v); });
    MemFormerModel model = [&] {
        try {
            return MemFormerModel(cfg);
        } catch (const std::invalid_argument& e) {
            throw byteio::FormatError(config_at, std::string("invalid config block: ") + e.what());
        }
    }();

    std::map<std::string, Tensor> slots;
    for (const auto& p : model.parameters()) {
        slots[p.name] = p.tensor;
    }
    std::map<std::string, MemoryBuffer*> memory_slots;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (model.layers[l].attention.mode() != AttentionMode::standard) {
            memory_slots["layer" + std::to_string(l) + ".memory"] = &model.layers[l].attention.memory;
        }
    }

    const std::size_t count_at = r.position();
    const auto count = r.u32("record count");
    if (count != slots.size() + memory_slots.size()) {
        throw byteio::FormatError(count_at, "checkpoint has " + std::to_string(count) + " tensors, expected " +
                                                std::to_string(slots.size() + memory_slots.size()));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t record_at = r.position();
        const auto name = r.raw(r.u32("name length"), "tensor name");
        const auto rank = r.u32("tensor rank");
        r.need(std::size_t{8} * rank, "tensor extents");
        Shape shape;
        for (std::uint32_t a = 0; a < rank; ++a) {
            shape.push_back(r.u64("tensor extent"));
        }
        Shape expected;
        std::span<double> target;
        std::vector<double> memory_values;
        if (auto it = slots.find(name); it != slots.end()) {
            expected = it->second.shape();
            target = it->second.mutable_data();
        } else if (auto mit = memory_slots.find(name); mit != memory_slots.end()) {
            expected = mit->second->entries().shape();
            memory_values.resize(shape_size(expected));
            target = memory_values;
        } else {
            throw byteio::FormatError(record_at, "unexpected or duplicate tensor \"" + name + "\"");
        }
        if (shape != expected) {
            throw byteio::FormatError(record_at, "tensor \"" + name + "\" has shape " + shape_string(shape) +
                                                     ", expected " + shape_string(expected));
        }
        r.need(target.size() * 8, "tensor data");
        for (auto& v : target) {
            v = r.f64("tensor data");
        }
        if (auto mit = memory_slots.find(name); mit != memory_slots.end()) {
            mit->second->assign(memory_values);
            memory_slots.erase(mit);
        } else {
            slots.erase(name);
        }
    }
    if (r.remaining() != 0) {
        throw byteio::FormatError(r.position(), std::to_string(r.remaining()) + " trailing bytes after last tensor");
    }
    return model;
}

void save_checkpoint(const MemFormerModel& model, const std::filesystem::path& path) {
    byteio::write_file(path, encode_checkpoint(model));
}

MemFormerModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(byteio::read_file(path)); }

MemFormerModel load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
    auto model = load_checkpoint(path);
    const auto field = first_difference(model.config(), expected);
    if (!field.empty()) {
        std::string stored, wanted;
        for (const auto& [key, value] : config_fields(model.config())) {
            stored = key == field ? value : stored;
        }
        for (const auto& [key, value] : config_fields(expected)) {
            wanted = key == field ? value : wanted;
        }
        throw std::invalid_argument("checkpoint config mismatch in field " + field + ": stored " + stored +
                                    ", expected " + wanted);
    }
    return model;
}

}  // namespace memformer
