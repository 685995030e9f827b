#include "memformer/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

namespace memformer {

namespace {

std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::pair<std::string, std::string>> train_fields(const TrainConfig& cfg) {
    return {{"epochs", std::to_string(cfg.epochs)},
            {"batch_size", std::to_string(cfg.batch_size)},
            {"learning_rate", format_real(cfg.adam.learning_rate)},
            {"weight_decay", format_real(cfg.adam.weight_decay)},
            {"beta1", format_real(cfg.adam.beta1)},
            {"beta2", format_real(cfg.adam.beta2)},
            {"adam_eps", format_real(cfg.adam.eps)},
            {"train_seed", std::to_string(cfg.seed)}};
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T v{};
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw std::invalid_argument("invalid value \"" + std::string(text) + "\" for " + std::string(key));
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("value for " + std::string(key) + " must be finite");
        }
    }
    return v;
}

bool set_train_field(TrainConfig& cfg, std::string_view key, std::string_view value) {
    if (key == "epochs") {
        cfg.epochs = parse_number<std::size_t>(key, value);
    } else if (key == "batch_size") {
        cfg.batch_size = parse_number<std::size_t>(key, value);
    } else if (key == "learning_rate") {
        cfg.adam.learning_rate = parse_number<double>(key, value);
    } else if (key == "weight_decay") {
        cfg.adam.weight_decay = parse_number<double>(key, value);
    } else if (key == "beta1") {
        cfg.adam.beta1 = parse_number<double>(key, value);
    } else if (key == "beta2") {
        cfg.adam.beta2 = parse_number<double>(key, value);
    } else if (key == "adam_eps") {
        cfg.adam.eps = parse_number<double>(key, value);
    } else if (key == "train_seed") {
        cfg.seed = parse_number<std::uint64_t>(key, value);
    } else {
        return false;
    }
    return true;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

void validate(const TrainConfig& cfg) {
    auto require = [](bool ok, const char* field, const char* why) {
        if (!ok) {
            throw std::invalid_argument(std::string("invalid config field ") + field + ": " + why);
        }
    };
    require(cfg.epochs >= 1, "epochs", "must be at least 1");
    require(cfg.batch_size >= 1, "batch_size", "must be at least 1");
    require(cfg.adam.learning_rate >= 0.0, "learning_rate", "must not be negative");
    require(cfg.adam.weight_decay >= 0.0, "weight_decay", "must not be negative");
    require(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0, "beta1", "must lie in [0, 1)");
    require(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0, "beta2", "must lie in [0, 1)");
    require(cfg.adam.eps > 0.0, "adam_eps", "must be positive");
}

RunConfig parse_run_config(std::string_view text) {
    RunConfig run;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto end = text.find('\n');
        auto line = text.substr(0, end);
        text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(line_no, "expected key = value, got \"" + std::string(line) + "\"");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError(line_no, "missing key or value in \"" + std::string(line) + "\"");
        }
        if (!run.explicit_keys.insert(std::string(key)).second) {
            throw ConfigError(line_no, "duplicate key " + std::string(key));
        }
        try {
            if (!set_config_field(run.model, key, value) && !set_train_field(run.train, key, value)) {
                throw ConfigError(line_no, "unknown key " + std::string(key));
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError(line_no, e.what());
        }
    }
    validate(run.model);
    validate(run.train);
    return run;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

std::string format_run_config(const ModelConfig& model, const TrainConfig& train) {
    std::string out = "# model\n";
    for (const auto& [key, value] : config_fields(model)) {
        out += key + " = " + value + "\n";
    }
    out += "# training\n";
    for (const auto& [key, value] : train_fields(train)) {
        out += key + " = " + value + "\n";
    }
    return out;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_fingerprint(const ModelConfig& model, const TrainConfig& train, std::string_view excluded_key) {
    std::string text;
    auto append = [&](const auto& fields) {
        for (const auto& [key, value] : fields) {
            if (key != excluded_key) {
                text += key + "=" + value + "\n";
            }
        }
    };
    append(config_fields(model));
    append(train_fields(train));
    return fnv1a_hex(text);
}

}  // namespace memformer
