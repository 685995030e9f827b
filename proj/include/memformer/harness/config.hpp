#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include "memformer/harness/optim.hpp"
#include "memformer/model/model.hpp"

namespace memformer {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    AdamConfig adam;
    std::uint64_t seed = 0;  // shuffling and dropout
};

/// Throws std::invalid_argument naming the first invalid field.
void validate(const TrainConfig& cfg);

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::set<std::string> explicit_keys;  // keys present in the parsed text
};

/// Error in a config file, carrying the 1-based line number.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::size_t line, const std::string& message)
        : std::runtime_error("config line " + std::to_string(line) + ": " + message), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Parses flat `key = value` lines over defaults. Blank lines and `#`
/// comments are skipped; unknown or repeated keys and malformed values are
/// rejected. The result is validated.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every model and training field, one `key = value` line each.
std::string format_run_config(const ModelConfig& model, const TrainConfig& train);

/// 16-hex-digit FNV-1a hash of all fields except `excluded_key`.
std::string config_fingerprint(const ModelConfig& model, const TrainConfig& train,
                               std::string_view excluded_key = {});

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace memformer
