#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "memformer/harness/train.hpp"

namespace memformer {

/// One train/evaluate run inside a study.
struct TrialRow {
    std::string variant;
    ModelConfig model;
    TrainConfig train;
    TrainResult training;
    EvalReport report;
    std::string manifest_hash;
    std::string fingerprint;       // all fields
    std::string base_fingerprint;  // all fields except the one the study varies
    std::optional<double> reference_oa;  // reference value, metadata only
};

struct StudyReport {
    std::string study;
    std::string varied_key;
    std::vector<TrialRow> rows;
};

/// Trains a fresh model from `model_cfg` and evaluates it on manifest.test.
TrialRow run_trial(const std::string& variant, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                   const HSICube& cube, const SplitManifest& manifest, const std::string& varied_key);

/// Memory-enhanced (the base mode, or hybrid for a standard base) vs standard
/// attention, everything else equal.
StudyReport ablate_attention(const HSICube& cube, const SplitManifest& manifest, const ModelConfig& base,
                             const TrainConfig& train_cfg);

/// none, learnable, sinusoidal1d and sspe positional encodings.
StudyReport ablate_pe(const HSICube& cube, const SplitManifest& manifest, const ModelConfig& base,
                      const TrainConfig& train_cfg);

/// Memory sizes used by default, matching the reference accuracy table.
const std::vector<std::size_t>& default_memory_sizes();
/// Reference overall accuracy (percent) on Indian Pines at a memory size.
std::optional<double> reference_ip_oa(std::size_t memory_len);

/// One run per memory length, using the base attention mode (a standard base
/// is swapped for hybrid). Throws on an empty list or a zero size.
StudyReport sweep_memory(const HSICube& cube, const SplitManifest& manifest, const ModelConfig& base,
                         const TrainConfig& train_cfg, const std::vector<std::size_t>& sizes);

/// Header plus one metric row per trial.
std::string format_study_csv(const StudyReport& report);
std::string format_study_summary(const StudyReport& report);

}  // namespace memformer
