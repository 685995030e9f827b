#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "memformer/harness/config.hpp"
#include "memformer/harness/metrics.hpp"
#include "memformer/hsidata/cube.hpp"
#include "memformer/hsidata/split.hpp"
#include "memformer/model/model.hpp"

namespace memformer {

/// Pre-extracted windows around a list of labeled pixels.
class SampleSet {
public:
    SampleSet() = default;
    /// Throws std::invalid_argument when a label exceeds `classes` or is 0.
    SampleSet(const HSICube& cube, const std::vector<PixelRef>& pixels, std::size_t window, std::size_t classes);

    std::size_t size() const { return targets_.size(); }
    bool empty() const { return targets_.empty(); }
    /// 0-based class of each sample.
    const std::vector<std::size_t>& targets() const { return targets_; }

    /// [indices.size(), W, W, S] batch of the selected samples.
    Tensor batch(std::span<const std::size_t> indices) const;

private:
    Shape sample_shape_;
    std::size_t sample_size_ = 0;
    std::vector<double> values_;
    std::vector<std::size_t> targets_;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_val_acc = 0.0;
    double seconds = 0.0;
};

/// Mini-batch Adam on cross-entropy over manifest.train with a seeded
/// per-epoch shuffle. Memory buffers update in batch order. After each epoch
/// the model is scored on manifest.val; at the end the model is restored to
/// the epoch with the best validation accuracy (earliest on ties), memory
/// included. Throws on an empty train or validation split.
TrainResult train(MemFormerModel& model, const HSICube& cube, const SplitManifest& manifest, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Mean cross-entropy and accuracy in eval mode.
struct LossAccuracy {
    double loss = 0.0;
    double accuracy = 0.0;
};
LossAccuracy score(MemFormerModel& model, const SampleSet& samples);

struct EvalReport {
    ConfusionMatrix confusion{1};
    Metrics metrics;
    ParamCensus census;
    std::size_t samples = 0;
    double seconds = 0.0;
};

/// Eval-mode predictions over `pixels` with memory frozen for the duration.
EvalReport evaluate(MemFormerModel& model, const HSICube& cube, const std::vector<PixelRef>& pixels);

std::string format_epoch_log(const std::vector<EpochLog>& log);
/// CSV row of one evaluation, with its header, and a readable summary.
std::string format_eval_csv(const EvalReport& report, const std::string& manifest_hash);
std::string format_eval_summary(const EvalReport& report, const std::string& manifest_hash);

void write_text(const std::filesystem::path& path, const std::string& text);
/// `path` with its extension replaced by `.txt` (or `.txt` appended).
std::filesystem::path summary_path(const std::filesystem::path& path);

}  // namespace memformer
