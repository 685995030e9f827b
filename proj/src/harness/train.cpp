#include "memformer/harness/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "memformer/hsidata/window.hpp"

namespace memformer {

namespace {

constexpr std::size_t kEvalChunk = 256;

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// Saved copy of everything training mutates.
struct Snapshot {
    std::vector<std::vector<double>> params;
    std::vector<std::vector<double>> memories;
};

Snapshot take_snapshot(const MemFormerModel& model) {
    Snapshot s;
    for (const auto& p : model.parameters()) {
        s.params.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    }
    for (const auto* m : model.memories()) {
        s.memories.emplace_back(m->entries().data().begin(), m->entries().data().end());
    }
    return s;
}

void restore_snapshot(MemFormerModel& model, const Snapshot& s) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::copy(s.params[i].begin(), s.params[i].end(), params[i].tensor.mutable_data().begin());
    }
    auto memories = model.memories();
    for (std::size_t i = 0; i < memories.size(); ++i) {
        memories[i]->assign(s.memories[i]);
    }
}

}  // namespace

SampleSet::SampleSet(const HSICube& cube, const std::vector<PixelRef>& pixels, std::size_t window,
                     std::size_t classes)
    : sample_shape_{window, window, cube.bands()}, sample_size_(window * window * cube.bands()) {
    values_.resize(pixels.size() * sample_size_);
    targets_.reserve(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const auto& px = pixels[i];
        if (px.label == 0 || px.label > classes) {
            throw std::invalid_argument("pixel (" + std::to_string(px.row) + ", " + std::to_string(px.col) +
                                        ") has class " + std::to_string(px.label) + ", model has " +
                                        std::to_string(classes) + " classes");
        }
        extract_window_into(cube, px.row, px.col, window,
                            std::span<double>(values_).subspan(i * sample_size_, sample_size_));
        targets_.push_back(px.label - 1u);
    }
}

Tensor SampleSet::batch(std::span<const std::size_t> indices) const {
    std::vector<double> out;
    out.reserve(indices.size() * sample_size_);
    for (auto i : indices) {
        const auto first = values_.begin() + static_cast<std::ptrdiff_t>(i * sample_size_);
        out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(sample_size_));
    }
    Shape shape{indices.size()};
    shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
    return Tensor::from(std::move(shape), std::move(out));
}

LossAccuracy score(MemFormerModel& model, const SampleSet& samples) {
    if (samples.empty()) {
        throw std::invalid_argument("cannot score an empty sample set");
    }
    double loss = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
        const std::size_t stop = std::min(start + kEvalChunk, samples.size());
        idx.resize(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        auto logits = model.forward(samples.batch(idx), {});
        std::span<const std::size_t> targets(samples.targets().data() + start, idx.size());
        loss += cross_entropy(logits, targets).item() * static_cast<double>(idx.size());
        const auto pred = argmax_rows(logits);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            correct += pred[i] == targets[i];
        }
    }
    const double n = static_cast<double>(samples.size());
    return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(MemFormerModel& model, const HSICube& cube, const SplitManifest& manifest, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    validate(cfg);
    if (manifest.train.empty()) {
        throw std::invalid_argument("train split is empty");
    }
    if (manifest.val.empty()) {
        throw std::invalid_argument("validation split is empty");
    }
    const auto start = std::chrono::steady_clock::now();
    const auto& mcfg = model.config();
    SampleSet train_set(cube, manifest.train, mcfg.window, mcfg.classes);
    SampleSet val_set(cube, manifest.val, mcfg.window, mcfg.classes);

    Rng rng(cfg.seed);
    const auto params = model.parameters();
    auto state = make_adam_state(params);
    model.set_memory_frozen(false);
    ForwardContext ctx;
    ctx.train = true;
    ctx.dropout = mcfg.dropout;
    ctx.rng = &rng;

    TrainResult result;
    Snapshot best;
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            std::span<const std::size_t> idx(order.data() + first, std::min(cfg.batch_size, order.size() - first));
            std::vector<std::size_t> targets;
            for (auto i : idx) {
                targets.push_back(train_set.targets()[i]);
            }
            auto logits = model.forward(train_set.batch(idx), ctx);
            auto loss = cross_entropy(logits, targets);
            if (!std::isfinite(loss.item())) {
                throw std::domain_error("training loss became non-finite in epoch " + std::to_string(epoch));
            }
            for (const auto& p : params) {
                Tensor(p.tensor).zero_grad();
            }
            backward(loss);
            adam_step(params, state, cfg.adam);
            loss_sum += loss.item() * static_cast<double>(idx.size());
            const auto pred = argmax_rows(logits);
            for (std::size_t i = 0; i < pred.size(); ++i) {
                correct += pred[i] == targets[i];
            }
        }
        const auto val = score(model, val_set);
        const double n = static_cast<double>(train_set.size());
        EpochLog entry{epoch, loss_sum / n, static_cast<double>(correct) / n, val.loss, val.accuracy};
        result.log.push_back(entry);
        if (on_epoch) {
            on_epoch(entry);
        }
        if (result.best_epoch == 0 || val.accuracy > result.best_val_acc) {
            result.best_epoch = epoch;
            result.best_val_acc = val.accuracy;
            best = take_snapshot(model);
        }
    }
    restore_snapshot(model, best);
    result.seconds = seconds_since(start);
    return result;
}

EvalReport evaluate(MemFormerModel& model, const HSICube& cube, const std::vector<PixelRef>& pixels) {
    if (pixels.empty()) {
        throw std::invalid_argument("test split is empty");
    }
    const auto start = std::chrono::steady_clock::now();
    const auto& mcfg = model.config();
    SampleSet samples(cube, pixels, mcfg.window, mcfg.classes);
    std::vector<bool> was_frozen;
    for (auto* m : model.memories()) {
        was_frozen.push_back(m->frozen());
    }
    model.set_memory_frozen(true);

    EvalReport report;
    report.confusion = ConfusionMatrix(mcfg.classes);
    std::vector<std::size_t> idx;
    for (std::size_t first = 0; first < samples.size(); first += kEvalChunk) {
        const std::size_t stop = std::min(first + kEvalChunk, samples.size());
        idx.resize(stop - first);
        std::iota(idx.begin(), idx.end(), first);
        const auto pred = model.predict(samples.batch(idx));
        for (std::size_t i = 0; i < pred.size(); ++i) {
            report.confusion.add(samples.targets()[first + i], pred[i]);
        }
    }
    auto memories = model.memories();
    for (std::size_t i = 0; i < memories.size(); ++i) {
        memories[i]->set_frozen(was_frozen[i]);
    }
    report.metrics = compute_metrics(report.confusion);
    report.census = model.count_params();
    report.samples = samples.size();
    report.seconds = seconds_since(start);
    return report;
}

std::string format_epoch_log(const std::vector<EpochLog>& log) {
    std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + "," + format_real(e.train_loss) + "," + format_real(e.train_acc) + "," +
               format_real(e.val_loss) + "," + format_real(e.val_acc) + "\n";
    }
    return out;
}

std::string format_eval_csv(const EvalReport& report, const std::string& manifest_hash) {
    std::string header = "samples,oa,aa,kappa";
    std::string row = std::to_string(report.samples) + "," + format_real(report.metrics.oa) + "," +
                      format_real(report.metrics.aa) + "," + format_real(report.metrics.kappa);
    for (std::size_t c = 0; c < report.metrics.per_class.size(); ++c) {
        header += ",class_" + std::to_string(c + 1) + "_acc";
        const double acc = report.metrics.per_class[c];
        row += "," + (std::isnan(acc) ? std::string() : format_real(acc));
    }
    header += ",trainable_params,non_trainable_params,eval_seconds,manifest_hash";
    row += "," + std::to_string(report.census.trainable) + "," + std::to_string(report.census.non_trainable) + "," +
           format_fixed(report.seconds, 3) + "," + manifest_hash;
    return header + "\n" + row + "\n";
}

std::string format_eval_summary(const EvalReport& report, const std::string& manifest_hash) {
    std::string out = "Evaluation over " + std::to_string(report.samples) + " test pixels (split " + manifest_hash +
                      ")\n";
    out += "  OA    " + format_fixed(report.metrics.oa, 4) + "\n";
    out += "  AA    " + format_fixed(report.metrics.aa, 4) + "\n";
    out += "  kappa " + format_fixed(report.metrics.kappa, 4) + "\n";
    out += "Per-class accuracy\n";
    for (std::size_t c = 0; c < report.metrics.per_class.size(); ++c) {
        const double acc = report.metrics.per_class[c];
        out += "  class " + std::to_string(c + 1) + ": " + (std::isnan(acc) ? "n/a" : format_fixed(acc, 4)) +
               " (" + std::to_string(report.confusion.row_sum(c)) + " pixels)\n";
    }
    out += "Confusion matrix (rows true, columns predicted)\n";
    for (std::size_t t = 0; t < report.confusion.classes(); ++t) {
        out += " ";
        for (std::size_t p = 0; p < report.confusion.classes(); ++p) {
            out += " " + std::to_string(report.confusion.at(t, p));
        }
        out += "\n";
    }
    out += "Parameters: " + std::to_string(report.census.trainable) + " trainable, " +
           std::to_string(report.census.non_trainable) + " non-trainable\n";
    out += "Eval time: " + format_fixed(report.seconds, 3) + " s\n";
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw std::runtime_error("write to " + path.string() + " failed");
    }
}

std::filesystem::path summary_path(const std::filesystem::path& path) {
    auto out = path;
    if (out.extension() == ".csv") {
        out.replace_extension(".txt");
    } else {
        out += ".txt";
    }
    return out;
}

}  // namespace memformer
