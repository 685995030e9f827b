#include "memformer/harness/ablation.hpp"

#include <cstdio>
#include <stdexcept>

namespace memformer {

namespace {

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

}  // namespace

TrialRow run_trial(const std::string& variant, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                   const HSICube& cube, const SplitManifest& manifest, const std::string& varied_key) {
    TrialRow row;
    row.variant = variant;
    row.model = model_cfg;
    row.train = train_cfg;
    row.manifest_hash = manifest_hash(manifest);
    row.fingerprint = config_fingerprint(model_cfg, train_cfg);
    row.base_fingerprint = config_fingerprint(model_cfg, train_cfg, varied_key);
    MemFormerModel model(model_cfg);
    row.training = train(model, cube, manifest, train_cfg);
    row.report = evaluate(model, cube, manifest.test);
    return row;
}

StudyReport ablate_attention(const HSICube& cube, const SplitManifest& manifest, const ModelConfig& base,
                             const TrainConfig& train_cfg) {
    StudyReport report{"attention", "attention", {}};
    // The memory-enhanced row uses the base mode unless the base is standard.
    const auto enhanced = base.attention == AttentionMode::standard ? AttentionMode::hybrid : base.attention;
    for (auto mode : {enhanced, AttentionMode::standard}) {
        auto cfg = base;
        cfg.attention = mode;
        report.rows.push_back(run_trial(std::string(to_string(mode)), cfg, train_cfg, cube, manifest, "attention"));
    }
    return report;
}

StudyReport ablate_pe(const HSICube& cube, const SplitManifest& manifest, const ModelConfig& base,
                      const TrainConfig& train_cfg) {
    StudyReport report{"positional_encoding", "pe", {}};
    for (auto mode :
         {PositionalMode::none, PositionalMode::learnable, PositionalMode::sinusoidal1d, PositionalMode::sspe}) {
        auto cfg = base;
        cfg.pe = mode;
        report.rows.push_back(run_trial(std::string(to_string(mode)), cfg, train_cfg, cube, manifest, "pe"));
    }
    return report;
}

const std::vector<std::size_t>& default_memory_sizes() {
    static const std::vector<std::size_t> sizes{1, 5, 10, 15, 20, 25, 30};
    return sizes;
}

std::optional<double> reference_ip_oa(std::size_t memory_len) {
    static const std::vector<std::pair<std::size_t, double>> table{
        {1, 98.16}, {5, 95.80}, {10, 99.23}, {15, 91.18}, {20, 98.65}, {25, 98.88}, {30, 98.67}};
    for (const auto& [size, oa] : table) {
        if (size == memory_len) {
            return oa;
        }
    }
    return std::nullopt;
}

StudyReport sweep_memory(const HSICube& cube, const SplitManifest& manifest, const ModelConfig& base,
                         const TrainConfig& train_cfg, const std::vector<std::size_t>& sizes) {
    if (sizes.empty()) {
        throw std::invalid_argument("memory sweep needs at least one size");
    }
    for (auto s : sizes) {
        if (s == 0) {
            throw std::invalid_argument("memory sizes must be at least 1");
        }
    }
    StudyReport report{"memory_size", "memory_len", {}};
    for (auto size : sizes) {
        auto cfg = base;
        if (cfg.attention == AttentionMode::standard) {
            cfg.attention = AttentionMode::hybrid;
        }
        cfg.memory_len = size;
        auto row = run_trial(std::to_string(size), cfg, train_cfg, cube, manifest, "memory_len");
        row.reference_oa = reference_ip_oa(size);
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string format_study_csv(const StudyReport& report) {
    std::string out =
        "study,variant,attention,pe,memory_len,oa,aa,kappa,trainable_params,non_trainable_params,best_epoch,"
        "final_train_loss,train_seconds,eval_seconds,manifest_hash,base_fingerprint,fingerprint,reference_ip_oa\n";
    for (const auto& r : report.rows) {
        const auto& m = r.report.metrics;
        out += report.study + "," + r.variant + "," + std::string(to_string(r.model.attention)) + "," +
               std::string(to_string(r.model.pe)) + "," + std::to_string(r.model.memory_len) + "," +
               format_real(m.oa) + "," + format_real(m.aa) + "," + format_real(m.kappa) + "," +
               std::to_string(r.report.census.trainable) + "," + std::to_string(r.report.census.non_trainable) + "," +
               std::to_string(r.training.best_epoch) + "," + format_real(r.training.log.back().train_loss) + "," +
               format_fixed(r.training.seconds, 3) + "," + format_fixed(r.report.seconds, 3) + "," +
               r.manifest_hash + "," + r.base_fingerprint + "," + r.fingerprint + "," +
               (r.reference_oa ? format_fixed(*r.reference_oa, 2) : std::string()) + "\n";
    }
    return out;
}

std::string format_study_summary(const StudyReport& report) {
    std::string out = "Study: " + report.study + " (varying " + report.varied_key + ")\n";
    if (!report.rows.empty()) {
        out += "Split manifest: " + report.rows.front().manifest_hash + "\n";
    }
    out += "variant          OA      AA      kappa   trainable  best_epoch";
    const bool has_reference = !report.rows.empty() && report.rows.front().reference_oa.has_value();
    out += has_reference ? "  reference IP OA (%)\n" : "\n";
    for (const auto& r : report.rows) {
        char line[160];
        std::snprintf(line, sizeof line, "%-15s  %.4f  %.4f  %.4f  %9zu  %10zu", r.variant.c_str(),
                      r.report.metrics.oa, r.report.metrics.aa, r.report.metrics.kappa, r.report.census.trainable,
                      r.training.best_epoch);
        out += line;
        if (r.reference_oa) {
            out += "  " + format_fixed(*r.reference_oa, 2);
        }
        out += "\n";
    }
    if (report.rows.size() == 2 && report.study == "attention") {
        out += "OA gap (memory - standard): " +
               format_fixed(report.rows[0].report.metrics.oa - report.rows[1].report.metrics.oa, 4) + "\n";
    }
    if (has_reference) {
        out += "Published values are reference metadata from a different dataset, not targets.\n";
    }
    return out;
}

}  // namespace memformer
