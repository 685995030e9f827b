// Command-line driver: data synthesis, splitting, training, evaluation and
// the ablation studies.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memformer/harness/ablation.hpp"
#include "memformer/hsidata/synth.hpp"

using namespace memformer;

namespace {

struct DataPaths {
    std::string cube;
    std::string labels;
    std::string manifest;
};

void add_data_options(CLI::App* cmd, DataPaths& paths) {
    cmd->add_option("--cube", paths.cube, "HSC1 cube file")->required();
    cmd->add_option("--labels", paths.labels, "HSL1 label file")->required();
    cmd->add_option("--manifest", paths.manifest, "split manifest")->required();
}

struct Inputs {
    HSICube cube{1, 1, 1};
    LabelMap labels{1, 1};
    SplitManifest manifest;
};

Inputs load_inputs(const DataPaths& paths) {
    Inputs in{load_cube(paths.cube), load_labels(paths.labels), load_manifest(paths.manifest)};
    check_aligned(in.cube, in.labels);
    for (const auto* list : {&in.manifest.train, &in.manifest.val, &in.manifest.test}) {
        for (const auto& px : *list) {
            if (px.row >= in.labels.height() || px.col >= in.labels.width() ||
                in.labels.at(px.row, px.col) != px.label) {
                throw std::invalid_argument("manifest entry (" + std::to_string(px.row) + ", " +
                                            std::to_string(px.col) + ") does not match the label file");
            }
        }
    }
    return in;
}

// Config from file (or defaults) with bands and classes taken from the data
// unless the file sets them, in which case they must agree.
RunConfig resolve_config(const std::string& path, const Inputs& in) {
    RunConfig run = path.empty() ? parse_run_config("") : load_run_config(path);
    auto bind = [&](const char* key, std::size_t& field, std::size_t actual) {
        if (run.explicit_keys.count(key) == 0) {
            field = actual;
        } else if (field != actual) {
            throw std::invalid_argument(std::string("config sets ") + key + " = " + std::to_string(field) +
                                        " but the data has " + std::to_string(actual));
        }
    };
    bind("bands", run.model.bands, in.cube.bands());
    bind("classes", run.model.classes, in.labels.num_classes());
    validate(run.model);
    return run;
}

void write_study(const StudyReport& report, const std::string& out) {
    write_text(out, format_study_csv(report));
    const auto summary = format_study_summary(report);
    write_text(summary_path(out), summary);
    std::cout << summary;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> sizes;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (item.empty() || used != item.size() || item[0] == '-') {
            throw std::invalid_argument("invalid memory size \"" + item + "\" in --sizes");
        }
        sizes.push_back(static_cast<std::size_t>(v));
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return sizes;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MemFormer hyperspectral classifier"};
    app.require_subcommand(1);

    SynthParams synth;
    std::string synth_cube, synth_labels;
    auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic scene");
    synth_cmd->add_option("--height", synth.height)->capture_default_str();
    synth_cmd->add_option("--width", synth.width)->capture_default_str();
    synth_cmd->add_option("--bands", synth.bands)->capture_default_str();
    synth_cmd->add_option("--classes", synth.classes)->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise_sigma, "noise standard deviation")->capture_default_str();
    synth_cmd->add_option("--blobs", synth.blob_count, "spatial blobs per class")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
    synth_cmd->add_option("--out-cube", synth_cube)->required();
    synth_cmd->add_option("--out-labels", synth_labels)->required();

    SplitFractions fractions;
    std::uint64_t split_seed = 0;
    std::string split_labels, split_out;
    auto* split_cmd = app.add_subcommand("split", "draw a stratified train/val/test split");
    split_cmd->add_option("--labels", split_labels)->required();
    split_cmd->add_option("--train-frac", fractions.train)->capture_default_str();
    split_cmd->add_option("--val-frac", fractions.val)->capture_default_str();
    split_cmd->add_option("--test-frac", fractions.test)->capture_default_str();
    split_cmd->add_option("--seed", split_seed)->capture_default_str();
    split_cmd->add_option("--out", split_out)->required();

    DataPaths train_paths;
    std::string train_config, checkpoint_out, log_out;
    auto* train_cmd = app.add_subcommand("train", "train a model and keep the best-validation state");
    add_data_options(train_cmd, train_paths);
    train_cmd->add_option("--config", train_config, "key = value config file (defaults if omitted)");
    train_cmd->add_option("--checkpoint-out", checkpoint_out)->required();
    train_cmd->add_option("--log-out", log_out, "per-epoch CSV log")->required();

    DataPaths eval_paths;
    std::string eval_checkpoint, eval_report;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_data_options(eval_cmd, eval_paths);
    eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();
    eval_cmd->add_option("--report-out", eval_report, "CSV report; a .txt summary is written alongside")
        ->required();

    DataPaths study_paths;
    std::string study_config, study_report;
    std::string sizes_text = "1,5,10,15,20,25,30";
    std::vector<CLI::App*> studies;
    for (const char* name : {"ablate-attention", "ablate-pe", "sweep-memory"}) {
        auto* cmd = app.add_subcommand(name, "run an ablation study");
        add_data_options(cmd, study_paths);
        cmd->add_option("--config", study_config, "base config file (defaults if omitted)");
        cmd->add_option("--report-out", study_report, "CSV report; a .txt summary is written alongside")
            ->required();
        studies.push_back(cmd);
    }
    studies[0]->description("memory-enhanced vs standard attention");
    studies[1]->description("none / learnable / sinusoidal1d / sspe positional encodings");
    studies[2]->description("accuracy against memory length");
    studies[2]->add_option("--sizes", sizes_text, "comma-separated memory lengths")->capture_default_str();

    std::string params_config;
    auto* params_cmd = app.add_subcommand("params", "print the parameter census of a config");
    params_cmd->add_option("--config", params_config)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) {
            auto [cube, labels] = synth_scene(synth);
            save_cube(cube, synth_cube);
            save_labels(labels, synth_labels);
            std::cout << "wrote " << cube.height() << "x" << cube.width() << "x" << cube.bands() << " cube with "
                      << labels.num_classes() << " classes\n";
        } else if (*split_cmd) {
            auto manifest = stratified_split(load_labels(split_labels), fractions, split_seed);
            save_manifest(manifest, split_out);
            std::cout << "train " << manifest.train.size() << ", val " << manifest.val.size() << ", test "
                      << manifest.test.size() << " pixels; manifest hash " << manifest_hash(manifest) << "\n";
        } else if (*train_cmd) {
            auto in = load_inputs(train_paths);
            auto run = resolve_config(train_config, in);
            MemFormerModel model(run.model);
            const auto census = model.count_params();
            std::cout << "parameters: " << census.trainable << " trainable, " << census.non_trainable
                      << " non-trainable\n";
            auto result = train(model, in.cube, in.manifest, run.train, [](const EpochLog& e) {
                std::printf("epoch %3zu  train_loss %.5f  train_acc %.4f  val_loss %.5f  val_acc %.4f\n", e.epoch,
                            e.train_loss, e.train_acc, e.val_loss, e.val_acc);
                std::fflush(stdout);
            });
            write_text(log_out, format_epoch_log(result.log));
            save_checkpoint(model, checkpoint_out);
            std::printf("best epoch %zu (val_acc %.4f), %.1f s\n", result.best_epoch, result.best_val_acc,
                        result.seconds);
        } else if (*eval_cmd) {
            auto in = load_inputs(eval_paths);
            auto model = load_checkpoint(eval_checkpoint);
            auto report = evaluate(model, in.cube, in.manifest.test);
            const auto hash = manifest_hash(in.manifest);
            write_text(eval_report, format_eval_csv(report, hash));
            const auto summary = format_eval_summary(report, hash);
            write_text(summary_path(eval_report), summary);
            std::cout << summary;
        } else if (*studies[0] || *studies[1] || *studies[2]) {
            auto in = load_inputs(study_paths);
            auto run = resolve_config(study_config, in);
            if (*studies[0]) {
                write_study(ablate_attention(in.cube, in.manifest, run.model, run.train), study_report);
            } else if (*studies[1]) {
                write_study(ablate_pe(in.cube, in.manifest, run.model, run.train), study_report);
            } else {
                write_study(sweep_memory(in.cube, in.manifest, run.model, run.train, parse_sizes(sizes_text)),
                            study_report);
            }
        } else if (*params_cmd) {
            auto run = load_run_config(params_config);
            const auto census = MemFormerModel(run.model).count_params();
            std::cout << "trainable " << census.trainable << "\nnon_trainable " << census.non_trainable << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
