#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advml/attack.hpp"
#include "advml/checkpoint.hpp"
#include "advml/data.hpp"
#include "advml/defense.hpp"
#include "advml/eval.hpp"
#include "advml/optim.hpp"

namespace advml {

// Everything a run needs, fully serializable; each command echoes the
// effective config to <out_dir>/config_used.json.
struct ExperimentConfig {
    // data
    std::string data_dir;            // empty -> synthetic blob/ring data
    std::size_t synth_per_class = 500;
    std::size_t image_size = 32;
    double train_fraction = 0.7;
    // model
    std::vector<std::size_t> conv_channels = {16, 32};
    std::vector<std::size_t> freeze_layers;
    // training
    std::size_t epochs = 15;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    double rotation_range = 15.0;
    bool shuffle = true;
    // attack
    double epsilon = 0.1;
    double clip_min = 0.0;
    double clip_max = 1.0;
    std::size_t sample_triples = 8;
    // defense
    double mix_alpha = 0.5;
    // run
    std::uint64_t seed = 7;
    std::string out_dir = "out";
    std::string checkpoint_path;     // input for attack / evaluate
    std::string before_report;       // inputs for compare
    std::string after_report;

    TrainConfig train_config() const {
        return {epochs, batch_size, lr, seed, shuffle, rotation_range};
    }
    FgsmConfig fgsm_config() const { return {epsilon, clip_min, clip_max}; }
};

ExperimentConfig config_from_json_file(const std::filesystem::path& path);
void write_config_json(const std::filesystem::path& path, const ExperimentConfig& cfg);

// Default desk-scale model: one Conv(3x3, pad 1) + ReLU + MaxPool(2) block
// per conv_channels entry, then Flatten and the dense/dropout/softmax head.
ModelF build_default_model(const ExperimentConfig& cfg);

// FNV-1a over the raw bytes of the model's probabilities on a batch;
// bit-identical models give identical hashes.
std::uint64_t prediction_hash(const ModelF& model, const TensorF& batch);

struct TrainOutcome {
    ModelF model;
    History history;
    ClassReport clean_report;
    ConfusionMatrix clean_confusion;
    DatasetF test_set;
};

struct AttackOutcome {
    ClassReport clean_report;
    ClassReport adv_report;
    ReportComparison comparison;
    double linf_max = 0.0;
};

struct DefendOutcome {
    ModelF model;
    History history;
    ClassReport clean_report;
    double robust_accuracy = 0.0;
};

// Subcommand bodies. Each acquires <out_dir>/.lock for the duration of the
// run, writes its artifact files, and echoes config_used.json.
void run_synth(const ExperimentConfig& cfg);
TrainOutcome run_train(const ExperimentConfig& cfg);
AttackOutcome run_attack(const ExperimentConfig& cfg);
DefendOutcome run_defend(const ExperimentConfig& cfg);
ClassReport run_evaluate(const ExperimentConfig& cfg);
ReportComparison run_compare(const ExperimentConfig& cfg);

} // namespace advml
