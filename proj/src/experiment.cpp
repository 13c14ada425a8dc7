#include "advml/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "advml/ppm.hpp"
#include "advml/serialize.hpp"

namespace advml {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Guards an output directory against concurrent runs for the lifetime of
// one command.
class OutputLock {
public:
    explicit OutputLock(const fs::path& out_dir) : path_(out_dir / ".lock") {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw IoError(out_dir.string() + ": cannot create output directory");
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw IoError(path_.string() +
                          ": output directory is locked (concurrent run, or remove a stale .lock)");
    }
    ~OutputLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

ordered_json config_json(const ExperimentConfig& c) {
    ordered_json j;
    j["data_dir"] = c.data_dir;
    j["synth_per_class"] = c.synth_per_class;
    j["image_size"] = c.image_size;
    j["train_fraction"] = c.train_fraction;
    j["conv_channels"] = c.conv_channels;
    j["freeze_layers"] = c.freeze_layers;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["rotation_range"] = c.rotation_range;
    j["shuffle"] = c.shuffle;
    j["epsilon"] = c.epsilon;
    j["clip_min"] = c.clip_min;
    j["clip_max"] = c.clip_max;
    j["sample_triples"] = c.sample_triples;
    j["mix_alpha"] = c.mix_alpha;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["checkpoint_path"] = c.checkpoint_path;
    j["before_report"] = c.before_report;
    j["after_report"] = c.after_report;
    return j;
}

// Deterministic stream assignment: 0 synth, 1 split, 2 init, 3 fit.
enum RngStream : std::uint64_t { kSynthStream = 0, kSplitStream = 1, kInitStream = 2, kFitStream = 3 };

DatasetF load_or_synthesize(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (!cfg.data_dir.empty()) return load_directory<float>(cfg.data_dir, cfg.image_size);
    RngState rng = RngState(seed).child(kSynthStream);
    return synthesize<float>(cfg.synth_per_class, cfg.image_size, rng);
}

std::pair<DatasetF, DatasetF> prepare_splits(const ExperimentConfig& cfg, std::uint64_t seed) {
    const DatasetF full = load_or_synthesize(cfg, seed);
    RngState rng = RngState(seed).child(kSplitStream);
    return stratified_split(full, cfg.train_fraction, rng);
}

void print_history(const History& history) {
    for (std::size_t i = 0; i < history.epochs.size(); ++i) {
        const EpochStats& e = history.epochs[i];
        std::printf("epoch %2zu/%zu  train_loss %.4f  train_acc %.4f  val_loss %.4f  val_acc %.4f",
                    i + 1, history.epochs.size(), e.train_loss, e.train_acc, e.val_loss, e.val_acc);
        if (e.robust_val_acc) std::printf("  robust_val_acc %.4f", *e.robust_val_acc);
        std::printf("\n");
    }
}

// Sample triple for one test image: the 8-bit original, the adversarial
// image re-expressed as original + trunc-toward-zero(255*delta) so the
// re-read L-inf stays within epsilon, and the delta scaled around mid-gray.
void write_triple(const fs::path& dir, std::size_t index, const TensorF& x, const TensorF& adv,
                  double epsilon) {
    write_ppm(dir / ("orig_" + std::to_string(index) + ".ppm"), x);

    TensorF adv_q(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = std::lround(255.0 * std::clamp(double(x[i]), 0.0, 1.0));
        const double delta = std::trunc(255.0 * (double(adv[i]) - double(x[i])));
        adv_q[i] = float(std::clamp(xi + delta, 0.0, 255.0) / 255.0);
    }
    write_ppm(dir / ("adv_" + std::to_string(index) + ".ppm"), adv_q);

    TensorF diff(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = double(adv[i]) - double(x[i]);
        diff[i] = float(epsilon > 0.0 ? 0.5 + d / (2.0 * epsilon) : 0.5);
    }
    write_ppm(dir / ("diff_" + std::to_string(index) + ".ppm"), diff);
}

} // namespace

ExperimentConfig config_from_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open config");
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
    ExperimentConfig c; // start from defaults, override present keys
    try {
        c.data_dir = j.value("data_dir", c.data_dir);
        c.synth_per_class = j.value("synth_per_class", c.synth_per_class);
        c.image_size = j.value("image_size", c.image_size);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        c.conv_channels = j.value("conv_channels", c.conv_channels);
        c.freeze_layers = j.value("freeze_layers", c.freeze_layers);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        c.rotation_range = j.value("rotation_range", c.rotation_range);
        c.shuffle = j.value("shuffle", c.shuffle);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.clip_min = j.value("clip_min", c.clip_min);
        c.clip_max = j.value("clip_max", c.clip_max);
        c.sample_triples = j.value("sample_triples", c.sample_triples);
        c.mix_alpha = j.value("mix_alpha", c.mix_alpha);
        c.seed = j.value("seed", c.seed);
        c.out_dir = j.value("out_dir", c.out_dir);
        c.checkpoint_path = j.value("checkpoint_path", c.checkpoint_path);
        c.before_report = j.value("before_report", c.before_report);
        c.after_report = j.value("after_report", c.after_report);
    } catch (const std::exception& e) {
        throw ConfigError(path.string() + ": bad config value (" + e.what() + ")");
    }
    return c;
}

void write_config_json(const fs::path& path, const ExperimentConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << config_json(cfg).dump(2) << "\n";
    if (!out) throw IoError(path.string() + ": write failed");
}

ModelF build_default_model(const ExperimentConfig& cfg) {
    if (cfg.image_size < 8) throw ConfigError("image size must be >= 8");
    std::vector<LayerSpec> layers;
    std::size_t ch = 3, side = cfg.image_size;
    for (std::size_t oc : cfg.conv_channels) {
        layers.push_back(Conv2D{ch, oc, 3, 1, 1});
        layers.push_back(ReLU{});
        layers.push_back(MaxPool2D{2, 2});
        ch = oc;
        side = (side - 2) / 2 + 1;
    }
    layers.push_back(Flatten{});
    const std::vector<LayerSpec> head = build_paper_head(ch * side * side);
    layers.insert(layers.end(), head.begin(), head.end());
    return ModelF({3, cfg.image_size, cfg.image_size}, std::move(layers));
}

std::uint64_t prediction_hash(const ModelF& model, const TensorF& batch) {
    const TensorF probs = predict(model, batch);
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(probs[i]);
        for (int b = 0; b < 4; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

void run_synth(const ExperimentConfig& cfg) {
    const fs::path out_dir = cfg.out_dir;
    OutputLock lock(out_dir);
    RngState rng = RngState(cfg.seed).child(kSynthStream);
    const DatasetF dataset = synthesize<float>(cfg.synth_per_class, cfg.image_size, rng);
    std::vector<std::size_t> written(dataset.class_names.size(), 0);
    for (const auto& name : dataset.class_names) {
        std::error_code ec;
        fs::create_directories(out_dir / name, ec);
        if (ec) throw IoError((out_dir / name).string() + ": cannot create class directory");
    }
    for (const auto& im : dataset.images) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%05zu.ppm", written[im.label]++);
        const std::string& cls = dataset.class_names[im.label];
        write_ppm(out_dir / cls / (cls + "_" + buf), im.pixels);
    }
    write_config_json(out_dir / "config_used.json", cfg);
    std::cout << "wrote " << dataset.size() << " images under " << out_dir.string() << "\n";
}

TrainOutcome run_train(const ExperimentConfig& cfg) {
    const fs::path out_dir = cfg.out_dir;
    OutputLock lock(out_dir);
    const TrainConfig tc = cfg.train_config();
    tc.validate();

    auto [train_set, test_set] = prepare_splits(cfg, cfg.seed);
    ModelF model = build_default_model(cfg);
    RngState init_rng = RngState(cfg.seed).child(kInitStream);
    he_init(model, init_rng);
    freeze(model, cfg.freeze_layers);
    const ParamCount pc = param_count(model);
    std::cout << "model: " << pc.trainable << " trainable / " << pc.non_trainable
              << " non-trainable parameters\n";

    RngState fit_rng = RngState(cfg.seed).child(kFitStream);
    const History history = fit(model, train_set, test_set, tc, fit_rng);
    print_history(history);

    const ConfusionMatrix cm = confusion(model, test_set);
    const ClassReport rep = report(cm);
    std::cout << "clean test accuracy " << rep.accuracy << "\n";

    save_checkpoint(out_dir / "checkpoint.bin", model, cfg.seed, std::uint32_t(cfg.epochs));
    write_history_csv(out_dir / "history.csv", history);
    write_report_json(out_dir / "report_clean.json", rep);
    write_confusion_csv(out_dir / "confusion_clean.csv", cm);
    write_config_json(out_dir / "config_used.json", cfg);
    return {std::move(model), history, rep, cm, std::move(test_set)};
}

AttackOutcome run_attack(const ExperimentConfig& cfg) {
    const fs::path out_dir = cfg.out_dir;
    OutputLock lock(out_dir);
    if (cfg.checkpoint_path.empty()) throw ConfigError("attack needs --checkpoint");
    const Checkpoint cp = load_checkpoint(cfg.checkpoint_path);
    const FgsmConfig fc = cfg.fgsm_config();
    fc.validate();

    auto [train_set, test_set] = prepare_splits(cfg, cp.seed);
    (void)train_set;

    const ConfusionMatrix clean_cm = confusion(cp.model, test_set);
    const ClassReport clean_rep = report(clean_cm);
    const DatasetF attacked = attack_dataset(cp.model, test_set, fc);
    const ConfusionMatrix adv_cm = confusion(cp.model, attacked);
    const ClassReport adv_rep = report(adv_cm);
    const ReportComparison cmp = compare_reports(clean_rep, adv_rep);
    std::cout << "clean accuracy " << clean_rep.accuracy << " -> adversarial accuracy "
              << adv_rep.accuracy << " at epsilon " << fc.epsilon << "\n";

    double linf_max = 0.0;
    for (std::size_t i = 0; i < test_set.size(); ++i)
        linf_max = std::max(
            linf_max, perturbation_stats(test_set.images[i].pixels, attacked.images[i].pixels).linf);

    const std::size_t n_triples = std::min(cfg.sample_triples, test_set.size());
    for (std::size_t i = 0; i < n_triples; ++i)
        write_triple(out_dir, i, test_set.images[i].pixels, attacked.images[i].pixels, fc.epsilon);

    write_report_json(out_dir / "report_adv.json", adv_rep);
    write_confusion_csv(out_dir / "confusion_adv.csv", adv_cm);
    write_comparison_json(out_dir / "comparison.json", cmp);
    write_config_json(out_dir / "config_used.json", cfg);
    return {clean_rep, adv_rep, cmp, linf_max};
}

DefendOutcome run_defend(const ExperimentConfig& cfg) {
    const fs::path out_dir = cfg.out_dir;
    OutputLock lock(out_dir);
    const TrainConfig tc = cfg.train_config();
    tc.validate();
    const FgsmConfig fc = cfg.fgsm_config();
    fc.validate();

    auto [train_set, test_set] = prepare_splits(cfg, cfg.seed);
    ModelF model = build_default_model(cfg);
    RngState init_rng = RngState(cfg.seed).child(kInitStream);
    he_init(model, init_rng);
    freeze(model, cfg.freeze_layers);

    RngState fit_rng = RngState(cfg.seed).child(kFitStream);
    const History history =
        adversarial_fit(model, train_set, test_set, tc, fc, cfg.mix_alpha, fit_rng);
    print_history(history);

    const ClassReport rep = report(confusion(model, test_set));
    const double robust = robust_accuracy(model, test_set, fc);
    std::cout << "defended: clean accuracy " << rep.accuracy << ", robust accuracy " << robust
              << " at epsilon " << fc.epsilon << "\n";

    save_checkpoint(out_dir / "checkpoint_robust.bin", model, cfg.seed, std::uint32_t(cfg.epochs));
    write_history_csv(out_dir / "history_robust.csv", history);
    write_report_json(out_dir / "report_robust.json", rep, robust);
    write_config_json(out_dir / "config_used.json", cfg);
    return {std::move(model), history, rep, robust};
}

ClassReport run_evaluate(const ExperimentConfig& cfg) {
    const fs::path out_dir = cfg.out_dir;
    OutputLock lock(out_dir);
    if (cfg.checkpoint_path.empty()) throw ConfigError("evaluate needs --checkpoint");
    const Checkpoint cp = load_checkpoint(cfg.checkpoint_path);
    auto [train_set, test_set] = prepare_splits(cfg, cp.seed);
    (void)train_set;
    const ConfusionMatrix cm = confusion(cp.model, test_set);
    const ClassReport rep = report(cm);
    std::cout << "test accuracy " << rep.accuracy << "\n";
    write_report_json(out_dir / "report.json", rep);
    write_confusion_csv(out_dir / "confusion.csv", cm);
    write_config_json(out_dir / "config_used.json", cfg);
    return rep;
}

ReportComparison run_compare(const ExperimentConfig& cfg) {
    const fs::path out_dir = cfg.out_dir;
    OutputLock lock(out_dir);
    if (cfg.before_report.empty() || cfg.after_report.empty())
        throw ConfigError("compare needs --before and --after report paths");
    const ClassReport before = read_report_json(cfg.before_report);
    const ClassReport after = read_report_json(cfg.after_report);
    const ReportComparison cmp = compare_reports(before, after);
    std::cout << "accuracy " << cmp.accuracy_before << " -> " << cmp.accuracy_after << " (delta "
              << cmp.accuracy_delta << ")\n";
    write_comparison_json(out_dir / "comparison.json", cmp);
    write_config_json(out_dir / "config_used.json", cfg);
    return cmp;
}

} // namespace advml
