// advml: train a small CNN, attack it with FGSM, harden it with adversarial
// training, and emit the evaluation artifacts (reports, confusion matrices,
// history CSV, image triples).

#include <functional>
#include <iostream>
#include <vector>

#include <CLI11.hpp>

#include "advml/experiment.hpp"

namespace {

using advml::ExperimentConfig;

// Flags land in funnel; applier callbacks copy only the flags the user
// actually passed onto the final config, so --config file values win over
// defaults but lose to explicit flags.
struct ConfigBinder {
    ExperimentConfig funnel;
    std::string config_file;
    std::vector<std::function<void(ExperimentConfig&)>> appliers;

    template <typename T>
    void bind(CLI::Option* opt, T ExperimentConfig::* member) {
        appliers.push_back([this, opt, member](ExperimentConfig& dst) {
            if (opt->count() > 0) dst.*member = this->funnel.*member;
        });
    }

    ExperimentConfig resolve() const {
        ExperimentConfig cfg;
        if (!config_file.empty()) cfg = advml::config_from_json_file(config_file);
        for (const auto& apply : appliers) apply(cfg);
        return cfg;
    }
};

ConfigBinder* add_common(CLI::App& cmd) {
    auto binder = std::make_shared<ConfigBinder>();
    ExperimentConfig& f = binder->funnel;
    cmd.add_option("--config", binder->config_file, "JSON config file; flags override its values");
    binder->bind(cmd.add_option("--seed", f.seed, "master RNG seed"), &ExperimentConfig::seed);
    binder->bind(cmd.add_option("--out", f.out_dir, "output directory"), &ExperimentConfig::out_dir);
    // keep the shared_ptr alive for the app's lifetime
    static std::vector<std::shared_ptr<ConfigBinder>> keep;
    keep.push_back(binder);
    return binder.get();
}

void add_data_options(CLI::App& cmd, ConfigBinder& b) {
    ExperimentConfig& f = b.funnel;
    b.bind(cmd.add_option("--data", f.data_dir, "dataset directory (<root>/<class>/*.ppm); omit for synthetic data"),
           &ExperimentConfig::data_dir);
    b.bind(cmd.add_option("--n-per-class", f.synth_per_class, "synthetic images per class"),
           &ExperimentConfig::synth_per_class);
    b.bind(cmd.add_option("--size", f.image_size, "image side length"), &ExperimentConfig::image_size);
    b.bind(cmd.add_option("--train-fraction", f.train_fraction, "stratified train fraction"),
           &ExperimentConfig::train_fraction);
}

void add_train_options(CLI::App& cmd, ConfigBinder& b) {
    ExperimentConfig& f = b.funnel;
    b.bind(cmd.add_option("--epochs", f.epochs, "training epochs"), &ExperimentConfig::epochs);
    b.bind(cmd.add_option("--batch-size", f.batch_size, "batch size"), &ExperimentConfig::batch_size);
    b.bind(cmd.add_option("--lr", f.lr, "Adam learning rate"), &ExperimentConfig::lr);
    b.bind(cmd.add_option("--rotation-range", f.rotation_range, "augmentation rotation range (degrees)"),
           &ExperimentConfig::rotation_range);
    b.bind(cmd.add_flag("--no-shuffle{false}", f.shuffle, "disable epoch shuffling"),
           &ExperimentConfig::shuffle);
    b.bind(cmd.add_option("--conv-channels", f.conv_channels, "conv block output channels"),
           &ExperimentConfig::conv_channels);
    b.bind(cmd.add_option("--freeze", f.freeze_layers, "layer indices to freeze"),
           &ExperimentConfig::freeze_layers);
}

void add_attack_options(CLI::App& cmd, ConfigBinder& b) {
    ExperimentConfig& f = b.funnel;
    b.bind(cmd.add_option("--epsilon", f.epsilon, "FGSM perturbation budget"), &ExperimentConfig::epsilon);
    b.bind(cmd.add_option("--clip-min", f.clip_min, "pixel lower bound"), &ExperimentConfig::clip_min);
    b.bind(cmd.add_option("--clip-max", f.clip_max, "pixel upper bound"), &ExperimentConfig::clip_max);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale FGSM adversarial-attack toolkit"};
    app.require_subcommand(1);

    CLI::App* synth = app.add_subcommand("synth", "write a synthetic blob/ring PPM dataset");
    ConfigBinder* bs = add_common(*synth);
    add_data_options(*synth, *bs);

    CLI::App* train = app.add_subcommand("train", "train the classifier and evaluate the test split");
    ConfigBinder* bt = add_common(*train);
    add_data_options(*train, *bt);
    add_train_options(*train, *bt);

    CLI::App* attack = app.add_subcommand("attack", "FGSM-attack a trained checkpoint");
    ConfigBinder* ba = add_common(*attack);
    add_data_options(*attack, *ba);
    add_attack_options(*attack, *ba);
    ba->bind(attack->add_option("--checkpoint", ba->funnel.checkpoint_path, "trained checkpoint"),
             &ExperimentConfig::checkpoint_path);
    ba->bind(attack->add_option("--samples", ba->funnel.sample_triples, "image triples to write"),
             &ExperimentConfig::sample_triples);

    CLI::App* defend = app.add_subcommand("defend", "adversarial training run");
    ConfigBinder* bd = add_common(*defend);
    add_data_options(*defend, *bd);
    add_train_options(*defend, *bd);
    add_attack_options(*defend, *bd);
    bd->bind(defend->add_option("--alpha", bd->funnel.mix_alpha, "clean-loss mixing weight"),
             &ExperimentConfig::mix_alpha);

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
    ConfigBinder* be = add_common(*evaluate);
    add_data_options(*evaluate, *be);
    be->bind(evaluate->add_option("--checkpoint", be->funnel.checkpoint_path, "trained checkpoint"),
             &ExperimentConfig::checkpoint_path);

    CLI::App* compare = app.add_subcommand("compare", "diff two report JSON files");
    ConfigBinder* bc = add_common(*compare);
    bc->bind(compare->add_option("--before", bc->funnel.before_report, "baseline report.json"),
             &ExperimentConfig::before_report);
    bc->bind(compare->add_option("--after", bc->funnel.after_report, "post-attack report.json"),
             &ExperimentConfig::after_report);

    try {
        app.parse(argc, argv);
        if (synth->parsed()) advml::run_synth(bs->resolve());
        if (train->parsed()) advml::run_train(bt->resolve());
        if (attack->parsed()) advml::run_attack(ba->resolve());
        if (defend->parsed()) advml::run_defend(bd->resolve());
        if (evaluate->parsed()) advml::run_evaluate(be->resolve());
        if (compare->parsed()) advml::run_compare(bc->resolve());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const advml::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const advml::ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const advml::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const advml::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
