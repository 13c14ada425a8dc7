#pragma once

#include <numeric>
#include <optional>

#include "advml/data.hpp"
#include "advml/nn.hpp"

namespace advml {

struct TrainConfig {
    std::size_t epochs = 15;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    std::uint64_t seed = 7;
    bool shuffle = true;
    double rotation_range = 15.0; // train-batch augmentation; 0 disables rotation

    void validate() const {
        if (epochs == 0) throw ConfigError("epochs must be >= 1");
        if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
        if (rotation_range < 0.0) throw ConfigError("rotation range must be >= 0");
    }
};

struct EpochStats {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    std::optional<double> robust_val_acc; // set by adversarial training only
};

struct History {
    std::vector<EpochStats> epochs;
};

// First/second moment estimates mirroring the model's parameter tensors.
template <typename Scalar>
struct AdamState {
    std::vector<LayerParams<Scalar>> m, v;
    std::size_t t = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_model(const Model<Scalar>& model, double lr) {
        AdamState s;
        s.lr = lr;
        s.m.reserve(model.params.size());
        s.v.reserve(model.params.size());
        for (const auto& p : model.params) {
            LayerParams<Scalar> zm, zv;
            if (!p.weight.empty()) {
                zm.weight = Tensor<Scalar>(p.weight.shape());
                zv.weight = Tensor<Scalar>(p.weight.shape());
            }
            if (!p.bias.empty()) {
                zm.bias = Tensor<Scalar>(p.bias.shape());
                zv.bias = Tensor<Scalar>(p.bias.shape());
            }
            s.m.push_back(std::move(zm));
            s.v.push_back(std::move(zv));
        }
        return s;
    }
};

namespace detail {

template <typename Scalar>
void adam_update_tensor(Tensor<Scalar>& theta, const Tensor<Scalar>& grad, Tensor<Scalar>& m,
                        Tensor<Scalar>& v, const AdamState<Scalar>& s, double corr1, double corr2) {
    check_same_shape(theta, grad, "adam_step");
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = double(grad[i]);
        const double mi = s.beta1 * double(m[i]) + (1.0 - s.beta1) * g;
        const double vi = s.beta2 * double(v[i]) + (1.0 - s.beta2) * g * g;
        m[i] = Scalar(mi);
        v[i] = Scalar(vi);
        const double mhat = mi / corr1;
        const double vhat = vi / corr2;
        theta[i] = Scalar(double(theta[i]) - s.lr * mhat / (std::sqrt(vhat) + s.epsilon));
    }
    theta.validate_finite("adam_step");
}

} // namespace detail

// One Adam step over every unfrozen layer. Frozen layers keep their
// parameters and moments bit-identical.
template <typename Scalar>
void adam_step(Model<Scalar>& model, const Gradients<Scalar>& grads, AdamState<Scalar>& state) {
    if (grads.params.size() != model.params.size())
        throw ShapeError("adam_step: gradient structure does not match model");
    ++state.t;
    const double corr1 = 1.0 - std::pow(state.beta1, double(state.t));
    const double corr2 = 1.0 - std::pow(state.beta2, double(state.t));
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        if (model.frozen[i] || model.params[i].count() == 0) continue;
        detail::adam_update_tensor(model.params[i].weight, grads.params[i].weight, state.m[i].weight,
                                   state.v[i].weight, state, corr1, corr2);
        detail::adam_update_tensor(model.params[i].bias, grads.params[i].bias, state.m[i].bias,
                                   state.v[i].bias, state, corr1, corr2);
    }
}

// Replace the frozen set: exactly the listed layer indices are excluded from
// optimizer updates and counted non-trainable.
template <typename Scalar>
void freeze(Model<Scalar>& model, const std::vector<std::size_t>& layer_indices) {
    for (std::size_t idx : layer_indices)
        if (idx >= model.layers.size())
            throw ConfigError("freeze: layer index " + std::to_string(idx) + " out of range");
    std::fill(model.frozen.begin(), model.frozen.end(), 0);
    for (std::size_t idx : layer_indices) model.frozen[idx] = 1;
}

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Deterministic eval-mode pass over a dataset in stored order.
template <typename Scalar>
EvalStats evaluate_dataset(const Model<Scalar>& model, const Dataset<Scalar>& dataset,
                           std::size_t batch_size = 64) {
    if (dataset.size() == 0) throw ConfigError("evaluate: empty dataset");
    const std::size_t k = model.num_classes();
    double total_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, dataset.size());
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        auto [batch, labels] = make_batch(dataset, idx);
        const Tensor<Scalar> probs = predict(model, batch);
        total_loss += cross_entropy(probs, one_hot<Scalar>(labels, k)) * double(idx.size());
        const std::vector<std::size_t> preds = argmax(probs, 1);
        for (std::size_t i = 0; i < preds.size(); ++i)
            if (preds[i] == labels[i]) ++correct;
    }
    return {total_loss / double(dataset.size()), double(correct) / double(dataset.size())};
}

// Epoch/batch training loop: seeded shuffle, rotation augmentation on train
// batches only, Adam updates, per-epoch train metrics (as seen during
// training, dropout active) and eval-mode validation metrics.
template <typename Scalar>
History fit(Model<Scalar>& model, const Dataset<Scalar>& train_set, const Dataset<Scalar>& val_set,
            const TrainConfig& config, RngState& rng) {
    config.validate();
    if (train_set.size() == 0 || val_set.size() == 0)
        throw ConfigError("fit: datasets must be non-empty");

    const std::size_t n = train_set.size();
    const std::size_t k = model.num_classes();
    AdamState<Scalar> adam = AdamState<Scalar>::for_model(model, config.lr);
    const AugmentConfig aug{config.rotation_range};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    History history;
    history.epochs.reserve(config.epochs);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle) detail::fisher_yates(order, rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, n); // last partial batch kept
            const std::vector<std::size_t> chunk(order.begin() + std::ptrdiff_t(start),
                                                 order.begin() + std::ptrdiff_t(end));
            auto [batch, labels] = make_batch(train_set, chunk);
            batch = augment_batch(batch, aug, rng);
            const Tensor<Scalar> onehot = one_hot<Scalar>(labels, k);
            ForwardResult<Scalar> fr = forward(model, batch, Mode::train, &rng);
            loss_sum += cross_entropy(fr.probs, onehot) * double(chunk.size());
            const std::vector<std::size_t> preds = argmax(fr.probs, 1);
            for (std::size_t i = 0; i < preds.size(); ++i)
                if (preds[i] == labels[i]) ++correct;
            const Gradients<Scalar> grads = backward(model, fr.trace, fr.probs, onehot);
            adam_step(model, grads, adam);
        }
        EpochStats stats;
        stats.train_loss = loss_sum / double(n);
        stats.train_acc = double(correct) / double(n);
        const EvalStats val = evaluate_dataset(model, val_set, config.batch_size);
        stats.val_loss = val.loss;
        stats.val_acc = val.accuracy;
        history.epochs.push_back(stats);
    }
    return history;
}

} // namespace advml
