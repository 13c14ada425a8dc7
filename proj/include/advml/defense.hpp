#pragma once

#include "advml/attack.hpp"
#include "advml/eval.hpp"
#include "advml/optim.hpp"

namespace advml {

// Accuracy on the FGSM-attacked dataset at the given config.
template <typename Scalar>
double robust_accuracy(const Model<Scalar>& model, const Dataset<Scalar>& dataset,
                       const FgsmConfig& config) {
    return accuracy(confusion(model, attack_dataset(model, dataset, config)));
}

// Adversarial training: per batch, FGSM examples are generated against the
// current weights and the objective is
//   mix_alpha * L(x, y) + (1 - mix_alpha) * L(x_adv, y).
// mix_alpha = 1 and epsilon = 0 take the plain-fit code path outright, so
// those reductions are bit-exact. History rows additionally carry robust
// validation accuracy (FGSM-attacked validation set, current model).
template <typename Scalar>
History adversarial_fit(Model<Scalar>& model, const Dataset<Scalar>& train_set,
                        const Dataset<Scalar>& val_set, const TrainConfig& train_config,
                        const FgsmConfig& fgsm_config, double mix_alpha, RngState& rng) {
    train_config.validate();
    fgsm_config.validate();
    if (!(mix_alpha >= 0.0 && mix_alpha <= 1.0))
        throw ConfigError("adversarial_fit: mix_alpha must be in [0,1]");
    if (train_set.size() == 0 || val_set.size() == 0)
        throw ConfigError("adversarial_fit: datasets must be non-empty");

    const bool mixes = mix_alpha < 1.0 && fgsm_config.epsilon > 0.0;
    const std::size_t n = train_set.size();
    const std::size_t k = model.num_classes();
    AdamState<Scalar> adam = AdamState<Scalar>::for_model(model, train_config.lr);
    const AugmentConfig aug{train_config.rotation_range};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    History history;
    history.epochs.reserve(train_config.epochs);
    for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
        if (train_config.shuffle) detail::fisher_yates(order, rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += train_config.batch_size) {
            const std::size_t end = std::min(start + train_config.batch_size, n);
            const std::vector<std::size_t> chunk(order.begin() + std::ptrdiff_t(start),
                                                 order.begin() + std::ptrdiff_t(end));
            auto [batch, labels] = make_batch(train_set, chunk);
            batch = augment_batch(batch, aug, rng);
            const Tensor<Scalar> onehot = one_hot<Scalar>(labels, k);

            double batch_loss;
            Tensor<Scalar> clean_probs;
            if (!mixes) {
                ForwardResult<Scalar> fr = forward(model, batch, Mode::train, &rng);
                batch_loss = cross_entropy(fr.probs, onehot);
                clean_probs = fr.probs;
                const Gradients<Scalar> grads = backward(model, fr.trace, fr.probs, onehot);
                adam_step(model, grads, adam);
            } else {
                const Tensor<Scalar> adv = fgsm(model, batch, onehot, fgsm_config);
                ForwardResult<Scalar> fr_clean = forward(model, batch, Mode::train, &rng);
                const double loss_clean = cross_entropy(fr_clean.probs, onehot);
                Gradients<Scalar> g_clean = backward(model, fr_clean.trace, fr_clean.probs, onehot);
                ForwardResult<Scalar> fr_adv = forward(model, adv, Mode::train, &rng);
                const double loss_adv = cross_entropy(fr_adv.probs, onehot);
                const Gradients<Scalar> g_adv = backward(model, fr_adv.trace, fr_adv.probs, onehot);

                const Scalar a = Scalar(mix_alpha), b = Scalar(1.0 - mix_alpha);
                for (std::size_t li = 0; li < g_clean.params.size(); ++li) {
                    auto mix = [&](Tensor<Scalar>& gc, const Tensor<Scalar>& ga) {
                        for (std::size_t j = 0; j < gc.size(); ++j)
                            gc[j] = a * gc[j] + b * ga[j];
                    };
                    mix(g_clean.params[li].weight, g_adv.params[li].weight);
                    mix(g_clean.params[li].bias, g_adv.params[li].bias);
                }
                adam_step(model, g_clean, adam);
                batch_loss = mix_alpha * loss_clean + (1.0 - mix_alpha) * loss_adv;
                clean_probs = fr_clean.probs;
            }
            loss_sum += batch_loss * double(chunk.size());
            const std::vector<std::size_t> preds = argmax(clean_probs, 1);
            for (std::size_t i = 0; i < preds.size(); ++i)
                if (preds[i] == labels[i]) ++correct;
        }
        EpochStats stats;
        stats.train_loss = loss_sum / double(n);
        stats.train_acc = double(correct) / double(n);
        const EvalStats val = evaluate_dataset(model, val_set, train_config.batch_size);
        stats.val_loss = val.loss;
        stats.val_acc = val.accuracy;
        stats.robust_val_acc = robust_accuracy(model, val_set, fgsm_config);
        history.epochs.push_back(stats);
    }
    return history;
}

} // namespace advml
