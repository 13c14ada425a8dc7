#pragma once

#include "advml/data.hpp"
#include "advml/nn.hpp"

namespace advml {

struct FgsmConfig {
    double epsilon = 0.1;  // L-inf budget in pixel units
    double clip_min = 0.0; // widen the bounds to effectively disable clipping
    double clip_max = 1.0;
    std::size_t batch_size = 64; // batching for whole-dataset attacks

    void validate() const {
        if (epsilon < 0.0) throw ConfigError("fgsm: epsilon must be >= 0");
        if (!(clip_min < clip_max)) throw ConfigError("fgsm: clip_min must be < clip_max");
        if (batch_size == 0) throw ConfigError("fgsm: batch_size must be >= 1");
    }
};

// Untargeted FGSM against the true labels:
//   x_adv = clip(x + epsilon * sign(dL/dx), clip_min, clip_max)
// with the input gradient taken in eval mode (deterministic, dropout off).
// |x_adv - x| <= epsilon holds elementwise; epsilon 0 returns x bit-exactly.
template <typename Scalar>
Tensor<Scalar> fgsm(const Model<Scalar>& model, const Tensor<Scalar>& x,
                    const Tensor<Scalar>& y_onehot, const FgsmConfig& config) {
    config.validate();
    ForwardResult<Scalar> fr = forward(model, x, Mode::eval);
    Gradients<Scalar> grads = backward(model, fr.trace, fr.probs, y_onehot);
    const Tensor<Scalar> step = scale(sign(grads.input), Scalar(config.epsilon));
    return clip(add(x, step), Scalar(config.clip_min), Scalar(config.clip_max));
}

// FGSM over a whole dataset, batch by batch; labels and ordering preserved.
template <typename Scalar>
Dataset<Scalar> attack_dataset(const Model<Scalar>& model, const Dataset<Scalar>& dataset,
                               const FgsmConfig& config) {
    config.validate();
    Dataset<Scalar> out{{}, dataset.class_names};
    out.images.reserve(dataset.size());
    const std::size_t k = model.num_classes();
    for (std::size_t start = 0; start < dataset.size(); start += config.batch_size) {
        const std::size_t end = std::min(start + config.batch_size, dataset.size());
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        auto [batch, labels] = make_batch(dataset, idx);
        const Tensor<Scalar> adv = fgsm(model, batch, one_hot<Scalar>(labels, k), config);
        for (std::size_t i = 0; i < idx.size(); ++i)
            out.images.push_back({image_at(adv, i), labels[i]});
    }
    return out;
}

struct PerturbationStats {
    double linf = 0.0;
    double l2 = 0.0;
    double mean_abs = 0.0;
    double changed_fraction = 0.0;
};

template <typename Scalar>
PerturbationStats perturbation_stats(const Tensor<Scalar>& x, const Tensor<Scalar>& x_adv) {
    detail::check_same_shape(x, x_adv, "perturbation_stats");
    PerturbationStats out;
    double sum_sq = 0.0, sum_abs = 0.0;
    std::size_t changed = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = double(x_adv[i]) - double(x[i]);
        const double a = std::abs(d);
        out.linf = std::max(out.linf, a);
        sum_sq += d * d;
        sum_abs += a;
        if (d != 0.0) ++changed;
    }
    out.l2 = std::sqrt(sum_sq);
    out.mean_abs = sum_abs / double(x.size());
    out.changed_fraction = double(changed) / double(x.size());
    return out;
}

} // namespace advml
