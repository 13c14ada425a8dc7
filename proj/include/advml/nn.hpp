#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "advml/tensor.hpp"

namespace advml {

// ---------------------------------------------------------------------------
// Layer specs

struct Conv2D {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_size = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
};
struct ReLU {};
struct MaxPool2D {
    std::size_t window = 0;
    std::size_t stride = 0; // 0 means "same as window"
};
struct Flatten {};
struct Dense {
    std::size_t in_features = 0;
    std::size_t out_features = 0;
};
struct Dropout {
    double rate = 0.0;
};
struct Softmax {};

using LayerSpec = std::variant<Conv2D, ReLU, MaxPool2D, Flatten, Dense, Dropout, Softmax>;

inline std::string layer_name(const LayerSpec& spec) {
    struct Namer {
        std::string operator()(const Conv2D&) const { return "conv2d"; }
        std::string operator()(const ReLU&) const { return "relu"; }
        std::string operator()(const MaxPool2D&) const { return "maxpool2d"; }
        std::string operator()(const Flatten&) const { return "flatten"; }
        std::string operator()(const Dense&) const { return "dense"; }
        std::string operator()(const Dropout&) const { return "dropout"; }
        std::string operator()(const Softmax&) const { return "softmax"; }
    };
    return std::visit(Namer{}, spec);
}

inline std::size_t pool_stride_of(const MaxPool2D& p) { return p.stride == 0 ? p.window : p.stride; }

// ---------------------------------------------------------------------------
// Model

template <typename Scalar>
struct LayerParams {
    Tensor<Scalar> weight; // Conv2D: [OC,IC,K,K]; Dense: [IF,OF]; else empty
    Tensor<Scalar> bias;   // Conv2D: [OC]; Dense: [OF]; else empty
    std::size_t count() const { return weight.size() + bias.size(); }
};

// Ordered layer sequence with parameters and per-layer freeze flags.
// The constructor type-checks the chain against the per-sample input shape
// and allocates zero parameters; call he_init (or a checkpoint load) after.
template <typename Scalar>
struct Model {
    Shape input_shape;                       // per-sample, e.g. {3,32,32} or {D}
    std::vector<LayerSpec> layers;
    std::vector<LayerParams<Scalar>> params; // one entry per layer
    std::vector<std::uint8_t> frozen;        // one flag per layer
    std::vector<Shape> output_shapes;        // per-sample output of each layer

    Model() = default;
    Model(Shape in_shape, std::vector<LayerSpec> layer_specs);

    std::size_t num_classes() const { return output_shapes.back()[0]; }
};

template <typename Scalar>
Model<Scalar>::Model(Shape in_shape, std::vector<LayerSpec> layer_specs)
    : input_shape(std::move(in_shape)), layers(std::move(layer_specs)) {
    check_shape_valid(input_shape);
    if (layers.empty()) throw ConfigError("model needs at least one layer");

    Shape cur = input_shape;
    params.resize(layers.size());
    frozen.assign(layers.size(), 0);
    output_shapes.reserve(layers.size());

    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& spec = layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + layer_name(spec) + ")";
        if (const auto* c = std::get_if<Conv2D>(&spec)) {
            if (c->in_channels == 0 || c->out_channels == 0 || c->kernel_size == 0 || c->stride == 0)
                throw ConfigError(where + ": dimensions must be positive");
            if (cur.size() != 3)
                throw ShapeError(where + ": expects [C,H,W] input, got " + shape_str(cur));
            if (cur[0] != c->in_channels)
                throw ShapeError(where + ": in_channels " + std::to_string(c->in_channels) +
                                 " does not match input " + shape_str(cur));
            const std::size_t h = cur[1] + 2 * c->padding, w = cur[2] + 2 * c->padding;
            if (h < c->kernel_size || w < c->kernel_size)
                throw ShapeError(where + ": kernel larger than padded input");
            cur = {c->out_channels, (h - c->kernel_size) / c->stride + 1,
                   (w - c->kernel_size) / c->stride + 1};
            params[i].weight = Tensor<Scalar>(
                Shape{c->out_channels, c->in_channels, c->kernel_size, c->kernel_size});
            params[i].bias = Tensor<Scalar>(Shape{c->out_channels});
        } else if (const auto* p = std::get_if<MaxPool2D>(&spec)) {
            if (p->window == 0) throw ConfigError(where + ": window must be positive");
            const std::size_t s = pool_stride_of(*p);
            if (cur.size() != 3)
                throw ShapeError(where + ": expects [C,H,W] input, got " + shape_str(cur));
            if (cur[1] < p->window || cur[2] < p->window)
                throw ShapeError(where + ": window larger than input " + shape_str(cur));
            cur = {cur[0], (cur[1] - p->window) / s + 1, (cur[2] - p->window) / s + 1};
        } else if (std::get_if<Flatten>(&spec)) {
            cur = {shape_numel(cur)};
        } else if (const auto* d = std::get_if<Dense>(&spec)) {
            if (d->in_features == 0 || d->out_features == 0)
                throw ConfigError(where + ": dimensions must be positive");
            if (cur.size() != 1 || cur[0] != d->in_features)
                throw ShapeError(where + ": in_features " + std::to_string(d->in_features) +
                                 " does not match input " + shape_str(cur));
            cur = {d->out_features};
            params[i].weight = Tensor<Scalar>(Shape{d->in_features, d->out_features});
            params[i].bias = Tensor<Scalar>(Shape{d->out_features});
        } else if (const auto* dr = std::get_if<Dropout>(&spec)) {
            if (!(dr->rate >= 0.0 && dr->rate < 1.0))
                throw ConfigError(where + ": rate must be in [0,1)");
        } else if (std::get_if<Softmax>(&spec)) {
            if (cur.size() != 1)
                throw ShapeError(where + ": expects flat input, got " + shape_str(cur));
        }
        // ReLU keeps the shape as-is.
        output_shapes.push_back(cur);
    }
}

// He-normal weights (stddev sqrt(2/fan_in)), zero biases, layer by layer.
template <typename Scalar>
void he_init(Model<Scalar>& model, RngState& rng) {
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (const auto* c = std::get_if<Conv2D>(&model.layers[i])) {
            const double fan_in =
                static_cast<double>(c->in_channels * c->kernel_size * c->kernel_size);
            model.params[i].weight =
                randn<Scalar>(model.params[i].weight.shape(), rng, 0.0, std::sqrt(2.0 / fan_in));
        } else if (const auto* d = std::get_if<Dense>(&model.layers[i])) {
            model.params[i].weight = randn<Scalar>(model.params[i].weight.shape(), rng, 0.0,
                                                   std::sqrt(2.0 / double(d->in_features)));
        }
    }
}

struct ParamCount {
    std::size_t trainable = 0;
    std::size_t non_trainable = 0;
};

template <typename Scalar>
ParamCount param_count(const Model<Scalar>& model) {
    ParamCount out;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const std::size_t n = model.params[i].count();
        if (model.frozen[i])
            out.non_trainable += n;
        else
            out.trainable += n;
    }
    return out;
}

// Dense(->128), ReLU, Dropout(0.25), Dense(->64), ReLU, Dense(->2), Softmax.
inline std::vector<LayerSpec> build_paper_head(std::size_t flatten_dim) {
    if (flatten_dim == 0) throw ConfigError("build_paper_head: flatten_dim must be >= 1");
    return {Dense{flatten_dim, 128}, ReLU{}, Dropout{0.25}, Dense{128, 64},
            ReLU{},                  Dense{64, 2}, Softmax{}};
}

// ---------------------------------------------------------------------------
// Forward

enum class Mode { train, eval };

// Per-layer activations, dropout multipliers and max-pool argmax indices from
// one forward pass. Consumed by exactly one backward pass.
template <typename Scalar>
struct ForwardTrace {
    std::vector<Tensor<Scalar>> layer_inputs;            // input tensor of each layer
    std::vector<Tensor<Scalar>> dropout_masks;           // multiplier, empty unless train-mode dropout
    std::vector<std::vector<std::size_t>> pool_argmax;   // flat source index per pooled element
    Shape batch_shape;
    Mode mode = Mode::eval;
    bool consumed = false;
};

template <typename Scalar>
struct ForwardResult {
    Tensor<Scalar> probs;
    ForwardTrace<Scalar> trace;
};

namespace detail {

// Valid kernel index range [lo,hi) for one spatial axis: kernel extent k,
// input extent `extent`, window origin `origin` (may be negative under
// zero padding).
struct KernelRange {
    std::size_t lo, hi;
};
inline KernelRange kernel_range(std::ptrdiff_t origin, std::size_t extent, std::size_t k) {
    const std::size_t lo = origin < 0 ? std::size_t(-origin) : 0;
    const std::ptrdiff_t hi = std::ptrdiff_t(extent) - origin;
    return {lo, std::size_t(std::clamp<std::ptrdiff_t>(hi, std::ptrdiff_t(lo), std::ptrdiff_t(k)))};
}

template <typename Scalar>
Tensor<Scalar> conv_forward(const Tensor<Scalar>& x, const Conv2D& c, const Tensor<Scalar>& weight,
                            const Tensor<Scalar>& bias) {
    const std::size_t n = x.shape()[0], ic = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const std::size_t k = c.kernel_size, s = c.stride, p = c.padding;
    const std::size_t oc = c.out_channels;
    const std::size_t oh = (h + 2 * p - k) / s + 1, ow = (w + 2 * p - k) / s + 1;
    Tensor<Scalar> y(Shape{n, oc, oh, ow});
    const Scalar* px = x.data();
    const Scalar* pw = weight.data();
    Scalar* py = y.data();
    for (std::size_t in = 0; in < n; ++in) {
        for (std::size_t o = 0; o < oc; ++o) {
            const Scalar b = bias[o];
            for (std::size_t y0 = 0; y0 < oh; ++y0) {
                const std::ptrdiff_t ih0 = std::ptrdiff_t(y0 * s) - std::ptrdiff_t(p);
                const auto [kh_lo, kh_hi] = kernel_range(ih0, h, k);
                for (std::size_t x0 = 0; x0 < ow; ++x0) {
                    const std::ptrdiff_t iw0 = std::ptrdiff_t(x0 * s) - std::ptrdiff_t(p);
                    const auto [kw_lo, kw_hi] = kernel_range(iw0, w, k);
                    const std::size_t kw_n = kw_hi - kw_lo;
                    Scalar acc = b;
                    // Accumulation order: channel, then kernel row, then
                    // kernel column, left to right.
                    for (std::size_t i = 0; i < ic; ++i) {
                        const Scalar* xplane = px + ((in * ic + i) * h) * w;
                        const Scalar* wplane = pw + ((o * ic + i) * k) * k;
                        for (std::size_t kh = kh_lo; kh < kh_hi; ++kh) {
                            const std::size_t ih = std::size_t(ih0 + std::ptrdiff_t(kh));
                            const Scalar* xr = xplane + ih * w + std::size_t(iw0) + kw_lo;
                            const Scalar* wr = wplane + kh * k + kw_lo;
                            for (std::size_t kw = 0; kw < kw_n; ++kw) acc += wr[kw] * xr[kw];
                        }
                    }
                    py[((in * oc + o) * oh + y0) * ow + x0] = acc;
                }
            }
        }
    }
    return y;
}

template <typename Scalar>
void conv_backward(const Tensor<Scalar>& x, const Conv2D& c, const Tensor<Scalar>& weight,
                   const Tensor<Scalar>& g, bool want_param_grads, Tensor<Scalar>& dweight,
                   Tensor<Scalar>& dbias, Tensor<Scalar>& dx) {
    const std::size_t n = x.shape()[0], ic = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const std::size_t k = c.kernel_size, s = c.stride, p = c.padding;
    const std::size_t oc = c.out_channels;
    const std::size_t oh = g.shape()[2], ow = g.shape()[3];
    dx = Tensor<Scalar>(x.shape());
    if (want_param_grads) {
        dweight = Tensor<Scalar>(weight.shape());
        dbias = Tensor<Scalar>(Shape{oc});
    }
    const Scalar* px = x.data();
    const Scalar* pw = weight.data();
    const Scalar* pg = g.data();
    Scalar* pdx = dx.data();
    for (std::size_t in = 0; in < n; ++in) {
        for (std::size_t o = 0; o < oc; ++o) {
            for (std::size_t y0 = 0; y0 < oh; ++y0) {
                const std::ptrdiff_t ih0 = std::ptrdiff_t(y0 * s) - std::ptrdiff_t(p);
                const auto [kh_lo, kh_hi] = kernel_range(ih0, h, k);
                for (std::size_t x0 = 0; x0 < ow; ++x0) {
                    const Scalar gv = pg[((in * oc + o) * oh + y0) * ow + x0];
                    if (gv == Scalar(0)) continue; // adds nothing anywhere
                    const std::ptrdiff_t iw0 = std::ptrdiff_t(x0 * s) - std::ptrdiff_t(p);
                    const auto [kw_lo, kw_hi] = kernel_range(iw0, w, k);
                    const std::size_t kw_n = kw_hi - kw_lo;
                    if (want_param_grads) dbias[o] += gv;
                    for (std::size_t i = 0; i < ic; ++i) {
                        const std::size_t xbase = ((in * ic + i) * h) * w;
                        const std::size_t wbase = ((o * ic + i) * k) * k;
                        for (std::size_t kh = kh_lo; kh < kh_hi; ++kh) {
                            const std::size_t ih = std::size_t(ih0 + std::ptrdiff_t(kh));
                            const std::size_t xoff = xbase + ih * w + std::size_t(iw0) + kw_lo;
                            const std::size_t woff = wbase + kh * k + kw_lo;
                            if (want_param_grads) {
                                for (std::size_t kw = 0; kw < kw_n; ++kw) {
                                    dweight[woff + kw] += gv * px[xoff + kw];
                                    pdx[xoff + kw] += gv * pw[woff + kw];
                                }
                            } else {
                                for (std::size_t kw = 0; kw < kw_n; ++kw)
                                    pdx[xoff + kw] += gv * pw[woff + kw];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename Scalar>
Tensor<Scalar> transpose2d(const Tensor<Scalar>& a) {
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    Tensor<Scalar> out(Shape{n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

// Same summation order as the naive i,j,k matmul (single accumulator per
// output, k ascending) but with row-streamed memory access.
template <typename Scalar>
Tensor<Scalar> matmul_fast(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k)
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<Scalar> out(Shape{m, n});
    const Scalar* pa = a.data();
    const Scalar* pb = b.data();
    Scalar* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        Scalar* orow = po + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Scalar av = pa[i * k + p];
            const Scalar* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    out.validate_finite("matmul");
    return out;
}

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& logits) {
    const std::size_t n = logits.shape()[0], k = logits.shape()[1];
    Tensor<Scalar> out(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        Scalar m = logits[i * k];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits[i * k + j]);
        Scalar sum = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const Scalar e = std::exp(logits[i * k + j] - m);
            out[i * k + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= sum;
    }
    return out;
}

} // namespace detail

// Forward pass over a [N, ...] batch. Train mode samples dropout masks from
// rng; eval mode is deterministic and leaves rng untouched (it may be null).
template <typename Scalar>
ForwardResult<Scalar> forward(const Model<Scalar>& model, const Tensor<Scalar>& batch, Mode mode,
                              RngState* rng = nullptr) {
    if (batch.rank() != model.input_shape.size() + 1)
        throw ShapeError("forward: batch rank " + std::to_string(batch.rank()) +
                         " does not match model input " + shape_str(model.input_shape));
    for (std::size_t d = 0; d < model.input_shape.size(); ++d)
        if (batch.shape()[d + 1] != model.input_shape[d])
            throw ShapeError("forward: batch shape " + shape_str(batch.shape()) +
                             " does not match model input " + shape_str(model.input_shape));
    const std::size_t n = batch.shape()[0];

    ForwardTrace<Scalar> trace;
    trace.batch_shape = batch.shape();
    trace.mode = mode;
    trace.layer_inputs.resize(model.layers.size());
    trace.dropout_masks.resize(model.layers.size());
    trace.pool_argmax.resize(model.layers.size());

    Tensor<Scalar> cur = batch;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        trace.layer_inputs[li] = cur;
        const LayerSpec& spec = model.layers[li];
        if (const auto* c = std::get_if<Conv2D>(&spec)) {
            cur = detail::conv_forward(cur, *c, model.params[li].weight, model.params[li].bias);
        } else if (std::get_if<ReLU>(&spec)) {
            Tensor<Scalar> y(cur.shape());
            for (std::size_t i = 0; i < cur.size(); ++i)
                y[i] = cur[i] > Scalar(0) ? cur[i] : Scalar(0);
            cur = std::move(y);
        } else if (const auto* p = std::get_if<MaxPool2D>(&spec)) {
            const std::size_t s = pool_stride_of(*p), win = p->window;
            const std::size_t ch = cur.shape()[1], h = cur.shape()[2], w = cur.shape()[3];
            const std::size_t oh = (h - win) / s + 1, ow = (w - win) / s + 1;
            Tensor<Scalar> y(Shape{n, ch, oh, ow});
            std::vector<std::size_t>& amax = trace.pool_argmax[li];
            amax.resize(y.size());
            for (std::size_t in = 0; in < n; ++in)
                for (std::size_t ci = 0; ci < ch; ++ci) {
                    const std::size_t plane = (in * ch + ci) * h * w;
                    for (std::size_t y0 = 0; y0 < oh; ++y0)
                        for (std::size_t x0 = 0; x0 < ow; ++x0) {
                            std::size_t best = plane + (y0 * s) * w + (x0 * s);
                            Scalar bv = cur[best];
                            for (std::size_t dy = 0; dy < win; ++dy)
                                for (std::size_t dx2 = 0; dx2 < win; ++dx2) {
                                    const std::size_t idx = plane + (y0 * s + dy) * w + (x0 * s + dx2);
                                    if (cur[idx] > bv) { // first max wins on ties
                                        bv = cur[idx];
                                        best = idx;
                                    }
                                }
                            const std::size_t o = ((in * ch + ci) * oh + y0) * ow + x0;
                            y[o] = bv;
                            amax[o] = best;
                        }
                }
            cur = std::move(y);
        } else if (std::get_if<Flatten>(&spec)) {
            cur = cur.reshaped(Shape{n, cur.size() / n});
        } else if (const auto* d = std::get_if<Dense>(&spec)) {
            Tensor<Scalar> y = detail::matmul_fast(cur, model.params[li].weight);
            const Tensor<Scalar>& b = model.params[li].bias;
            for (std::size_t in = 0; in < n; ++in)
                for (std::size_t j = 0; j < d->out_features; ++j) y[in * d->out_features + j] += b[j];
            cur = std::move(y);
        } else if (const auto* dr = std::get_if<Dropout>(&spec)) {
            if (mode == Mode::train && dr->rate > 0.0) {
                if (rng == nullptr)
                    throw ConfigError("forward: train-mode dropout needs an RngState");
                const Scalar keep_scale = Scalar(1.0 / (1.0 - dr->rate));
                Tensor<Scalar> mask(cur.shape());
                for (std::size_t i = 0; i < mask.size(); ++i)
                    mask[i] = rng->next_uniform() >= dr->rate ? keep_scale : Scalar(0);
                trace.dropout_masks[li] = mask;
                cur = mul_elementwise(cur, mask);
            }
            // eval mode (or rate 0) is the identity, no RNG consumed
        } else if (std::get_if<Softmax>(&spec)) {
            cur = detail::softmax_rows(cur);
        }
    }
    cur.validate_finite("forward output");
    return ForwardResult<Scalar>{std::move(cur), std::move(trace)};
}

// Eval-mode forward that discards the trace.
template <typename Scalar>
Tensor<Scalar> predict(const Model<Scalar>& model, const Tensor<Scalar>& batch) {
    return forward(model, batch, Mode::eval).probs;
}

// ---------------------------------------------------------------------------
// Loss

// Mean over the batch of -sum_k y_k log(max(p_k, 1e-12)), accumulated left to
// right in double.
template <typename Scalar>
double cross_entropy(const Tensor<Scalar>& probs, const Tensor<Scalar>& onehot) {
    detail::check_same_shape(probs, onehot, "cross_entropy");
    if (probs.rank() != 2) throw ShapeError("cross_entropy expects [N,K] tensors");
    constexpr double kLogFloor = 1e-12;
    const std::size_t n = probs.shape()[0], k = probs.shape()[1];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double y = double(onehot[i * k + j]);
            if (y != 0.0) row -= y * std::log(std::max(double(probs[i * k + j]), kLogFloor));
        }
        total += row;
    }
    const double loss = total / double(n);
    if (!std::isfinite(loss)) throw NumericError("non-finite cross-entropy loss");
    return loss;
}

// ---------------------------------------------------------------------------
// Backward

template <typename Scalar>
struct Gradients {
    std::vector<LayerParams<Scalar>> params; // same structure as model.params
    Tensor<Scalar> input;                    // d loss / d batch
};

// Reverse pass for a softmax-terminated model trained with cross-entropy:
// the top gradient is the fused (probs - onehot)/N. Produces gradients for
// every unfrozen parameter and for the input batch. Consumes the trace.
template <typename Scalar>
Gradients<Scalar> backward(const Model<Scalar>& model, ForwardTrace<Scalar>& trace,
                           const Tensor<Scalar>& probs, const Tensor<Scalar>& onehot) {
    if (trace.consumed) throw ConfigError("backward: trace already consumed");
    if (trace.layer_inputs.size() != model.layers.size())
        throw ConfigError("backward: trace does not match this model");
    detail::check_same_shape(probs, onehot, "backward");
    if (probs.shape()[0] != trace.batch_shape[0])
        throw ConfigError("backward: probs do not match the traced batch");
    if (!std::holds_alternative<Softmax>(model.layers.back()))
        throw ConfigError("backward: model must end with softmax");
    trace.consumed = true;

    const std::size_t n = probs.shape()[0], k = probs.shape()[1];
    Gradients<Scalar> grads;
    grads.params.resize(model.layers.size());

    // Fused softmax + cross-entropy gradient w.r.t. the softmax input.
    Tensor<Scalar> g(probs.shape());
    const Scalar inv_n = Scalar(1) / Scalar(n);
    for (std::size_t i = 0; i < n * k; ++i) g[i] = (probs[i] - onehot[i]) * inv_n;

    for (std::size_t li = model.layers.size() - 1; li-- > 0;) {
        const LayerSpec& spec = model.layers[li];
        const Tensor<Scalar>& x = trace.layer_inputs[li];
        const bool want_params = !model.frozen[li];
        if (const auto* c = std::get_if<Conv2D>(&spec)) {
            Tensor<Scalar> dx;
            detail::conv_backward(x, *c, model.params[li].weight, g, want_params,
                                  grads.params[li].weight, grads.params[li].bias, dx);
            if (!want_params) {
                grads.params[li].weight = Tensor<Scalar>(model.params[li].weight.shape());
                grads.params[li].bias = Tensor<Scalar>(model.params[li].bias.shape());
            }
            g = std::move(dx);
        } else if (std::get_if<ReLU>(&spec)) {
            Tensor<Scalar> dx(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i)
                dx[i] = x[i] > Scalar(0) ? g[i] : Scalar(0);
            g = std::move(dx);
        } else if (std::get_if<MaxPool2D>(&spec)) {
            Tensor<Scalar> dx(x.shape());
            const std::vector<std::size_t>& amax = trace.pool_argmax[li];
            for (std::size_t i = 0; i < g.size(); ++i) dx[amax[i]] += g[i];
            g = std::move(dx);
        } else if (std::get_if<Flatten>(&spec)) {
            g = g.reshaped(x.shape());
        } else if (std::get_if<Dense>(&spec)) {
            grads.params[li].weight = want_params
                                          ? detail::matmul_fast(detail::transpose2d(x), g)
                                          : Tensor<Scalar>(model.params[li].weight.shape());
            Tensor<Scalar> db(model.params[li].bias.shape());
            if (want_params) {
                const std::size_t of = db.size();
                for (std::size_t in = 0; in < g.shape()[0]; ++in)
                    for (std::size_t j = 0; j < of; ++j) db[j] += g[in * of + j];
            }
            grads.params[li].bias = std::move(db);
            g = detail::matmul_fast(g, detail::transpose2d(model.params[li].weight));
        } else if (const auto* dr = std::get_if<Dropout>(&spec)) {
            if (!trace.dropout_masks[li].empty())
                g = mul_elementwise(g, trace.dropout_masks[li]);
            (void)dr;
        } else if (std::get_if<Softmax>(&spec)) {
            throw ConfigError("backward: softmax supported only as the final layer");
        }
    }
    g.validate_finite("input gradient");
    grads.input = std::move(g);
    return grads;
}

using ModelF = Model<float>;
using ModelD = Model<double>;

} // namespace advml
