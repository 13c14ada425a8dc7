#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "advml/ppm.hpp"
#include "advml/tensor.hpp"

namespace advml {

template <typename Scalar>
struct LabeledImage {
    Tensor<Scalar> pixels; // [C,H,W], values in [0,1]
    std::size_t label = 0;
};

// Labeled images plus the class-name table. class_names are sorted
// lexicographically, which fixes the label <-> index mapping.
template <typename Scalar>
struct Dataset {
    std::vector<LabeledImage<Scalar>> images;
    std::vector<std::string> class_names;

    std::size_t size() const { return images.size(); }

    std::vector<std::size_t> labels() const {
        std::vector<std::size_t> out(images.size());
        for (std::size_t i = 0; i < images.size(); ++i) out[i] = images[i].label;
        return out;
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> out(class_names.size(), 0);
        for (const auto& im : images) ++out[im.label];
        return out;
    }
};

struct AugmentConfig {
    double rotation_range_degrees = 15.0;
};

// Row i is the one-hot encoding of labels[i].
template <typename Scalar>
Tensor<Scalar> one_hot(const std::vector<std::size_t>& labels, std::size_t n_classes) {
    if (n_classes == 0) throw ConfigError("one_hot: need at least one class");
    Tensor<Scalar> out(Shape{labels.size(), n_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes)
            throw ConfigError("one_hot: label " + std::to_string(labels[i]) + " out of range for " +
                              std::to_string(n_classes) + " classes");
        out.at(i, labels[i]) = Scalar(1);
    }
    return out;
}

namespace detail {

inline void fisher_yates(std::vector<std::size_t>& v, RngState& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = std::size_t(rng.next_uniform() * double(i)); // j in [0, i)
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace detail

// Per class: round(n_c * fraction) images go to train, the rest to test.
// Which images go where is a seeded within-class shuffle.
template <typename Scalar>
std::pair<Dataset<Scalar>, Dataset<Scalar>> stratified_split(const Dataset<Scalar>& dataset,
                                                             double train_fraction, RngState& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("stratified_split: train_fraction must be in (0,1)");
    Dataset<Scalar> train{{}, dataset.class_names};
    Dataset<Scalar> test{{}, dataset.class_names};
    for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < dataset.images.size(); ++i)
            if (dataset.images[i].label == c) idx.push_back(i);
        const auto n_train = std::size_t(std::llround(double(idx.size()) * train_fraction));
        if (n_train == 0 || n_train == idx.size())
            throw ConfigError("stratified_split: class '" + dataset.class_names[c] +
                              "' would leave one side empty");
        detail::fisher_yates(idx, rng);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? train : test).images.push_back(dataset.images[idx[i]]);
    }
    return {std::move(train), std::move(test)};
}

// Rotation about the image centre, bilinear interpolation, zero fill outside
// the frame, output clipped to [0,1]. Positive angles turn counter-clockwise.
// angle 0 is a bit-exact identity.
template <typename Scalar>
Tensor<Scalar> rotate_chw(const Tensor<Scalar>& pixels, double angle_degrees) {
    if (!(std::abs(angle_degrees) <= 180.0))
        throw ConfigError("rotate: |angle| must be <= 180 degrees");
    if (pixels.rank() != 3) throw ShapeError("rotate expects a [C,H,W] tensor");
    if (angle_degrees == 0.0) return pixels;

    const std::size_t c = pixels.shape()[0], h = pixels.shape()[1], w = pixels.shape()[2];
    const double rad = angle_degrees * kPi / 180.0;
    const double ct = std::cos(rad), st = std::sin(rad);
    const double cx = (double(w) - 1.0) / 2.0, cy = (double(h) - 1.0) / 2.0;

    Tensor<Scalar> out(pixels.shape());
    for (std::size_t ci = 0; ci < c; ++ci) {
        const Scalar* src = pixels.data() + ci * h * w;
        Scalar* dst = out.data() + ci * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double dx = double(x) - cx, dy = double(y) - cy;
                const double sx = ct * dx + st * dy + cx;
                const double sy = -st * dx + ct * dy + cy;
                const double fx0 = std::floor(sx), fy0 = std::floor(sy);
                const long x0 = long(fx0), y0 = long(fy0);
                const double ax = sx - fx0, ay = sy - fy0;
                auto pick = [&](long yy, long xx) -> double {
                    if (yy < 0 || xx < 0 || yy >= long(h) || xx >= long(w)) return 0.0;
                    return double(src[std::size_t(yy) * w + std::size_t(xx)]);
                };
                const double v = (1.0 - ay) * ((1.0 - ax) * pick(y0, x0) + ax * pick(y0, x0 + 1)) +
                                 ay * ((1.0 - ax) * pick(y0 + 1, x0) + ax * pick(y0 + 1, x0 + 1));
                dst[y * w + x] = Scalar(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

template <typename Scalar>
LabeledImage<Scalar> rotate(const LabeledImage<Scalar>& image, double angle_degrees) {
    return {rotate_chw(image.pixels, angle_degrees), image.label};
}

// Bilinear resize with half-pixel sample centres and clamped borders.
// Identity (bit-exact) when the size already matches.
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& pixels, std::size_t out_h, std::size_t out_w) {
    if (pixels.rank() != 3) throw ShapeError("resize expects a [C,H,W] tensor");
    if (out_h == 0 || out_w == 0) throw ConfigError("resize: target size must be positive");
    const std::size_t c = pixels.shape()[0], h = pixels.shape()[1], w = pixels.shape()[2];
    if (out_h == h && out_w == w) return pixels;

    Tensor<Scalar> out(Shape{c, out_h, out_w});
    const double sy = double(h) / double(out_h), sx = double(w) / double(out_w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const Scalar* src = pixels.data() + ci * h * w;
        Scalar* dst = out.data() + ci * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const double fy = std::clamp((double(y) + 0.5) * sy - 0.5, 0.0, double(h) - 1.0);
            const std::size_t y0 = std::size_t(fy);
            const std::size_t y1 = std::min(y0 + 1, h - 1);
            const double ay = fy - double(y0);
            for (std::size_t x = 0; x < out_w; ++x) {
                const double fx = std::clamp((double(x) + 0.5) * sx - 0.5, 0.0, double(w) - 1.0);
                const std::size_t x0 = std::size_t(fx);
                const std::size_t x1 = std::min(x0 + 1, w - 1);
                const double ax = fx - double(x0);
                const double v =
                    (1.0 - ay) * ((1.0 - ax) * src[y0 * w + x0] + ax * src[y0 * w + x1]) +
                    ay * ((1.0 - ax) * src[y1 * w + x0] + ax * src[y1 * w + x1]);
                dst[y * out_w + x] = Scalar(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

// Copy sample n out of a [N,C,H,W] batch.
template <typename Scalar>
Tensor<Scalar> image_at(const Tensor<Scalar>& batch, std::size_t n) {
    const Shape& s = batch.shape();
    Tensor<Scalar> out(Shape(s.begin() + 1, s.end()));
    const std::size_t stride = out.size();
    for (std::size_t i = 0; i < stride; ++i) out[i] = batch[n * stride + i];
    return out;
}

// Each image rotated by an independent angle ~ Uniform[-range, +range].
// Consumes exactly one uniform per image, in batch order.
template <typename Scalar>
Tensor<Scalar> augment_batch(const Tensor<Scalar>& batch, const AugmentConfig& config,
                             RngState& rng) {
    if (config.rotation_range_degrees < 0.0)
        throw ConfigError("augment: rotation range must be >= 0");
    if (batch.rank() != 4) throw ShapeError("augment expects a [N,C,H,W] batch");
    Tensor<Scalar> out(batch.shape());
    const std::size_t n = batch.shape()[0];
    const std::size_t stride = batch.size() / n;
    for (std::size_t i = 0; i < n; ++i) {
        const double angle = (2.0 * rng.next_uniform() - 1.0) * config.rotation_range_degrees;
        Tensor<Scalar> rotated = rotate_chw(image_at(batch, i), angle);
        for (std::size_t j = 0; j < stride; ++j) out[i * stride + j] = rotated[j];
    }
    return out;
}

// Two synthetic RGB classes on a 0.4 background: "blob" is a filled Gaussian
// disc, "ring" a thin annulus, both with jittered centre and radius, plus
// per-pixel Gaussian noise (stddev 0.05), clipped to [0,1]. Deliberately
// separable by a radial statistic so a desk-scale model trains in minutes.
template <typename Scalar>
Dataset<Scalar> synthesize(std::size_t n_per_class, std::size_t size, RngState& rng) {
    if (n_per_class == 0) throw ConfigError("synthesize: n_per_class must be >= 1");
    if (size < 8) throw ConfigError("synthesize: size must be >= 8");
    Dataset<Scalar> out{{}, {"blob", "ring"}};
    out.images.reserve(2 * n_per_class);
    const double s = double(size);
    for (std::size_t cls = 0; cls < 2; ++cls) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const double cx = s / 2.0 + (rng.next_uniform() - 0.5) * 0.1 * s;
            const double cy = s / 2.0 + (rng.next_uniform() - 0.5) * 0.1 * s;
            const double u = rng.next_uniform();
            Tensor<Scalar> img(Shape{3, size, size});
            for (std::size_t c = 0; c < 3; ++c) {
                for (std::size_t y = 0; y < size; ++y) {
                    for (std::size_t x = 0; x < size; ++x) {
                        const double d = std::hypot(double(x) - cx, double(y) - cy);
                        double base;
                        if (cls == 0) {
                            const double r = (0.22 + 0.10 * u) * s;
                            const double sigma = r / 1.5;
                            base = 0.4 + 0.28 * std::exp(-(d * d) / (2.0 * sigma * sigma));
                        } else {
                            const double r = (0.28 + 0.10 * u) * s;
                            const double w = 0.05 * s;
                            base = 0.4 + 0.28 * std::exp(-((d - r) * (d - r)) / (2.0 * w * w));
                        }
                        const double v = base + 0.05 * rng.next_gaussian();
                        img[(c * size + y) * size + x] = Scalar(std::clamp(v, 0.0, 1.0));
                    }
                }
            }
            out.images.push_back({std::move(img), cls});
        }
    }
    return out;
}

// Load a <root>/<class_name>/*.ppm tree. Class order and per-class file
// order are both sorted by name, so the resulting dataset is identical on
// every platform. Images are resized to target_size x target_size.
template <typename Scalar>
Dataset<Scalar> load_directory(const std::filesystem::path& root, std::size_t target_size) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw IoError(root.string() + ": not a directory");

    std::vector<std::string> class_names;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && entry.path().filename().string().front() != '.')
            class_names.push_back(entry.path().filename().string());
    std::sort(class_names.begin(), class_names.end());
    if (class_names.empty()) throw IoError(root.string() + ": no class directories found");

    Dataset<Scalar> out{{}, class_names};
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(root / class_names[c]))
            if (entry.is_regular_file() && entry.path().extension() == ".ppm")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw IoError("class directory '" + class_names[c] + "' contains no .ppm images");
        for (const fs::path& f : files) {
            const TensorF img = read_ppm(f); // throws IoError naming the file
            Tensor<Scalar> resized;
            if constexpr (std::is_same_v<Scalar, float>) {
                resized = resize_bilinear(img, target_size, target_size);
            } else {
                Tensor<Scalar> cast(img.shape());
                for (std::size_t i = 0; i < img.size(); ++i) cast[i] = Scalar(img[i]);
                resized = resize_bilinear(cast, target_size, target_size);
            }
            out.images.push_back({std::move(resized), c});
        }
    }
    return out;
}

// Gather dataset images at `indices` into a [n,C,H,W] batch plus labels.
template <typename Scalar>
std::pair<Tensor<Scalar>, std::vector<std::size_t>> make_batch(
    const Dataset<Scalar>& dataset, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ConfigError("make_batch: empty index list");
    const Shape& img_shape = dataset.images[indices[0]].pixels.shape();
    Shape batch_shape{indices.size()};
    batch_shape.insert(batch_shape.end(), img_shape.begin(), img_shape.end());
    Tensor<Scalar> batch(batch_shape);
    std::vector<std::size_t> labels(indices.size());
    const std::size_t stride = shape_numel(img_shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const LabeledImage<Scalar>& im = dataset.images[indices[i]];
        if (im.pixels.shape() != img_shape)
            throw ShapeError("make_batch: images have differing shapes");
        for (std::size_t j = 0; j < stride; ++j) batch[i * stride + j] = im.pixels[j];
        labels[i] = im.label;
    }
    return {std::move(batch), std::move(labels)};
}

using DatasetF = Dataset<float>;

} // namespace advml
