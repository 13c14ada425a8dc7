#include "advml/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace advml {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'V', 'M'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(path.string() + ": truncated file");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

float get_f32(std::istream& in, const std::filesystem::path& path) {
    return std::bit_cast<float>(get_u32(in, path));
}

void put_tensor(std::ostream& out, const TensorF& t) {
    put_u32(out, std::uint32_t(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, std::uint32_t(d));
    for (std::size_t i = 0; i < t.size(); ++i) put_f32(out, t[i]);
}

TensorF get_tensor(std::istream& in, const std::filesystem::path& path) {
    const std::uint32_t rank = get_u32(in, path);
    if (rank == 0 || rank > 8) throw IoError(path.string() + ": corrupt tensor header");
    Shape shape(rank);
    for (auto& d : shape) d = get_u32(in, path);
    TensorF t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f32(in, path);
    return t;
}

} // namespace

std::string model_spec_text(const ModelF& model, std::uint64_t seed, std::uint32_t epochs) {
    std::ostringstream os;
    os << "seed " << seed << "\n";
    os << "epochs " << epochs << "\n";
    os << "input";
    for (std::size_t d : model.input_shape) os << " " << d;
    os << "\n";
    for (const LayerSpec& spec : model.layers) {
        if (const auto* c = std::get_if<Conv2D>(&spec)) {
            os << "conv2d " << c->in_channels << " " << c->out_channels << " " << c->kernel_size
               << " " << c->stride << " " << c->padding << "\n";
        } else if (std::get_if<ReLU>(&spec)) {
            os << "relu\n";
        } else if (const auto* p = std::get_if<MaxPool2D>(&spec)) {
            os << "maxpool2d " << p->window << " " << pool_stride_of(*p) << "\n";
        } else if (std::get_if<Flatten>(&spec)) {
            os << "flatten\n";
        } else if (const auto* d = std::get_if<Dense>(&spec)) {
            os << "dense " << d->in_features << " " << d->out_features << "\n";
        } else if (const auto* dr = std::get_if<Dropout>(&spec)) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "dropout %.17g\n", dr->rate);
            os << buf;
        } else {
            os << "softmax\n";
        }
    }
    return os.str();
}

namespace {

struct ParsedSpec {
    Shape input_shape;
    std::vector<LayerSpec> layers;
    std::uint64_t seed = 0;
    std::uint32_t epochs = 0;
};

ParsedSpec parse_spec_text(const std::string& text, const std::filesystem::path& path) {
    ParsedSpec out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "seed") {
            ls >> out.seed;
        } else if (kind == "epochs") {
            ls >> out.epochs;
        } else if (kind == "input") {
            std::size_t d;
            while (ls >> d) out.input_shape.push_back(d);
        } else if (kind == "conv2d") {
            Conv2D c;
            ls >> c.in_channels >> c.out_channels >> c.kernel_size >> c.stride >> c.padding;
            out.layers.emplace_back(c);
        } else if (kind == "relu") {
            out.layers.emplace_back(ReLU{});
        } else if (kind == "maxpool2d") {
            MaxPool2D p;
            ls >> p.window >> p.stride;
            out.layers.emplace_back(p);
        } else if (kind == "flatten") {
            out.layers.emplace_back(Flatten{});
        } else if (kind == "dense") {
            Dense d;
            ls >> d.in_features >> d.out_features;
            out.layers.emplace_back(d);
        } else if (kind == "dropout") {
            Dropout dr;
            ls >> dr.rate;
            out.layers.emplace_back(dr);
        } else if (kind == "softmax") {
            out.layers.emplace_back(Softmax{});
        } else {
            throw IoError(path.string() + ": unknown layer '" + kind + "' in model spec");
        }
        if (ls.fail() && kind != "input") throw IoError(path.string() + ": malformed model spec line");
    }
    if (out.input_shape.empty()) throw IoError(path.string() + ": model spec missing input shape");
    return out;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelF& model, std::uint64_t seed,
                     std::uint32_t epochs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.write(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    const std::string spec = model_spec_text(model, seed, epochs);
    put_u32(out, std::uint32_t(spec.size()));
    out.write(spec.data(), std::streamsize(spec.size()));
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const unsigned char frozen = model.frozen[i] ? 1 : 0;
        out.write(reinterpret_cast<const char*>(&frozen), 1);
        if (!model.params[i].weight.empty()) {
            put_tensor(out, model.params[i].weight);
            put_tensor(out, model.params[i].bias);
        }
    }
    if (!out) throw IoError(path.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open checkpoint");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError(path.string() + ": bad checkpoint magic");
    const std::uint32_t version = get_u32(in, path);
    if (version != kCheckpointVersion)
        throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t spec_len = get_u32(in, path);
    std::string spec(spec_len, '\0');
    if (!in.read(spec.data(), spec_len)) throw IoError(path.string() + ": truncated file");
    const ParsedSpec parsed = parse_spec_text(spec, path);

    Checkpoint cp;
    cp.model = ModelF(parsed.input_shape, parsed.layers);
    cp.seed = parsed.seed;
    cp.epochs = parsed.epochs;
    for (std::size_t i = 0; i < cp.model.layers.size(); ++i) {
        char frozen = 0;
        if (!in.read(&frozen, 1)) throw IoError(path.string() + ": truncated file");
        cp.model.frozen[i] = frozen ? 1 : 0;
        if (!cp.model.params[i].weight.empty()) {
            TensorF w = get_tensor(in, path);
            TensorF b = get_tensor(in, path);
            if (w.shape() != cp.model.params[i].weight.shape() ||
                b.shape() != cp.model.params[i].bias.shape())
                throw IoError(path.string() + ": parameter shapes do not match the model spec");
            cp.model.params[i].weight = std::move(w);
            cp.model.params[i].bias = std::move(b);
        }
    }
    return cp;
}

} // namespace advml
