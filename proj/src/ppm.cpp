#include "advml/ppm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "advml/errors.hpp"

namespace advml {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
    throw IoError(path.string() + ": " + what);
}

// Next whitespace-delimited token, skipping '#' comments to end of line.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(char(ch));
    }
    return tok;
}

} // namespace

TensorF read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open file");
    if (next_token(in) != "P6") fail(path, "not a binary PPM (P6) file");

    long w = 0, h = 0, maxval = 0;
    try {
        w = std::stol(next_token(in));
        h = std::stol(next_token(in));
        maxval = std::stol(next_token(in));
    } catch (const std::exception&) {
        fail(path, "malformed PPM header");
    }
    if (w <= 0 || h <= 0) fail(path, "invalid PPM dimensions");
    if (maxval < 1 || maxval > 255) fail(path, "unsupported PPM maxval " + std::to_string(maxval));
    // The header terminator was the single whitespace next_token consumed.

    const std::size_t npix = std::size_t(w) * std::size_t(h);
    std::vector<unsigned char> raw(npix * 3);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size()) fail(path, "truncated pixel data");

    TensorF out(Shape{3, std::size_t(h), std::size_t(w)});
    const float inv = 1.0f / float(maxval);
    for (std::size_t p = 0; p < npix; ++p)
        for (std::size_t c = 0; c < 3; ++c) out[c * npix + p] = float(raw[p * 3 + c]) * inv;
    return out;
}

void write_ppm(const std::filesystem::path& path, const TensorF& chw) {
    if (chw.rank() != 3 || chw.shape()[0] != 3)
        throw ShapeError("write_ppm expects a [3,H,W] tensor, got " + shape_str(chw.shape()));
    const std::size_t h = chw.shape()[1], w = chw.shape()[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open file for writing");
    out << "P6\n" << w << " " << h << "\n255\n";
    const std::size_t npix = h * w;
    std::vector<unsigned char> raw(npix * 3);
    for (std::size_t p = 0; p < npix; ++p)
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = std::clamp(chw[c * npix + p], 0.0f, 1.0f);
            raw[p * 3 + c] = static_cast<unsigned char>(std::lround(255.0f * v));
        }
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) fail(path, "write failed");
}

} // namespace advml
