#pragma once

#include <filesystem>

#include "advml/tensor.hpp"

namespace advml {

// Binary PPM (P6), maxval up to 255. Pixels come back as [3,H,W] floats in
// [0,1] (value / maxval); writing quantizes with round(255 * clip(v,0,1)).
TensorF read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const TensorF& chw);

} // namespace advml
