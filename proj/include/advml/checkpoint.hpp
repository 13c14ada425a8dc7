#pragma once

#include <cstdint>
#include <filesystem>

#include "advml/nn.hpp"

namespace advml {

// Binary model snapshot. Layout:
//   "ADVM" | u32 LE version | u32 LE length + model-spec text |
//   per layer: frozen byte, then each parameter tensor as
//   u32 LE rank, u32 LE dims..., raw float32 LE values.
// The spec text carries the layer chain plus the training seed and epoch
// count as plain lines. All integers and floats are little-endian on every
// platform.
struct Checkpoint {
    ModelF model;
    std::uint64_t seed = 0;
    std::uint32_t epochs = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ModelF& model, std::uint64_t seed,
                     std::uint32_t epochs);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Text form of the layer chain (also embedded in checkpoints).
std::string model_spec_text(const ModelF& model, std::uint64_t seed, std::uint32_t epochs);

} // namespace advml
