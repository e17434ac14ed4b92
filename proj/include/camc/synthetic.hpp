#pragma once

// Procedural RGB test images: smooth gradients, periodic/noisy textures, and
// mixtures of both. Deterministic in the seed.

#include <cstdint>
#include <vector>

#include "camc/tensor.hpp"

namespace camc {

enum class SyntheticKind { gradient, texture, mixed };

// H×W×3 in [0, 1].
Tensor synthetic_image(SyntheticKind kind, std::size_t height, std::size_t width, std::uint64_t seed);

// n images cycling gradient, texture, mixed; image i uses seed + i.
std::vector<Tensor> synthetic_set(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed);

// Uniform i.i.d. noise, H×W×3.
Tensor noise_image(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace camc
