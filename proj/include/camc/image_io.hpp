#pragma once

// Binary PPM (P6) / PGM (P5) with maxval 255.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "camc/tensor.hpp"

namespace camc {

struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 3;  // 3 for PPM, 1 for PGM
    std::vector<std::uint8_t> pixels;  // row-major, interleaved channels
};

// InputError on unreadable files, bad headers, zero extents or short payloads.
Image read_pnm(const std::string& path);
Image parse_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> format_pnm(const Image& image);
void write_pnm(const std::string& path, const Image& image);

// H×W×C floats in [0, 1].
Tensor image_to_tensor(const Image& image);
// Values are clamped to [0, 1] and rounded to the nearest 8-bit level.
Image tensor_to_image(const Tensor& t);

}  // namespace camc
