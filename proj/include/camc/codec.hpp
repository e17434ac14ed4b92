#pragma once

// Image ↔ coded file.
//
// Coded file layout (integers little-endian):
//   "CAMC"  u8 version  u32 height  u32 width  u16 config id
//   u32 z length + z payload   (range-coded ẑ, raster order H×W×C)
//   u32 y length + y payload   (range-coded residual symbols of ŷ, same order)
//
// The encoder pads the image to a multiple of 16 by mirroring, codes
// ẑ = round(z) under the factorized prior, derives (μ, σ) from ẑ and codes
// r = round(y − μ) clamped to the symbol range; ŷ = r + μ. The decoder
// recomputes (μ, σ) from the decoded ẑ through the same code path.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "camc/model.hpp"
#include "camc/range_coder.hpp"

namespace camc {

inline constexpr std::uint8_t kCodedFileVersion = 1;
inline constexpr std::size_t kCodedHeaderBytes = 4 + 1 + 4 + 4 + 2;

struct CodedFile {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint16_t config_id = 0;
    std::vector<std::uint8_t> z_payload;
    std::vector<std::uint8_t> y_payload;

    std::vector<std::uint8_t> serialize() const;
    // FormatError on wrong magic/version; DecodeError on truncation or trailing bytes.
    static CodedFile parse(std::span<const std::uint8_t> bytes);
};

struct EncodeStats {
    std::size_t height = 0, width = 0;
    std::size_t file_bytes = 0;
    double bpp = 0.0;                 // file_bytes · 8 / (H·W)
    double rate_estimate_bits = 0.0;  // Σ −log2 p over ẑ and ŷ symbols
    double z_rate_bits = 0.0;
    double y_rate_bits = 0.0;
    std::size_t z_symbols = 0, y_symbols = 0;
    std::size_t saturated = 0;  // residuals clamped into the symbol range
};

struct EncodeResult {
    std::vector<std::uint8_t> file;
    Tensor reconstruction;  // encoder-side x̂, H×W×3 clamped to [0, 1]
    EncodeStats stats;
};

// image: H×W×3 in [0, 1]. InputError on empty images.
EncodeResult encode_image(const Tensor& image, Model& model);
// FormatError on magic/version/config mismatch, DecodeError on bad payloads.
Tensor decode_image(std::span<const std::uint8_t> file, Model& model);

// Shared by both sides: entropy parameters and tables for ŷ given ẑ.
struct LatentModel {
    Tensor mu, sigma;                  // latent_h × latent_w × latent_channels
    std::vector<CdfTable> tables;      // one per element, residual alphabet
    std::vector<std::vector<double>> pmfs;
};
LatentModel latent_model(const Tensor& z_hat, Model& model, std::size_t latent_h, std::size_t latent_w);

struct SideModel {
    std::vector<CdfTable> tables;  // one per channel
    std::vector<std::vector<double>> pmfs;
};
SideModel side_model(const Model& model);

// Latent and side-latent extents for an image of the given size.
std::pair<std::size_t, std::size_t> latent_extents(std::size_t height, std::size_t width);
std::pair<std::size_t, std::size_t> side_extents(std::size_t latent_h, std::size_t latent_w);

// File-based wrappers used by the CLI.
EncodeStats encode_file(const std::string& image_path, Model& model, const std::string& out_path);
void decode_file(const std::string& coded_path, Model& model, const std::string& out_path);

}  // namespace camc
