#include "camc/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "binary_io.hpp"
#include "camc/errors.hpp"

namespace camc {
namespace {

class HeaderParser {
public:
    explicit HeaderParser(std::span<const std::uint8_t> b) : b_(b) {}

    std::string token() {
        skip_space_and_comments();
        std::string t;
        while (pos_ < b_.size() && !std::isspace(b_[pos_])) t.push_back(static_cast<char>(b_[pos_++]));
        if (t.empty()) throw InputError("truncated PNM header");
        return t;
    }
    std::size_t number() {
        const std::string t = token();
        if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
            t.size() > 9)
            throw InputError("bad number '" + t + "' in PNM header");
        return std::stoul(t);
    }
    // Exactly one whitespace byte separates the header from the raster.
    std::size_t raster_start() {
        if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw InputError("malformed PNM header");
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            if (std::isspace(b_[pos_])) {
                ++pos_;
            } else if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace

Image parse_pnm(std::span<const std::uint8_t> bytes) {
    HeaderParser hp(bytes);
    const std::string magic = hp.token();
    Image img;
    if (magic == "P6") img.channels = 3;
    else if (magic == "P5") img.channels = 1;
    else throw InputError("unsupported image format '" + magic + "' (binary PPM/PGM only)");
    img.width = hp.number();
    img.height = hp.number();
    const std::size_t maxval = hp.number();
    if (img.width == 0 || img.height == 0) throw InputError("image has zero extent");
    if (maxval != 255) throw InputError("only 8-bit images (maxval 255) are supported");
    const std::size_t start = hp.raster_start();
    const std::size_t n = img.width * img.height * img.channels;
    if (bytes.size() < start + n) throw InputError("image payload shorter than its header declares");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                      bytes.begin() + static_cast<std::ptrdiff_t>(start + n));
    return img;
}

Image read_pnm(const std::string& path) { return parse_pnm(io::read_file(path)); }

std::vector<std::uint8_t> format_pnm(const Image& image) {
    if (image.channels != 1 && image.channels != 3) throw ContractError("PNM images have 1 or 3 channels");
    if (image.pixels.size() != image.width * image.height * image.channels)
        throw DimensionError("pixel buffer does not match image extents");
    const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width) +
                               " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

void write_pnm(const std::string& path, const Image& image) { io::write_file(path, format_pnm(image)); }

Tensor image_to_tensor(const Image& image) {
    Tensor t({image.height, image.width, image.channels});
    for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = static_cast<real>(image.pixels[i]) / 255.0f;
    return t;
}

Image tensor_to_image(const Tensor& t) {
    if (t.rank() != 3 || (t.dim(2) != 1 && t.dim(2) != 3))
        throw DimensionError("expected an H×W×1 or H×W×3 tensor, got " + shape_str(t.shape()));
    Image img;
    img.height = t.dim(0);
    img.width = t.dim(1);
    img.channels = t.dim(2);
    img.pixels.resize(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const real v = std::isnan(t[i]) ? 0.0f : std::clamp(t[i], real(0), real(1));
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return img;
}

}  // namespace camc
