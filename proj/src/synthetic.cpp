#include "camc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace camc {
namespace {

struct Rgb {
    real r, g, b;
};

Rgb random_colour(std::mt19937_64& rng) {
    std::uniform_real_distribution<real> u(0.0f, 1.0f);
    return {u(rng), u(rng), u(rng)};
}

void put(Tensor& t, std::size_t y, std::size_t x, Rgb c) {
    real* p = t.ptr() + (y * t.dim(1) + x) * 3;
    p[0] = std::clamp(c.r, real(0), real(1));
    p[1] = std::clamp(c.g, real(0), real(1));
    p[2] = std::clamp(c.b, real(0), real(1));
}

Rgb lerp(Rgb a, Rgb b, real t) { return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t}; }

// Linear or radial blend between two colours.
void paint_gradient(Tensor& t, std::mt19937_64& rng) {
    std::uniform_real_distribution<real> u(0.0f, 1.0f);
    const Rgb a = random_colour(rng), b = random_colour(rng);
    const bool radial = u(rng) < 0.4f;
    const real angle = u(rng) * 2.0f * std::numbers::pi_v<real>;
    const real cx = u(rng), cy = u(rng);
    const std::size_t h = t.dim(0), w = t.dim(1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const real fy = (y + 0.5f) / h, fx = (x + 0.5f) / w;
            real s;
            if (radial) {
                s = std::min(real(1), std::hypot(fx - cx, fy - cy) * 1.4f);
            } else {
                s = 0.5f + 0.5f * ((fx - 0.5f) * std::cos(angle) + (fy - 0.5f) * std::sin(angle)) * 1.4f;
            }
            put(t, y, x, lerp(a, b, std::clamp(s, real(0), real(1))));
        }
}

// Stripes, checkerboard or blotchy noise on top of (or instead of) a base.
void paint_texture(Tensor& t, std::mt19937_64& rng, std::size_t y0, std::size_t x0, std::size_t y1,
                   std::size_t x1) {
    std::uniform_real_distribution<real> u(0.0f, 1.0f);
    const Rgb a = random_colour(rng), b = random_colour(rng);
    const int pattern = static_cast<int>(u(rng) * 3.0f);
    const real period = 3.0f + u(rng) * 10.0f;
    const real angle = u(rng) * std::numbers::pi_v<real>;
    const real ca = std::cos(angle), sa = std::sin(angle);
    std::normal_distribution<real> n(0.0f, 0.08f);
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) {
            real s;
            if (pattern == 0) {
                s = 0.5f + 0.5f * std::sin(2.0f * std::numbers::pi_v<real> * (x * ca + y * sa) / period);
            } else if (pattern == 1) {
                const auto cell = static_cast<std::size_t>(period);
                s = ((x / cell) + (y / cell)) % 2 ? 1.0f : 0.0f;
            } else {
                s = 0.5f + 0.25f * std::sin(x / period * 2.1f) * std::cos(y / period * 1.7f) + n(rng) * 2.0f;
            }
            Rgb c = lerp(a, b, std::clamp(s, real(0), real(1)));
            c.r += n(rng);
            c.g += n(rng);
            c.b += n(rng);
            put(t, y, x, c);
        }
}

}  // namespace

Tensor synthetic_image(SyntheticKind kind, std::size_t height, std::size_t width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor t({height, width, 3});
    switch (kind) {
        case SyntheticKind::gradient:
            paint_gradient(t, rng);
            break;
        case SyntheticKind::texture:
            paint_texture(t, rng, 0, 0, height, width);
            break;
        case SyntheticKind::mixed: {
            paint_gradient(t, rng);
            std::uniform_int_distribution<std::size_t> py(0, height / 2), px(0, width / 2);
            const std::size_t y0 = py(rng), x0 = px(rng);
            paint_texture(t, rng, y0, x0, std::min(height, y0 + height / 2), std::min(width, x0 + width / 2));
            break;
        }
    }
    return t;
}

std::vector<Tensor> synthetic_set(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed) {
    static constexpr SyntheticKind kinds[] = {SyntheticKind::gradient, SyntheticKind::texture, SyntheticKind::mixed};
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(synthetic_image(kinds[i % 3], height, width, seed + i));
    return out;
}

Tensor noise_image(std::size_t height, std::size_t width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real> u(0.0f, 1.0f);
    Tensor t({height, width, 3});
    for (auto& v : t.data()) v = u(rng);
    return t;
}

}  // namespace camc
