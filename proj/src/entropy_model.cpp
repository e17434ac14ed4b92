#include "camc/entropy_model.hpp"

#include <algorithm>
#include <cmath>

#include "camc/errors.hpp"

namespace camc {

QuantMode parse_quant_mode(const std::string& name) {
    if (name == "round") return QuantMode::round;
    if (name == "noise") return QuantMode::noise;
    if (name == "ste") return QuantMode::ste;
    throw ConfigError("unknown quantization mode '" + name + "' (expected round, noise or ste)");
}

namespace {

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (a != b) throw DimensionError(std::string(op) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

Tensor uniform_noise(const Shape& shape, std::mt19937_64* rng) {
    if (!rng) throw ContractError("noise quantization needs a random generator");
    std::uniform_real_distribution<real> u(-0.5f, 0.5f);
    Tensor t(shape);
    for (auto& v : t.data()) v = u(*rng);
    return t;
}

}  // namespace

Tensor quantize(const Tensor& y, const Tensor& mu, QuantMode mode, std::mt19937_64* rng) {
    require_same(y.shape(), mu.shape(), "quantize");
    Tensor out(y.shape());
    if (mode == QuantMode::noise) {
        Tensor n = uniform_noise(y.shape(), rng);
        for (std::size_t i = 0; i < y.numel(); ++i) out[i] = y[i] + n[i];
        return out;
    }
    for (std::size_t i = 0; i < y.numel(); ++i) out[i] = std::round(y[i] - mu[i]) + mu[i];
    return out;
}

ad::Var quantize(ad::Var y, ad::Var mu, QuantMode mode, std::mt19937_64* rng) {
    require_same(y.shape(), mu.shape(), "quantize");
    switch (mode) {
        case QuantMode::noise:
            return ad::add(y, y.tape().constant(uniform_noise(y.shape(), rng)));
        case QuantMode::ste:
        case QuantMode::round: {
            // μ carries no gradient through the rounding; ste passes dŷ/dy = 1.
            ad::Var m = ad::stop_gradient(mu);
            ad::Var q = ad::add(ad::round_ste(ad::sub(y, m)), m);
            return mode == QuantMode::ste ? q : ad::stop_gradient(q);
        }
    }
    throw ContractError("unreachable quantization mode");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double gaussian_pmf(int r, double sigma) {
    // Evaluated on the side where the CDF difference does not cancel.
    const double v = std::abs(static_cast<double>(r));
    return normal_cdf((0.5 - v) / sigma) - normal_cdf((-0.5 - v) / sigma);
}

std::vector<double> gaussian_pmf_table(double sigma, double offset) {
    if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(offset))
        throw ContractError("pmf table needs a finite positive scale and finite offset");
    std::vector<double> p(kAlphabetSize);
    for (int s = kSymbolMin; s <= kSymbolMax; ++s) {
        const double v = s - offset;
        double mass;
        if (s == kSymbolMin) {
            mass = normal_cdf((v + 0.5) / sigma);
        } else if (s == kSymbolMax) {
            mass = normal_cdf(-(v - 0.5) / sigma);
        } else if (v >= 0.0) {
            mass = normal_cdf((0.5 - v) / sigma) - normal_cdf((-0.5 - v) / sigma);
        } else {
            mass = normal_cdf((v + 0.5) / sigma) - normal_cdf((v - 0.5) / sigma);
        }
        p[static_cast<std::size_t>(s - kSymbolMin)] = std::max(mass, kPmfFloor);
    }
    double total = 0.0;
    for (double v : p) total += v;
    for (double& v : p) v /= total;
    return p;
}

double rate_bits(std::span<const double> probabilities) {
    double bits = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = probabilities[i];
        if (!(p > 0.0) || !std::isfinite(p))
            throw NumericError("zero or invalid probability at coded element " + std::to_string(i));
        bits -= std::log2(p);
    }
    return bits;
}

double rate_estimate(std::span<const int> symbols, const PmfProvider& pmf) {
    std::vector<double> probs(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        const int s = symbols[i];
        if (s < kSymbolMin || s > kSymbolMax)
            throw ContractError("symbol " + std::to_string(s) + " outside the coding range");
        const std::vector<double> table = pmf(i);
        if (table.size() != kAlphabetSize) throw DimensionError("pmf table has the wrong alphabet size");
        probs[i] = table[static_cast<std::size_t>(s - kSymbolMin)];
    }
    return rate_bits(probs);
}

int to_symbol(double residual, bool* saturated) {
    if (!std::isfinite(residual)) throw NumericError("non-finite residual");
    const double r = std::round(residual);
    const double c = std::clamp(r, double(kSymbolMin), double(kSymbolMax));
    if (saturated) *saturated = c != r;
    return static_cast<int>(c);
}

void GaussianParams::validate() const {
    require_same(mu.shape(), sigma.shape(), "GaussianParams");
    for (real s : sigma.data())
        if (!(s >= kScaleFloor)) throw ContractError("Gaussian scale below the floor");
}

void FactorizedPrior::validate() const {
    require_same(loc.shape(), scale.shape(), "FactorizedPrior");
    for (real s : scale.data())
        if (!(s >= kScaleFloor)) throw ContractError("prior scale below the floor");
}

double rd_loss(double rate_bits, double mse, double rd_lambda, std::size_t num_pixels) {
    if (num_pixels == 0) throw ContractError("rd_loss needs at least one pixel");
    return rate_bits / static_cast<double>(num_pixels) + rd_lambda * mse;
}

ad::Var rd_loss(ad::Var rate_bits, ad::Var mse, real rd_lambda, std::size_t num_pixels) {
    if (num_pixels == 0) throw ContractError("rd_loss needs at least one pixel");
    return ad::add(ad::scale(rate_bits, 1.0f / static_cast<real>(num_pixels)), ad::scale(mse, rd_lambda));
}

double mse_255(const Tensor& a, const Tensor& b) {
    require_same(a.shape(), b.shape(), "mse");
    if (a.numel() == 0) throw ContractError("mse of empty tensors");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = 255.0 * (double(a[i]) - double(b[i]));
        s += d * d;
    }
    return s / static_cast<double>(a.numel());
}

ad::Var mse_255(ad::Var a, ad::Var b) {
    require_same(a.shape(), b.shape(), "mse");
    return ad::scale(ad::mean(ad::square(ad::sub(a, b))), 255.0f * 255.0f);
}

}  // namespace camc
