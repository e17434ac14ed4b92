#pragma once

// Quantization, discretized Gaussian likelihoods and the rate-distortion loss.
//
// ŷ is coded as integer residuals r = round(y − μ) under a Gaussian of scale
// σ centred on 0; ẑ is coded as integers round(z) under a per-channel
// Gaussian with learnable location and scale. Both alphabets are the
// integers in [kSymbolMin, kSymbolMax]; mass outside is folded into the end
// symbols.

#include <array>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "camc/autodiff.hpp"

namespace camc {

enum class QuantMode { round, noise, ste };

// "round" | "noise" | "ste"; anything else is a ConfigError.
QuantMode parse_quant_mode(const std::string& name);

inline constexpr int kSymbolMin = -127;
inline constexpr int kSymbolMax = 127;
inline constexpr std::size_t kAlphabetSize = kSymbolMax - kSymbolMin + 1;
inline constexpr real kScaleFloor = 0.11f;
// Floor applied to every table entry (before renormalization) so no symbol
// in the coding range has zero probability.
inline constexpr double kPmfFloor = 0x1p-40;

// round: round(y − μ) + μ; noise: y + U(−½, ½) (rng required); ste: round
// in value, identity in gradient.
Tensor quantize(const Tensor& y, const Tensor& mu, QuantMode mode, std::mt19937_64* rng = nullptr);
ad::Var quantize(ad::Var y, ad::Var mu, QuantMode mode, std::mt19937_64* rng = nullptr);

double normal_cdf(double x);

// Unit-bin Gaussian mass Φ((r+½)/σ) − Φ((r−½)/σ), no folding.
double gaussian_pmf(int r, double sigma);

// Table over [kSymbolMin, kSymbolMax] for a Gaussian with scale σ and centre
// `offset`: interior bins as above, both tails folded into the end symbols,
// floored at kPmfFloor and renormalized to sum to 1.
std::vector<double> gaussian_pmf_table(double sigma, double offset = 0.0);

// Σ −log2 p. Throws NumericError on any p ≤ 0 or non-finite p.
double rate_bits(std::span<const double> probabilities);

// Provider returns the pmf over [kSymbolMin, kSymbolMax] for element i.
using PmfProvider = std::function<std::vector<double>(std::size_t i)>;
double rate_estimate(std::span<const int> symbols, const PmfProvider& pmf);

// Integer symbol for a residual: round, then clamp into the coding range.
// `saturated` (optional) is set when clamping changed the value.
int to_symbol(double residual, bool* saturated = nullptr);

struct GaussianParams {
    Tensor mu;
    Tensor sigma;
    // Throws DimensionError on shape mismatch and ContractError if σ < floor.
    void validate() const;
};

struct FactorizedPrior {
    Tensor loc;    // per channel
    Tensor scale;  // per channel, ≥ kScaleFloor
    void validate() const;
    std::size_t channels() const { return loc.numel(); }
};

struct RDPoint {
    double bpp = 0.0;
    double psnr_db = 0.0;
    double rate_bits = 0.0;
    double distortion = 0.0;  // MSE on 255-scaled pixels
    double rd_lambda = 0.0;
};

inline constexpr std::array<double, 7> kPaperLambdas{0.0017, 0.0025, 0.0035, 0.0067, 0.0130, 0.0250, 0.050};

// bpp + λ·mse with bpp = rate_bits / num_pixels.
double rd_loss(double rate_bits, double mse, double rd_lambda, std::size_t num_pixels);
ad::Var rd_loss(ad::Var rate_bits, ad::Var mse, real rd_lambda, std::size_t num_pixels);

// Mean squared error after scaling [0, 1] pixels by 255.
double mse_255(const Tensor& a, const Tensor& b);
ad::Var mse_255(ad::Var a, ad::Var b);

}  // namespace camc
