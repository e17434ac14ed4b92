#pragma once

// Discrete selective state-space scan with prompt-conditioned read-out.
//
// Per channel c and state s, with zero-order-hold discretization of a
// diagonal continuous system:
//
//   a_bar = exp(Δ_i,c · A_c,s)
//   b_bar = (exp(Δ_i,c · A_c,s) − 1) / A_c,s · B_i,s
//   h_i   = a_bar · h_{i−1} + b_bar · x_i,c              (h_0 = 0)
//   y_i,c = Σ_s (C_i,s + P_i,s) · h_i,c,s + D_c · x_i,c
//
// P is the per-token prompt row taken from a K × d_s dictionary by cluster
// id. With P = 0 this is the plain selective scan. The recurrence runs in
// double precision internally.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "camc/autodiff.hpp"

namespace camc {

struct ZohCoefficients {
    double a_bar;
    double b_bar;
};

// Below this |Δ·A| the ratio (e^{ΔA} − 1)/A is replaced by Δ·(1 + ΔA/2).
inline constexpr double kZohTaylorThreshold = 1e-6;

// Scalar ZOH for one (channel, state) pair. Throws ContractError unless delta > 0.
ZohCoefficients discretize(double delta, double a, double b);

// Learnable parameters of one selective scan (Δ/B/C projections, A, skip D).
struct SsmParams {
    Tensor delta_w;  // d × d
    Tensor delta_b;  // d
    Tensor b_w;      // d × d_s
    Tensor c_w;      // d × d_s
    Tensor a_log;    // d × d_s, A = −exp(a_log) < 0
    Tensor skip;     // d

    std::size_t channels() const { return skip.numel(); }
    std::size_t state_dim() const { return a_log.cols(); }

    // A = −(1..d_s) per channel, Δ ≈ 0.1 at init, unit skip.
    static SsmParams init(std::size_t d, std::size_t d_s, std::mt19937_64& rng);
};

struct PromptDictionary {
    Tensor dict;  // K × d_s

    std::size_t clusters() const { return dict.rank() == 2 ? dict.dim(0) : 0; }
};

// SsmParams bound to a tape.
struct SsmVars {
    ad::Var delta_w, delta_b, b_w, c_w, a_log, skip;

    static SsmVars bind(ad::Tape& tape, const SsmParams& p, bool requires_grad = false);
};

// The recurrence with explicit per-token coefficients. Shapes: u, delta N×d;
// a d×d_s (negative); b, c, prompt N×d_s (prompt optional); skip d.
ad::Var scan_recurrence(ad::Var u, ad::Var delta, ad::Var a, ad::Var b, ad::Var c, std::optional<ad::Var> prompt,
                        ad::Var skip);

// The same sweep without the final rounding of y to `real`.
std::vector<double> scan_recurrence_f64(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
                                        const Tensor& c, const Tensor* prompt, const Tensor& skip);

struct SelectiveCoefficients {
    ad::Var delta;  // softplus(u·W_Δ + b_Δ), N×d
    ad::Var a;      // −exp(a_log), d×d_s
    ad::Var b;      // u·W_B, N×d_s
    ad::Var c;      // u·W_C, N×d_s
};

SelectiveCoefficients selective_coefficients(ad::Var u, const SsmVars& p);

ad::Var selective_scan(ad::Var u, const SsmVars& p);
ad::Var prompted_scan(ad::Var u, const SsmVars& p, ad::Var prompts);

Tensor selective_scan(const Tensor& x, const SsmParams& p);
Tensor prompted_scan(const Tensor& x, const SsmParams& p, const Tensor& prompts);

// Row i is dictionary row assignment[i]; equal to one-hot(assignment)·dict.
Tensor prompt_lookup(std::span<const std::int32_t> assignment, const PromptDictionary& dict);
ad::Var prompt_lookup(std::span<const std::int32_t> assignment, ad::Var dict);

// Input-independent system for decay diagnostics.
struct FixedSsm {
    Tensor delta;  // d, positive
    Tensor a;      // d × d_s, negative
    Tensor b;      // d_s
    Tensor c;      // d_s
    Tensor skip;   // d
};

// ‖y_j‖₂ when the sequence carries a unit impulse (all channels 1) at token i
// and zeros elsewhere. Requires j ≥ i.
double impulse_response(const FixedSsm& ssm, std::size_t i, std::size_t j);

}  // namespace camc
