#pragma once

// Analytic-vs-numerical gradient comparison for graphs built on a Tape.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "camc/autodiff.hpp"

namespace camc {

// Builds the graph under test from leaves bound to `inputs`.
using GraphBuilder = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

struct GradCheckOptions {
    double tol = 1e-4;
    // Largest central-difference step, relative to max(1, |x|) and rounded
    // to a power of two. Ridders extrapolation halves it up to levels - 1
    // times and keeps the estimate with the smallest error.
    double step = 1.0 / 32;
    std::size_t levels = 8;
    // Error denominator is max(|analytic|, |numeric|, denom_floor).
    double denom_floor = 1.0;
    // 0 checks every element; otherwise an evenly spaced subset per input.
    std::size_t max_elements_per_input = 0;
    // Nonzero: instead of single elements, compare directional derivatives
    // along this many random ±1 directions spanning all inputs at once.
    std::size_t directions = 0;
    // Non-scalar outputs are reduced with fixed pseudo-random weights.
    std::uint64_t seed = 0x5eed;
};

struct GradCheckReport {
    std::vector<double> max_rel_error;  // one entry per input, or per direction
    double tol = 0.0;
    bool passed = false;

    double worst() const;
    std::string describe() const;
};

// Throws NumericError when the graph produces non-finite values.
GradCheckReport grad_check(const GraphBuilder& build, std::span<const Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace camc
