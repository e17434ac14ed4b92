#pragma once

// Shared helpers and independent oracles for the test suites. Nothing here
// calls into the library's numeric kernels: oracles are plain loops in
// long double.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "camc/clustering.hpp"
#include "camc/ssm.hpp"
#include "camc/tensor.hpp"

namespace testing {

using camc::Shape;
using camc::Tensor;

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f);
Tensor random_normal(const Shape& shape, std::mt19937_64& rng, float stddev = 1.0f);

// max_i |a_i − b_i| / max(|b_i|, floor)
double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12);
std::vector<double> to_double(const Tensor& t);

// Naive matrix product (rows × k)·(k × n) in long double.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b);

// Sequential selective scan computed from scratch: Δ/B/C projections,
// A = −exp(a_log), ZOH with expm1, then the loop h ← ā·h + b̄·x and
// y = Σ (C + P)·h + D·x. `prompts` is N × d_s or empty.
std::vector<double> naive_scan(const Tensor& x, const camc::SsmParams& p, const Tensor& prompts = {});

// The recurrence alone, from explicit per-token coefficients (shapes as in
// camc::scan_recurrence); `prompt` may be empty.
std::vector<double> naive_recurrence(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
                                     const Tensor& c, const Tensor& prompt, const Tensor& skip);

// ‖a − b‖∞ / ‖b‖∞ (b nonzero)
double normwise_rel_error(const std::vector<double>& a, const std::vector<double>& b);

// Exhaustive cosine argmax with lowest-index ties.
camc::AssignmentVector naive_assign(const Tensor& tokens, const Tensor& centers);

// Random SSM parameters with moderate magnitudes.
camc::SsmParams random_ssm(std::size_t d, std::size_t d_s, std::mt19937_64& rng);

// Direct-sum 2-D convolution over an H×W×Cin map, weights k×k×Cin×Cout.
std::vector<double> naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

}  // namespace testing
