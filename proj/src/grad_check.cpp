#include "camc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "camc/errors.hpp"

namespace camc {

double GradCheckReport::worst() const {
    double w = 0.0;
    for (double e : max_rel_error) w = std::max(w, e);
    return w;
}

std::string GradCheckReport::describe() const {
    std::ostringstream os;
    os << (passed ? "pass" : "FAIL") << " (tol " << tol << "):";
    for (std::size_t i = 0; i < max_rel_error.size(); ++i) os << " in" << i << "=" << max_rel_error[i];
    return os.str();
}

namespace {

std::vector<double> reduction_weights(const Shape& shape, std::uint64_t seed) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> w(n, 1.0);
    if (n == 1) return w;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : w) v = dist(rng);
    return w;
}

double weighted_output(const GraphBuilder& build, std::span<const Tensor> inputs, const std::vector<double>& w) {
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    std::vector<ad::Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(tape.constant(t));
    const Tensor& out = build(tape, leaves).value();
    if (!out.all_finite()) throw NumericError("grad_check aborted: graph produced non-finite values");
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) acc += w[i] * out[i];
    return acc;
}

// Ridders' method: central differences at h, h/2, h/4, ... extrapolated in a
// Richardson tableau. Returns the entry with the smallest error estimate and
// stops once the extrapolation degrades, which is where round-off takes over.
double ridders(const std::function<double(double)>& central, double h, std::size_t levels) {
    constexpr double kShrink2 = 4.0;  // step halves per level
    constexpr double kSafe = 2.0;
    std::vector<std::vector<double>> t(levels, std::vector<double>(levels));
    t[0][0] = central(h);
    double best = t[0][0], err = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < levels; ++i) {
        h /= 2.0;
        t[0][i] = central(h);
        double fac = kShrink2;
        for (std::size_t j = 1; j <= i; ++j) {
            t[j][i] = (t[j - 1][i] * fac - t[j - 1][i - 1]) / (fac - 1.0);
            fac *= kShrink2;
            const double e = std::max(std::abs(t[j][i] - t[j - 1][i]), std::abs(t[j][i] - t[j - 1][i - 1]));
            if (e <= err) {
                err = e;
                best = t[j][i];
            }
        }
        if (std::abs(t[i][i] - t[i - 1][i - 1]) >= kSafe * err) break;
    }
    return best;
}

}  // namespace

GradCheckReport grad_check(const GraphBuilder& build, std::span<const Tensor> inputs, const GradCheckOptions& options) {
    GradCheckReport report;
    report.tol = options.tol;

    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    ad::Var out = build(tape, leaves);
    if (!out.value().all_finite()) throw NumericError("grad_check aborted: graph produced non-finite values");
    const auto w = reduction_weights(out.shape(), options.seed);
    Tensor wt(out.shape());
    for (std::size_t i = 0; i < w.size(); ++i) wt[i] = static_cast<real>(w[i]);
    // Numerical side uses the real-rounded weights too so both sides differentiate the same function.
    std::vector<double> wd(wt.data().begin(), wt.data().end());
    ad::Var loss = ad::sum(ad::mul(out, tape.constant(wt)));
    const ad::Gradients grads = tape.backward(loss);

    std::vector<Tensor> probe(inputs.begin(), inputs.end());
    if (options.directions > 0) {
        // Rademacher directions: every coordinate moves by exactly ±h.
        std::mt19937_64 rng(options.seed ^ 0xd1ec7ull);
        for (std::size_t d = 0; d < options.directions; ++d) {
            std::vector<std::vector<real>> u(inputs.size());
            double a = 0.0;
            for (std::size_t k = 0; k < inputs.size(); ++k) {
                const Tensor* g = grads.find(leaves[k]);
                u[k].resize(inputs[k].numel());
                for (std::size_t i = 0; i < u[k].size(); ++i) {
                    u[k][i] = (rng() & 1) ? 1.0f : -1.0f;
                    if (g) a += double((*g)[i]) * u[k][i];
                }
            }
            auto shifted = [&](double h) {
                for (std::size_t k = 0; k < inputs.size(); ++k)
                    for (std::size_t i = 0; i < u[k].size(); ++i)
                        probe[k][i] = static_cast<real>(double(inputs[k][i]) + h * u[k][i]);
                return weighted_output(build, probe, wd);
            };
            const double h0 = std::exp2(std::round(std::log2(options.step)));
            const double numeric =
                ridders([&](double h) { return (shifted(h) - shifted(-h)) / (2.0 * h); }, h0, options.levels);
            const double denom = std::max({std::abs(a), std::abs(numeric), options.denom_floor});
            report.max_rel_error.push_back(std::abs(a - numeric) / denom);
        }
        report.passed = report.worst() <= options.tol;
        return report;
    }
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor* analytic = grads.find(leaves[k]);
        const std::size_t n = inputs[k].numel();
        std::size_t stride = 1;
        if (options.max_elements_per_input > 0 && n > options.max_elements_per_input)
            stride = (n + options.max_elements_per_input - 1) / options.max_elements_per_input;
        double worst = 0.0;
        for (std::size_t i = 0; i < n; i += stride) {
            const real x0 = inputs[k][i];
            // Power-of-two steps keep the probe points exact in real.
            const double h0 = std::exp2(std::round(std::log2(options.step * std::max(1.0, std::abs(double(x0))))));
            const double numeric = ridders(
                [&](double h) {
                    probe[k][i] = static_cast<real>(x0 + h);
                    const double up = weighted_output(build, probe, wd);
                    probe[k][i] = static_cast<real>(x0 - h);
                    const double down = weighted_output(build, probe, wd);
                    probe[k][i] = x0;
                    return (up - down) / (2.0 * h);
                },
                h0, options.levels);
            const double a = analytic ? double((*analytic)[i]) : 0.0;
            const double denom = std::max({std::abs(a), std::abs(numeric), options.denom_floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        report.max_rel_error.push_back(worst);
    }
    report.passed = report.worst() <= options.tol;
    return report;
}

}  // namespace camc
