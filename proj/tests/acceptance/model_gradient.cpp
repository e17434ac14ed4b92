// Built with CAMC_DOUBLE: every `real` below is a double and the library
// namespace is renamed, so this links next to the float build.

#include "model_gradient.hpp"

#include <random>
#include <vector>

#include "camc/entropy_model.hpp"
#include "camc/grad_check.hpp"
#include "camc/model.hpp"

using namespace camc;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.name = "tiny";
    c.channels = {8, 8, 8, 8};
    c.depths = {1, 1, 1};
    c.window = 2;
    // One cluster: argmax assignment is piecewise constant, so with more than
    // one a perturbation can flip a token and break the difference quotient.
    c.k_clusters = 1;
    c.d_s = 3;
    c.latent_channels = 8;
    c.hyper_channels = 8;
    c.head_dim = 4;
    return c;
}

// Places row vectors side by side through exact 0/1 selection matmuls.
ad::Var join(ad::Tape& tape, std::span<const ad::Var> parts) {
    std::size_t total = 0;
    for (const auto& v : parts) total += v.value().numel();
    ad::Var out;
    std::size_t offset = 0;
    for (const auto& v : parts) {
        const std::size_t n = v.value().numel();
        Tensor sel({n, total});
        for (std::size_t i = 0; i < n; ++i) sel.at(i, offset + i) = 1;
        const ad::Var placed = ad::matmul(ad::reshape(v, {1, n}), tape.constant(sel));
        out = offset == 0 ? placed : ad::add(out, placed);
        offset += n;
    }
    return out;
}

// The training objective with fixed-seed additive noise in place of rounding,
// which has no useful finite-difference derivative. Returns the per-element
// rate and distortion terms; they sum to the loss.
ad::Var smooth_rd_terms(Model& model, ad::Tape& tape, std::span<const ad::Var> v) {
    constexpr real kLambda = 0.01;
    std::vector<ad::Var> vars(v.begin() + 1, v.end());
    ModelPass pass(model, tape, std::move(vars), false);
    std::mt19937_64 rng(7);
    const ad::Var x = v[0];
    const real pixels = real(x.value().dim(0) * x.value().dim(1));
    const ad::Var y = pass.analysis(x);
    const ad::Var z = pass.hyper_encode(y);
    const std::size_t zc = z.value().dim(2), zrows = z.value().numel() / zc;
    const ad::Var z_t = quantize(z, tape.constant(Tensor(z.shape())), QuantMode::noise, &rng);
    const ad::Var loc = ad::reshape(ad::broadcast_rows(pass.prior_loc(), zrows), z.shape());
    const ad::Var scale = ad::reshape(ad::broadcast_rows(pass.prior_scale(), zrows), z.shape());
    const ad::Var z_bits = ad::scale(ad::gaussian_bits(ad::sub(z_t, loc), scale), 1 / pixels);
    const GaussianVars g = pass.hyper_decode(z_t, y.value().dim(0), y.value().dim(1));
    const ad::Var y_t = quantize(y, g.mu, QuantMode::noise, &rng);
    const ad::Var y_bits = ad::scale(ad::gaussian_bits(ad::sub(y_t, g.mu), g.sigma), 1 / pixels);
    const real d = kLambda * 255 * 255 / real(x.value().numel());
    const ad::Var dist = ad::scale(ad::square(ad::sub(pass.synthesis(y_t), x)), d);
    const ad::Var parts[] = {y_bits, z_bits, dist};
    return join(tape, parts);
}

}  // namespace

ModelGradientResult tiny_model_gradient_check(double tol, unsigned model_seed) {
    Model model = Model::create(tiny_config(), model_seed);
    // 16x16 is the smallest input the four stride-2 stages and the hyperprior accept.
    Tensor img({16, 16, 3});
    std::mt19937_64 rng(model_seed + 100);
    std::uniform_real_distribution<real> u(0, 1);
    for (auto& v : img.data()) v = u(rng);
    std::vector<Tensor> in{img};
    for (std::size_t i = 0; i < model.params().size(); ++i) in.push_back(model.params().value(i));

    GradCheckOptions opt;
    opt.tol = tol;
    opt.max_elements_per_input = 6;
    // Bias perturbations shift whole channels; 1/32 pushes some activations
    // across the scale floor. Double precision affords a much smaller step.
    opt.step = 1.0 / 1024;
    const GradCheckReport r = grad_check(
        [&](ad::Tape& tape, std::span<const ad::Var> v) { return smooth_rd_terms(model, tape, v); }, in, opt);
    return {r.passed, r.worst(), r.describe()};
}
