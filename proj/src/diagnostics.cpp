#include "camc/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "camc/entropy_model.hpp"
#include "camc/errors.hpp"

namespace camc {

Tensor input_gradient_map(const FeatureFn& fn, const Tensor& input) {
    if (input.rank() != 3) throw DimensionError("gradient map expects an H×W×C input");
    ad::Tape tape;
    ad::Var x = tape.leaf(input, true);
    ad::Var f = fn(tape, x);
    const Tensor& fv = f.value();
    if (fv.rank() != 3) throw DimensionError("feature map must be h×w×c");
    const std::size_t h = fv.dim(0), w = fv.dim(1), c = fv.dim(2);
    // L1 of the centre vector: Σ sign(f)·f selects it with a constant weight.
    Tensor weight(fv.shape());
    const std::size_t base = ((h / 2) * w + w / 2) * c;
    for (std::size_t k = 0; k < c; ++k) {
        const real v = fv[base + k];
        weight[base + k] = v > 0 ? 1.0f : (v < 0 ? -1.0f : 0.0f);
    }
    ad::Var target = ad::sum(ad::mul(f, tape.constant(std::move(weight))));
    const ad::Gradients g = tape.backward(target);
    const Tensor* gx = g.find(x);
    const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
    Tensor map({H, W});
    if (!gx) return map;
    for (std::size_t i = 0; i < H * W; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < C; ++k) s += std::abs((*gx)[i * C + k]);
        map[i] = static_cast<real>(s / double(C));
    }
    return map;
}

Image erf_image(const Tensor& gradient_map) {
    if (gradient_map.rank() != 2) throw DimensionError("ERF map must be H×W");
    Image img;
    img.height = gradient_map.dim(0);
    img.width = gradient_map.dim(1);
    img.channels = 1;
    img.pixels.resize(gradient_map.numel());
    for (std::size_t i = 0; i < gradient_map.numel(); ++i) {
        const real v = std::clamp(std::abs(gradient_map[i]), real(0), kErfClip);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v / kErfClip * 255.0f));
    }
    return img;
}

Tensor erf_map(Model& model, const Tensor& image) {
    const Tensor padded = pad_to_multiple(image, 16);
    return input_gradient_map(
        [&model](ad::Tape& tape, ad::Var x) {
            ModelPass pass(model, tape, false, false);
            return pass.analysis(x);
        },
        padded);
}

ClusterMaskResult cluster_masks(Model& model, const Tensor& image, int stage) {
    if (stage < 3 || stage > 5 || !model.stage_has_cam(stage))
        throw ConfigError("stage " + std::to_string(stage) + " has no CAM block (masks exist for stages 3, 4, 5)");
    ClusterMaskResult res;
    bool captured = false;
    auto observer = [&](int s, std::size_t unit, const AssignmentVector& g, std::size_t h, std::size_t w) {
        if (s != stage || unit != 0 || captured) return;
        res.assignment = g;
        res.height = h;
        res.width = w;
        captured = true;
    };

    const Tensor padded = pad_to_multiple(image, 16);
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    ModelPass pass(model, tape, false, false);
    pass.set_observer(observer);
    ad::Var y = pass.analysis(tape.constant(padded));
    if (stage > 3) {
        ad::Var z = pass.hyper_encode(y);
        ad::Var z_hat = quantize(z, tape.constant(Tensor(z.shape())), QuantMode::round);
        GaussianVars g = pass.hyper_decode(z_hat, y.value().dim(0), y.value().dim(1));
        pass.synthesis(quantize(y, g.mu, QuantMode::round));
    }
    if (!captured) throw ContractError("stage observer did not fire");

    const std::size_t k = model.config().k_clusters;
    for (std::size_t c = 0; c < k; ++c) {
        Image m;
        m.height = res.height;
        m.width = res.width;
        m.channels = 1;
        m.pixels.resize(res.assignment.size());
        for (std::size_t i = 0; i < res.assignment.size(); ++i)
            m.pixels[i] = res.assignment[i] == static_cast<std::int32_t>(c) ? 255 : 0;
        res.masks.push_back(std::move(m));
    }
    return res;
}

}  // namespace camc
