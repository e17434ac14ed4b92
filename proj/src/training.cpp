#include "camc/training.hpp"

#include <cmath>
#include <sstream>

#include "camc/entropy_model.hpp"
#include "camc/errors.hpp"

namespace camc {

Trainer::Trainer(Model& model, TrainOptions options) : model_(model), opt_(options), rng_(options.seed) {
    if (!(opt_.lr > 0.0f) || !(opt_.clip_norm > 0.0f)) throw ConfigError("learning rate and clip norm must be positive");
    if (!(opt_.rd_lambda >= 0.0f)) throw ConfigError("rd_lambda must be non-negative");
    if (opt_.crop == 0 || opt_.crop % 16 != 0) throw ConfigError("crop size must be a positive multiple of 16");
    const ParamStore& ps = model_.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        m_.emplace_back(ps.value(i).shape());
        v_.emplace_back(ps.value(i).shape());
    }
}

Tensor Trainer::random_crop(const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("training images must be H×W×3");
    const Tensor src = pad_to_multiple(image, opt_.crop);
    const std::size_t h = src.dim(0), w = src.dim(1), c = opt_.crop;
    std::uniform_int_distribution<std::size_t> dy(0, h - c), dx(0, w - c);
    const std::size_t y0 = dy(rng_), x0 = dx(rng_);
    Tensor out({c, c, 3});
    for (std::size_t y = 0; y < c; ++y)
        std::copy_n(src.ptr() + ((y0 + y) * w + x0) * 3, c * 3, out.ptr() + y * c * 3);
    return out;
}

StepLog Trainer::step(const Tensor& crop) {
    if (crop.rank() != 3 || crop.dim(2) != 3 || crop.dim(0) % 16 || crop.dim(1) % 16)
        throw DimensionError("training crop must be H×W×3 with extents divisible by 16");
    const std::size_t pixels = crop.dim(0) * crop.dim(1);

    // Cluster centers change during the forward pass; keep them for rollback.
    std::vector<NamedCluster> saved_clusters = model_.clusters();

    ad::Tape tape;
    ModelPass pass(model_, tape, true, true);
    ad::Var x = tape.constant(crop);
    ad::Var y = pass.analysis(x);
    ad::Var z = pass.hyper_encode(y);
    const std::size_t zc = z.value().dim(2);
    const std::size_t zrows = z.value().numel() / zc;

    ad::Var zeros_z = tape.constant(Tensor(z.shape()));
    ad::Var z_noisy = quantize(z, zeros_z, QuantMode::noise, &rng_);
    ad::Var z_loc = ad::reshape(ad::broadcast_rows(pass.prior_loc(), zrows), z.shape());
    ad::Var z_scale = ad::reshape(ad::broadcast_rows(pass.prior_scale(), zrows), z.shape());
    ad::Var z_bits = ad::sum(ad::gaussian_bits(ad::sub(z_noisy, z_loc), z_scale));

    ad::Var z_hat = quantize(z, zeros_z, QuantMode::ste);
    GaussianVars g = pass.hyper_decode(z_hat, y.value().dim(0), y.value().dim(1));
    ad::Var y_noisy = quantize(y, g.mu, QuantMode::noise, &rng_);
    ad::Var y_bits = ad::sum(ad::gaussian_bits(ad::sub(y_noisy, g.mu), g.sigma));

    ad::Var y_hat = quantize(y, g.mu, QuantMode::ste);
    ad::Var x_hat = pass.synthesis(y_hat);
    ad::Var mse = mse_255(x_hat, x);
    ad::Var rate = ad::add(y_bits, z_bits);
    ad::Var loss = rd_loss(rate, mse, opt_.rd_lambda, pixels);

    StepLog log;
    log.step = step_ + 1;
    log.loss = loss.value().item();
    log.mse = mse.value().item();
    log.bpp = rate.value().item() / double(pixels);
    auto fail = [&](const std::string& what) {
        model_.clusters() = std::move(saved_clusters);
        throw NumericError(what + " at step " + std::to_string(log.step));
    };
    if (!std::isfinite(log.loss)) fail("non-finite loss");

    const ad::Gradients grads = tape.backward(loss);
    const auto& vars = pass.vars();
    double norm2 = 0.0;
    for (const auto& v : vars)
        if (const Tensor* gt = grads.find(v))
            for (real d : gt->data()) norm2 += double(d) * d;
    if (!std::isfinite(norm2)) fail("non-finite gradient");
    const double norm = std::sqrt(norm2);
    const real clip = norm > opt_.clip_norm ? static_cast<real>(opt_.clip_norm / norm) : 1.0f;

    ++step_;
    const double bc1 = 1.0 - std::pow(double(opt_.beta1), double(step_));
    const double bc2 = 1.0 - std::pow(double(opt_.beta2), double(step_));
    ParamStore& ps = model_.params();
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const Tensor* gt = grads.find(vars[i]);
        if (!gt) continue;
        Tensor& p = ps.value(i);
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t k = 0; k < p.numel(); ++k) {
            const real gk = (*gt)[k] * clip;
            m[k] = opt_.beta1 * m[k] + (1.0f - opt_.beta1) * gk;
            v[k] = opt_.beta2 * v[k] + (1.0f - opt_.beta2) * gk * gk;
            const double mh = m[k] / bc1, vh = v[k] / bc2;
            p[k] -= static_cast<real>(opt_.lr * mh / (std::sqrt(vh) + opt_.adam_eps));
        }
    }
    return log;
}

TrainResult train(Model& model, const std::vector<Tensor>& images, const TrainOptions& options,
                  const StepCallback& on_step) {
    if (options.steps > 0 && images.empty()) throw InputError("training needs at least one image");
    Trainer trainer(model, options);
    std::mt19937_64 pick(options.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<std::size_t> which(0, images.empty() ? 0 : images.size() - 1);
    TrainResult res;
    for (std::size_t s = 0; s < options.steps; ++s) {
        const Tensor crop = trainer.random_crop(images[which(pick)]);
        try {
            res.log.push_back(trainer.step(crop));
        } catch (const NumericError& e) {
            res.diverged = true;
            res.divergence_message = e.what();
            break;
        }
        if (on_step) on_step(res.log.back());
    }
    return res;
}

std::string loss_log_csv(const std::vector<StepLog>& log) {
    std::ostringstream o;
    o.precision(9);
    o << "step,bpp,mse,loss\n";
    for (const auto& l : log) o << l.step << ',' << l.bpp << ',' << l.mse << ',' << l.loss << '\n';
    return o.str();
}

}  // namespace camc
