#pragma once

// Rate-distortion training on random crops with Adam and global-norm
// gradient clipping. Rate uses additive-noise quantization, the synthesis
// path straight-through rounding.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "camc/model.hpp"

namespace camc {

struct TrainOptions {
    std::size_t steps = 0;
    float rd_lambda = 0.01f;
    std::uint64_t seed = 0;
    std::size_t crop = 64;
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float adam_eps = 1e-8f;
    float clip_norm = 1.0f;
};

struct StepLog {
    std::size_t step = 0;  // 1-based
    double bpp = 0.0;      // estimated rate / pixels
    double mse = 0.0;      // 255 scale
    double loss = 0.0;
};

class Trainer {
public:
    Trainer(Model& model, TrainOptions options);

    // One optimisation step on `crop` (H×W×3, multiples of 16). Throws
    // NumericError and leaves the model untouched if the loss or a gradient
    // is not finite.
    StepLog step(const Tensor& crop);

    // Random crop (mirror-padded if the image is smaller) drawn from the trainer's generator.
    Tensor random_crop(const Tensor& image);

    std::size_t steps_done() const { return step_; }

private:
    Model& model_;
    TrainOptions opt_;
    std::mt19937_64 rng_;
    std::vector<Tensor> m_, v_;
    std::size_t step_ = 0;
};

struct TrainResult {
    std::vector<StepLog> log;
    bool diverged = false;
    std::string divergence_message;
};

using StepCallback = std::function<void(const StepLog&)>;

// Runs options.steps steps over uniformly drawn images. On divergence the
// model keeps its last good parameters and the result is flagged.
TrainResult train(Model& model, const std::vector<Tensor>& images, const TrainOptions& options,
                  const StepCallback& on_step = {});

std::string loss_log_csv(const std::vector<StepLog>& log);

}  // namespace camc
