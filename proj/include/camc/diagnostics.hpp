#pragma once

// Effective-receptive-field maps and cluster-assignment masks.

#include <functional>
#include <vector>

#include "camc/autodiff.hpp"
#include "camc/image_io.hpp"
#include "camc/model.hpp"

namespace camc {

inline constexpr real kErfClip = 0.20f;

// Maps an input H×W×C tensor to an h×w×c feature map on the given tape.
using FeatureFn = std::function<ad::Var(ad::Tape&, ad::Var input)>;

// Per-pixel mean absolute gradient (over input channels) of the L1 norm of
// the central feature vector, feature[h/2, w/2, :], w.r.t. the input. Shape H×W.
Tensor input_gradient_map(const FeatureFn& fn, const Tensor& input);

// |g| clipped to [0, kErfClip] and scaled to 0..255.
Image erf_image(const Tensor& gradient_map);

// ERF of the central latent element of the analysis transform. The image is
// mirror-padded to a multiple of 16 first; the map covers the padded frame.
Tensor erf_map(Model& model, const Tensor& image);

struct ClusterMaskResult {
    std::size_t height = 0, width = 0;  // token grid of the stage
    AssignmentVector assignment;        // from the stage's first CAM block
    std::vector<Image> masks;           // K binary PGMs: 255 where g_i = k
};

// Masks of the first CAM block in `stage` (3, 4 or 5; others are a
// ConfigError). Decoder stages are driven by the quantized latent the
// decoder would see.
ClusterMaskResult cluster_masks(Model& model, const Tensor& image, int stage);

}  // namespace camc
