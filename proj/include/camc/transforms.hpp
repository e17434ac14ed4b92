#pragma once

// Building blocks of the nonlinear transforms. Feature maps are H×W×d
// tensors; their token view is the raster-order N×d reshape (N = H·W).

#include <cstdint>
#include <functional>
#include <span>

#include "camc/autodiff.hpp"
#include "camc/clustering.hpp"
#include "camc/ssm.hpp"

namespace camc {

struct LayerNormVars {
    ad::Var gamma, beta;
};

struct AttentionVars {
    LayerNormVars norm;
    ad::Var qkv_w;   // d × 3d
    ad::Var qkv_b;   // 3d
    ad::Var proj_w;  // d × d
    ad::Var proj_b;  // d
    std::size_t heads = 1;
};

struct FfnVars {
    LayerNormVars norm;
    ad::Var expand_w;   // d × 2d
    ad::Var expand_b;   // 2d
    ad::Var dw_w;       // 3 × 3 × 2d
    ad::Var dw_b;       // 2d
    ad::Var project_w;  // 2d × d
    ad::Var project_b;  // d
};

struct CamVars {
    LayerNormVars norm;
    SsmVars ssm;
    ad::Var dict;    // K × d_s prompt dictionary
    ad::Var gate_w;  // d × d
    ad::Var gate_b;  // d
    ad::Var out_w;   // d × d
    ad::Var out_b;   // d
};

// Softmax attention inside groups of `tokens_per_window` consecutive rows of
// q, k, v (each rows × d), split into `heads` heads. Keys whose `key_valid`
// flag is 0 are masked out; an empty span means all valid.
ad::Var window_attention_core(ad::Var q, ad::Var k, ad::Var v, std::size_t tokens_per_window, std::size_t heads,
                              std::span<const std::uint8_t> key_valid = {});

// Pre-norm window attention with residual over non-overlapping window×window
// groups. Extents that are not multiples of the window are zero-padded and the
// padding is masked out as keys.
ad::Var window_attention(ad::Var x, const AttentionVars& w, std::size_t window);

// Pre-norm pointwise expand (×2) → depthwise 3×3 → GELU → pointwise project, residual.
ad::Var conv_ffn(ad::Var x, const FfnVars& w);

// Called with the assignments each CAM block computed and its map extents.
using AssignmentObserver = std::function<void(const AssignmentVector&, std::size_t h, std::size_t w)>;

// Content-adaptive scan block:
//   layer-norm → cluster (train: k-means step updating `cluster`; else frozen
//   assignment) → cluster-contiguous reorder → prompted selective scan →
//   restore order → SiLU gate → out projection → residual.
ad::Var cam_block(ad::Var x, const CamVars& w, ClusterModel& cluster, bool training,
                  const AssignmentObserver& observer = {});

}  // namespace camc
