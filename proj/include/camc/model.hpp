#pragma once

// The codec network: analysis/synthesis transforms built from window
// attention, CAM and Conv-FFN units, the hyper transforms, and the
// factorized prior of the side information.
//
// Stage layout (six stages, depths L1 L2 L3 | L3 L2 L1):
//
//   x ─down1→ s1(C1) ─down2→ s2(C2) ─down3→ s3(C3, CAM) ─down4→ y
//   ŷ ─up1→ s4(C3, CAM) ─up2→ s5(C2, CAM) ─up3→ s6(C1) ─up4→ x̂
//
// Every unit is window attention → (CAM) → Conv-FFN. Down/upsampling are
// stride-2 5×5 (transposed) convolutions.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "camc/autodiff.hpp"
#include "camc/clustering.hpp"
#include "camc/transforms.hpp"

namespace camc {

struct ModelConfig {
    std::string name = "desk";
    std::array<std::size_t, 4> channels{32, 48, 64, 80};
    std::array<std::size_t, 3> depths{2, 1, 1};
    std::size_t window = 4;
    std::size_t k_clusters = 8;
    std::size_t d_s = 16;
    std::size_t latent_channels = 80;
    std::size_t hyper_channels = 48;
    std::size_t head_dim = 16;
    std::size_t kmeans_iters = 5;
    float ema_decay = 0.99f;

    static ModelConfig desk();
    static ModelConfig paper();
    // Throws ConfigError for unknown names.
    static ModelConfig preset(const std::string& name);

    void validate() const;
    std::size_t heads_for(std::size_t channels) const;

    // Flat key=value text; round-trips through parse().
    std::string to_text() const;
    static ModelConfig parse(const std::string& text);
    // 16-bit fingerprint of to_text(), stored in coded files.
    std::uint16_t id() const;
};

// Ordered, uniquely named parameter tensors.
class ParamStore {
public:
    std::size_t add(std::string name, Tensor value);
    std::size_t size() const { return values_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& value(std::size_t i) { return values_[i]; }
    const Tensor& value(std::size_t i) const { return values_[i]; }
    std::optional<std::size_t> find(const std::string& name) const;
    std::size_t count_scalars() const;

    std::vector<ad::Var> bind(ad::Tape& tape, bool requires_grad) const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct NamedCluster {
    std::string name;
    ClusterModel model;
    // False until the first training step seeds the centers from real tokens.
    bool initialized = false;
};

// Parameter indices of the blocks (into Model::params()).
struct LayerNormIx {
    std::size_t gamma, beta;
};
struct AttentionIx {
    LayerNormIx norm;
    std::size_t qkv_w, qkv_b, proj_w, proj_b, heads;
};
struct FfnIx {
    LayerNormIx norm;
    std::size_t expand_w, expand_b, dw_w, dw_b, project_w, project_b;
};
struct CamIx {
    LayerNormIx norm;
    std::size_t delta_w, delta_b, b_w, c_w, a_log, skip, dict, gate_w, gate_b, out_w, out_b;
    std::size_t cluster;  // index into Model::clusters()
};
struct UnitIx {
    AttentionIx attn;
    std::optional<CamIx> cam;
    FfnIx ffn;
};
struct StageIx {
    int number = 0;  // 1..6
    std::size_t channels = 0;
    std::vector<UnitIx> units;
};
struct ConvIx {
    std::size_t w, b;
    int stride, pad, out_pad;
    bool transposed;
};

class Model {
public:
    static Model create(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::vector<NamedCluster>& clusters() { return clusters_; }
    const std::vector<NamedCluster>& clusters() const { return clusters_; }

    const StageIx& stage(int number) const;
    bool stage_has_cam(int number) const;

    // Layout accessors for the forward pass.
    const std::array<ConvIx, 4>& down() const { return down_; }
    const std::array<ConvIx, 4>& up() const { return up_; }
    const std::array<ConvIx, 3>& hyper_enc() const { return hyper_enc_; }
    const std::array<ConvIx, 3>& hyper_dec() const { return hyper_dec_; }
    std::size_t prior_loc() const { return prior_loc_; }
    std::size_t prior_scale() const { return prior_scale_; }

private:
    ModelConfig config_;
    ParamStore params_;
    std::vector<NamedCluster> clusters_;
    std::array<StageIx, 6> stages_{};
    std::array<ConvIx, 4> down_{}, up_{};
    std::array<ConvIx, 3> hyper_enc_{}, hyper_dec_{};
    std::size_t prior_loc_ = 0, prior_scale_ = 0;
};

struct GaussianVars {
    ad::Var mu, sigma;
};

// Observer for cluster assignments: stage number (1..6), unit index, assignments, map extents.
using StageAssignmentObserver =
    std::function<void(int stage, std::size_t unit, const AssignmentVector&, std::size_t h, std::size_t w)>;

// One forward pass of the network on a tape. In training mode CAM blocks
// run a k-means step and write the updated centers back into the model.
class ModelPass {
public:
    ModelPass(Model& model, ad::Tape& tape, bool requires_grad, bool training);
    // Runs on caller-bound variables, one per parameter in store order.
    ModelPass(Model& model, ad::Tape& tape, std::vector<ad::Var> vars, bool training);

    const std::vector<ad::Var>& vars() const { return vars_; }
    void set_observer(StageAssignmentObserver observer) { observer_ = std::move(observer); }

    // image: H×W×3 with H, W multiples of 16 → latent H/16 × W/16 × latent_channels.
    ad::Var analysis(ad::Var image);
    // latent → 16× upsampled 3-channel map (unclamped, uncropped).
    ad::Var synthesis(ad::Var latent);
    ad::Var hyper_encode(ad::Var latent);
    // (μ, σ) cropped to the latent extents; σ floored at the scale floor.
    GaussianVars hyper_decode(ad::Var z_hat, std::size_t latent_h, std::size_t latent_w);
    // Factorized prior of ẑ: per-channel location and floored scale.
    ad::Var prior_loc();
    ad::Var prior_scale();

    ad::Var stage(int number, ad::Var x);

private:
    ad::Var conv(const ConvIx& c, ad::Var x);
    AttentionVars attention(const AttentionIx& ix) const;
    FfnVars ffn(const FfnIx& ix) const;
    CamVars cam(const CamIx& ix) const;
    const ad::Var& p(std::size_t i) const { return vars_[i]; }

    Model& model_;
    ad::Tape& tape_;
    bool training_;
    std::vector<ad::Var> vars_;
    StageAssignmentObserver observer_;
};

// Tensor-level conveniences (inference mode, no gradients).
Tensor analysis_transform(const Tensor& image, Model& model);
Tensor synthesis_transform(const Tensor& latent, Model& model, std::size_t out_h, std::size_t out_w);
Tensor hyper_encoder(const Tensor& latent, Model& model);
std::pair<Tensor, Tensor> hyper_decoder(const Tensor& z_hat, Model& model, std::size_t latent_h,
                                        std::size_t latent_w);

// Mirror padding on the bottom/right edges up to the next multiple.
Tensor pad_to_multiple(const Tensor& image, std::size_t multiple);
ad::Var pad_to_multiple(ad::Var image, std::size_t multiple);
Tensor crop(const Tensor& map, std::size_t h, std::size_t w);
ad::Var crop(ad::Var map, std::size_t h, std::size_t w);

}  // namespace camc
