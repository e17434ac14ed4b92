#include "camc/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "camc/errors.hpp"
#include "camc/sequencing.hpp"

namespace camc {
namespace {

ad::Var norm(ad::Var tokens, const LayerNormVars& n) { return ad::layer_norm(tokens, n.gamma, n.beta); }

void require_map(const Tensor& x, const char* op) {
    if (x.rank() != 3) throw DimensionError(std::string(op) + " expects an H×W×d map, got " + shape_str(x.shape()));
}

}  // namespace

ad::Var window_attention_core(ad::Var q, ad::Var k, ad::Var v, std::size_t tokens_per_window, std::size_t heads,
                              std::span<const std::uint8_t> key_valid) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    if (qv.shape() != kv.shape() || qv.shape() != vv.shape() || qv.rank() != 2)
        throw DimensionError("attention core expects equal rows×d q, k, v");
    const std::size_t rows = qv.dim(0), c = qv.dim(1), t = tokens_per_window;
    if (heads == 0 || c % heads != 0)
        throw ConfigError("channel count " + std::to_string(c) + " not divisible by " + std::to_string(heads) +
                          " heads");
    if (t == 0 || rows % t != 0) throw DimensionError("attention rows not a multiple of the window token count");
    if (!key_valid.empty() && key_valid.size() != rows) throw DimensionError("attention key mask length mismatch");

    const std::size_t windows = rows / t, dh = c / heads;
    const real scale = 1.0f / std::sqrt(static_cast<real>(dh));
    auto valid = std::make_shared<std::vector<std::uint8_t>>(key_valid.begin(), key_valid.end());
    if (valid->empty()) valid->assign(rows, 1);
    auto probs = std::make_shared<std::vector<real>>(windows * heads * t * t, 0.0f);
    Tensor out({rows, c});
    std::vector<double> srow(t);

    for (std::size_t w = 0; w < windows; ++w) {
        const std::size_t r0 = w * t;
        for (std::size_t h = 0; h < heads; ++h) {
            real* pw = probs->data() + (w * heads + h) * t * t;
            for (std::size_t i = 0; i < t; ++i) {
                const real* qi = qv.ptr() + (r0 + i) * c + h * dh;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < t; ++j) {
                    if (!(*valid)[r0 + j]) {
                        srow[j] = -std::numeric_limits<double>::infinity();
                        continue;
                    }
                    const real* kj = kv.ptr() + (r0 + j) * c + h * dh;
                    real dot = 0.0f;
                    for (std::size_t e = 0; e < dh; ++e) dot += qi[e] * kj[e];
                    srow[j] = double(dot * scale);
                    mx = std::max(mx, srow[j]);
                }
                if (std::isinf(mx)) continue;  // every key masked: zero output
                double z = 0.0;
                for (std::size_t j = 0; j < t; ++j) {
                    srow[j] = std::isinf(srow[j]) ? 0.0 : std::exp(srow[j] - mx);
                    z += srow[j];
                }
                real* oi = out.ptr() + (r0 + i) * c + h * dh;
                for (std::size_t j = 0; j < t; ++j) {
                    const real p = static_cast<real>(srow[j] / z);
                    pw[i * t + j] = p;
                    if (p == 0.0f) continue;
                    const real* vj = vv.ptr() + (r0 + j) * c + h * dh;
                    for (std::size_t e = 0; e < dh; ++e) oi[e] += p * vj[e];
                }
            }
        }
    }

    return q.tape().record(std::move(out), {q, k, v}, [q, k, v, probs, windows, heads, t, c, dh, scale](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& qv = q.value();
        const Tensor& kv = k.value();
        const Tensor& vv = v.value();
        std::vector<real> dp(t * t);
        for (std::size_t w = 0; w < windows; ++w) {
            const std::size_t r0 = w * t;
            for (std::size_t h = 0; h < heads; ++h) {
                const real* pw = probs->data() + (w * heads + h) * t * t;
                for (std::size_t i = 0; i < t; ++i) {
                    const real* gi_row = g.ptr() + (r0 + i) * c + h * dh;
                    double rowdot = 0.0;
                    for (std::size_t j = 0; j < t; ++j) {
                        const real p = pw[i * t + j];
                        const real* vj = vv.ptr() + (r0 + j) * c + h * dh;
                        real d = 0.0f;
                        for (std::size_t e = 0; e < dh; ++e) d += gi_row[e] * vj[e];
                        dp[i * t + j] = d;
                        rowdot += double(p) * d;
                        if (gi[2] && p != 0.0f) {
                            real* dv = gi[2]->ptr() + (r0 + j) * c + h * dh;
                            for (std::size_t e = 0; e < dh; ++e) dv[e] += p * gi_row[e];
                        }
                    }
                    for (std::size_t j = 0; j < t; ++j) {
                        const real p = pw[i * t + j];
                        if (p == 0.0f) continue;
                        const real ds = static_cast<real>(p * (dp[i * t + j] - rowdot)) * scale;
                        if (gi[0]) {
                            real* dq = gi[0]->ptr() + (r0 + i) * c + h * dh;
                            const real* kj = kv.ptr() + (r0 + j) * c + h * dh;
                            for (std::size_t e = 0; e < dh; ++e) dq[e] += ds * kj[e];
                        }
                        if (gi[1]) {
                            real* dk = gi[1]->ptr() + (r0 + j) * c + h * dh;
                            const real* qi = qv.ptr() + (r0 + i) * c + h * dh;
                            for (std::size_t e = 0; e < dh; ++e) dk[e] += ds * qi[e];
                        }
                    }
                }
            }
        }
    });
}

ad::Var window_attention(ad::Var x, const AttentionVars& w, std::size_t window) {
    const Tensor& xv = x.value();
    require_map(xv, "window_attention");
    if (window == 0) throw ConfigError("window size must be positive");
    const std::size_t h = xv.dim(0), wd = xv.dim(1), c = xv.dim(2);
    if (w.heads == 0 || c % w.heads != 0)
        throw ConfigError("channel count " + std::to_string(c) + " not divisible by " + std::to_string(w.heads) +
                          " heads");
    const std::size_t hp = (h + window - 1) / window * window;
    const std::size_t wp = (wd + window - 1) / window * window;
    const std::size_t t = window * window;

    // Raster of windows, raster inside each window; -1 marks padding.
    std::vector<std::int64_t> part(hp * wp);
    std::vector<std::int64_t> unpart(h * wd);
    std::vector<std::uint8_t> valid(hp * wp);
    std::size_t row = 0;
    for (std::size_t by = 0; by < hp; by += window)
        for (std::size_t bx = 0; bx < wp; bx += window)
            for (std::size_t ty = 0; ty < window; ++ty)
                for (std::size_t tx = 0; tx < window; ++tx, ++row) {
                    const std::size_t y = by + ty, xx = bx + tx;
                    const bool inside = y < h && xx < wd;
                    part[row] = inside ? static_cast<std::int64_t>(y * wd + xx) : -1;
                    valid[row] = inside ? 1 : 0;
                    if (inside) unpart[y * wd + xx] = static_cast<std::int64_t>(row);
                }

    ad::Var tokens = ad::reshape(x, {h * wd, c});
    ad::Var xw = ad::gather_rows(tokens, part);
    ad::Var qkv = ad::add_row(ad::matmul(norm(xw, w.norm), w.qkv_w), w.qkv_b);
    ad::Var q = ad::slice_cols(qkv, 0, c);
    ad::Var k = ad::slice_cols(qkv, c, 2 * c);
    ad::Var v = ad::slice_cols(qkv, 2 * c, 3 * c);
    ad::Var o = window_attention_core(q, k, v, t, w.heads, valid);
    o = ad::add_row(ad::matmul(o, w.proj_w), w.proj_b);
    ad::Var back = ad::gather_rows(o, unpart);
    return ad::reshape(ad::add(tokens, back), {h, wd, c});
}

ad::Var conv_ffn(ad::Var x, const FfnVars& w) {
    const Tensor& xv = x.value();
    require_map(xv, "conv_ffn");
    const std::size_t h = xv.dim(0), wd = xv.dim(1), c = xv.dim(2);
    ad::Var tokens = ad::reshape(x, {h * wd, c});
    ad::Var e = ad::add_row(ad::matmul(norm(tokens, w.norm), w.expand_w), w.expand_b);
    const std::size_t hidden = e.value().cols();
    ad::Var dw = ad::depthwise_conv2d(ad::reshape(e, {h, wd, hidden}), w.dw_w, w.dw_b);
    ad::Var a = ad::gelu(dw);
    ad::Var o = ad::add_row(ad::matmul(ad::reshape(a, {h * wd, hidden}), w.project_w), w.project_b);
    return ad::reshape(ad::add(tokens, o), {h, wd, c});
}

ad::Var cam_block(ad::Var x, const CamVars& w, ClusterModel& cluster, bool training,
                  const AssignmentObserver& observer) {
    const Tensor& xv = x.value();
    require_map(xv, "cam_block");
    const std::size_t h = xv.dim(0), wd = xv.dim(1), c = xv.dim(2);
    const std::size_t k = cluster.k();
    if (w.dict.value().rank() != 2 || w.dict.value().dim(0) != k)
        throw ContractError("prompt dictionary rows (" + shape_str(w.dict.value().shape()) +
                            ") differ from cluster count " + std::to_string(k));
    if (cluster.dim() != c) throw DimensionError("cluster centers do not match block width");

    ad::Var tokens = ad::reshape(x, {h * wd, c});
    ad::Var normed = norm(tokens, w.norm);

    AssignmentVector g;
    if (training) {
        auto step = kmeans_train_step(normed.value(), cluster);
        cluster = std::move(step.model);
        g = std::move(step.assignments);
    } else {
        g = assign_inference(normed.value(), cluster);
    }
    if (observer) observer(g, h, wd);

    const Permutation perm = build_permutation(g, k);
    ad::Var seq = apply_permutation(perm, normed);
    const AssignmentVector g_seq = permute_assignment(perm, g);
    ad::Var prompts = prompt_lookup(g_seq, w.dict);
    ad::Var scanned = prompted_scan(seq, w.ssm, prompts);
    ad::Var restored = restore_permutation(perm, scanned);

    ad::Var gate = ad::silu(ad::add_row(ad::matmul(normed, w.gate_w), w.gate_b));
    ad::Var o = ad::add_row(ad::matmul(ad::mul(restored, gate), w.out_w), w.out_b);
    return ad::reshape(ad::add(tokens, o), {h, wd, c});
}

}  // namespace camc
