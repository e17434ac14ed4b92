#include "camc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "camc/errors.hpp"
#include "kernels.hpp"

namespace camc::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Tensor* Gradients::find(Var v) const {
    auto it = grads_.find(v.id());
    return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& Gradients::at(Var v) const {
    const Tensor* g = find(v);
    if (!g) throw ContractError("no gradient recorded for node " + std::to_string(v.id()));
    return *g;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule) {
    Node n;
    n.value = std::move(value);
    bool any = false;
    for (const auto& v : inputs) {
        if (v.tape_ != this) throw ContractError("op mixes variables from different tapes");
        any = any || nodes_[v.id_].requires_grad;
    }
    if (grad_enabled_ && any) {
        n.requires_grad = true;
        n.rule = std::move(rule);
        n.inputs.reserve(inputs.size());
        for (const auto& v : inputs) n.inputs.push_back(v.id_);
    }
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Gradients Tape::backward(Var loss) const {
    if (loss.tape_ != this) throw ContractError("loss does not belong to this tape");
    if (value(loss.id_).numel() != 1)
        throw ContractError("backward requires a scalar loss, got " + shape_str(value(loss.id_).shape()));

    Gradients out;
    const NodeId root = loss.id_;
    if (!nodes_[root].requires_grad) return out;

    std::vector<Tensor> grads(root + 1);
    std::vector<char> has(root + 1, 0);
    grads[root] = Tensor(value(root).shape(), 1.0f);
    has[root] = 1;

    std::vector<Tensor*> slots;
    for (NodeId id = root + 1; id-- > 0;) {
        if (!has[id]) continue;
        const Node& node = nodes_[id];
        if (node.is_leaf) {
            if (node.requires_grad) out.grads_.emplace(id, std::move(grads[id]));
            continue;
        }
        if (!node.rule) continue;
        slots.assign(node.inputs.size(), nullptr);
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
            const NodeId in = node.inputs[i];
            if (!nodes_[in].requires_grad) continue;
            if (!has[in]) {
                grads[in] = Tensor::zeros(nodes_[in].value.shape());
                has[in] = 1;
            }
            slots[i] = &grads[in];
        }
        node.rule(node.value, grads[id], slots);
        grads[id] = Tensor();  // interior gradient no longer needed
    }
    return out;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(t.shape()));
}

// Elementwise unary op given f(x) and f'(x, f(x)).
template <class F, class DF>
Var unary(Var a, F f, DF df) {
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
    return a.tape().record(std::move(out), {a}, [a, df](const Tensor& y, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& x = a.value();
        Tensor& dx = *gi[0];
        for (std::size_t i = 0; i < x.numel(); ++i) dx[i] += g[i] * df(x[i], y[i]);
    });
}

real sigmoid_f(real x) {
    if (x >= 0) return 1.0f / (1.0f + std::exp(-x));
    const real e = std::exp(x);
    return e / (1.0f + e);
}

}  // namespace

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return a.tape().record(std::move(out), {a, b}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        for (Tensor* d : gi)
            if (d)
                for (std::size_t i = 0; i < g.numel(); ++i) (*d)[i] += g[i];
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    return a.tape().record(std::move(out), {a, b}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        if (gi[0])
            for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i];
        if (gi[1])
            for (std::size_t i = 0; i < g.numel(); ++i) (*gi[1])[i] -= g[i];
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        if (gi[0])
            for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i] * bv[i];
        if (gi[1])
            for (std::size_t i = 0; i < g.numel(); ++i) (*gi[1])[i] += g[i] * av[i];
    });
}

Var scale(Var a, real s) {
    return unary(a, [s](real x) { return x * s; }, [s](real, real) { return s; });
}

Var add_scalar(Var a, real s) {
    return unary(a, [s](real x) { return x + s; }, [](real, real) { return 1.0f; });
}

Var neg(Var a) { return scale(a, -1.0f); }

Var square(Var a) {
    return unary(a, [](real x) { return x * x; }, [](real x, real) { return 2.0f * x; });
}

Var exp(Var a) {
    return unary(a, [](real x) { return std::exp(x); }, [](real, real y) { return y; });
}

Var softplus(Var a) {
    return unary(
        a, [](real x) { return std::max(x, real(0)) + std::log1p(std::exp(-std::abs(x))); },
        [](real x, real) { return sigmoid_f(x); });
}

Var sigmoid(Var a) {
    return unary(a, sigmoid_f, [](real, real y) { return y * (1.0f - y); });
}

Var silu(Var a) {
    return unary(
        a, [](real x) { return x * sigmoid_f(x); },
        [](real x, real) {
            const real s = sigmoid_f(x);
            return s * (1.0f + x * (1.0f - s));
        });
}

Var gelu(Var a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary(
        a, [](real x) { return static_cast<real>(0.5 * x * std::erfc(-x * inv_sqrt2)); },
        [](real x, real) {
            const double cdf = 0.5 * std::erfc(-x * inv_sqrt2);
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * double(x) * x);
            return static_cast<real>(cdf + x * pdf);
        });
}

Var clamp(Var a, real lo, real hi) {
    return unary(
        a, [lo, hi](real x) { return std::clamp(x, lo, hi); },
        [lo, hi](real x, real) { return (x >= lo && x <= hi) ? 1.0f : 0.0f; });
}

Var lower_bound(Var a, real bound) {
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::max(x[i], bound);
    return a.tape().record(std::move(out), {a}, [a, bound](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& x = a.value();
        for (std::size_t i = 0; i < x.numel(); ++i)
            if (x[i] >= bound || g[i] < 0.0f) (*gi[0])[i] += g[i];
    });
}

Var round_ste(Var a) {
    return unary(a, [](real x) { return std::round(x); }, [](real, real) { return 1.0f; });
}

Var stop_gradient(Var a) { return a.tape().constant(a.value()); }

Var sum(Var a) {
    double acc = 0.0;
    for (real v : a.value().data()) acc += v;
    return a.tape().record(Tensor::scalar(static_cast<real>(acc)), {a},
                           [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                               const real s = g[0];
                               for (auto& d : gi[0]->data()) d += s;
                           });
}

Var mean(Var a) {
    const std::size_t n = a.value().numel();
    if (n == 0) throw DimensionError("mean of empty tensor");
    return scale(sum(a), 1.0f / static_cast<real>(n));
}

Var reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return a.tape().record(std::move(out), {a}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        auto d = gi[0]->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    });
}

Var add_row(Var x, Var row) {
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    const std::size_t c = xv.cols();
    if (rv.numel() != c)
        throw DimensionError("add_row: row of " + std::to_string(rv.numel()) + " for " + shape_str(xv.shape()));
    Tensor out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t j = 0; j < c; ++j) out.at(r, j) += rv[j];
    return x.tape().record(std::move(out), {x, row}, [c](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        if (gi[0])
            for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i];
        if (gi[1])
            for (std::size_t i = 0; i < g.numel(); ++i) (*gi[1])[i % c] += g[i];
    });
}

Var mul_row(Var x, Var row) {
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    const std::size_t c = xv.cols();
    if (rv.numel() != c)
        throw DimensionError("mul_row: row of " + std::to_string(rv.numel()) + " for " + shape_str(xv.shape()));
    Tensor out = xv;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= rv[i % c];
    return x.tape().record(std::move(out), {x, row}, [x, row, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& xv = x.value();
        const Tensor& rv = row.value();
        if (gi[0])
            for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i] * rv[i % c];
        if (gi[1])
            for (std::size_t i = 0; i < g.numel(); ++i) (*gi[1])[i % c] += g[i] * xv[i];
    });
}

Var broadcast_rows(Var row, std::size_t rows) {
    const Tensor& rv = row.value();
    const std::size_t c = rv.numel();
    Tensor out({rows, c});
    for (std::size_t r = 0; r < rows; ++r) std::copy(rv.data().begin(), rv.data().end(), out.row(r).begin());
    return row.tape().record(std::move(out), {row}, [c](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i % c] += g[i];
    });
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank(bv, 2, "matmul");
    if (av.rank() < 2) throw DimensionError("matmul: left operand must be at least 2-D, got " + shape_str(av.shape()));
    const std::size_t m = av.rows(), k = av.cols(), n = bv.dim(1);
    if (bv.dim(0) != k)
        throw DimensionError("matmul: inner extents differ " + shape_str(av.shape()) + " · " + shape_str(bv.shape()));
    Shape shape = av.shape();
    shape.back() = n;
    Tensor out(std::move(shape));
    kernels::gemm(av.ptr(), bv.ptr(), out.ptr(), m, k, n);
    return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        if (gi[0]) kernels::gemm_nt(g.ptr(), b.value().ptr(), gi[0]->ptr(), m, n, k, true);
        if (gi[1]) kernels::gemm_tn(a.value().ptr(), g.ptr(), gi[1]->ptr(), k, m, n, true);
    });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
    const Tensor& xv = x.value();
    const std::size_t c = xv.cols();
    if (begin > end || end > c) throw DimensionError("slice_cols: range out of bounds for " + shape_str(xv.shape()));
    const std::size_t w = end - begin;
    Shape shape = xv.shape();
    shape.back() = w;
    Tensor out(std::move(shape));
    for (std::size_t r = 0; r < xv.rows(); ++r)
        std::copy_n(xv.ptr() + r * c + begin, w, out.ptr() + r * w);
    return x.tape().record(std::move(out), {x}, [begin, c, w](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const std::size_t rows = w == 0 ? 0 : g.numel() / w;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < w; ++j) (*gi[0])[r * c + begin + j] += g[r * w + j];
    });
}

Var gather_rows(Var x, std::span<const std::int64_t> index) {
    const Tensor& xv = x.value();
    const std::size_t c = xv.cols();
    const auto n_in = static_cast<std::int64_t>(xv.rows());
    auto idx = std::make_shared<std::vector<std::int64_t>>(index.begin(), index.end());
    Tensor out({idx->size(), c});
    for (std::size_t i = 0; i < idx->size(); ++i) {
        const std::int64_t src = (*idx)[i];
        if (src >= n_in) throw DimensionError("gather_rows: index " + std::to_string(src) + " out of range");
        if (src >= 0) std::copy_n(xv.ptr() + src * c, c, out.ptr() + i * c);
    }
    return x.tape().record(std::move(out), {x}, [idx, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        for (std::size_t i = 0; i < idx->size(); ++i) {
            const std::int64_t src = (*idx)[i];
            if (src < 0) continue;
            real* d = gi[0]->ptr() + src * c;
            const real* s = g.ptr() + i * c;
            for (std::size_t j = 0; j < c; ++j) d[j] += s[j];
        }
    });
}

Var layer_norm(Var x, Var gamma, Var beta, real eps) {
    const Tensor& xv = x.value();
    const std::size_t c = xv.cols(), rows = xv.rows();
    if (gamma.value().numel() != c || beta.value().numel() != c)
        throw DimensionError("layer_norm: affine parameters do not match " + shape_str(xv.shape()));
    auto stats = std::make_shared<std::vector<double>>(2 * rows);  // mean, rstd
    Tensor out(xv.shape());
    const real* gm = gamma.value().ptr();
    const real* bt = beta.value().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        const real* xr = xv.ptr() + r * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += xr[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(c);
        const double rstd = 1.0 / std::sqrt(var + eps);
        (*stats)[2 * r] = mu;
        (*stats)[2 * r + 1] = rstd;
        real* o = out.ptr() + r * c;
        for (std::size_t j = 0; j < c; ++j) o[j] = static_cast<real>((xr[j] - mu) * rstd) * gm[j] + bt[j];
    }
    return x.tape().record(
        std::move(out), {x, gamma, beta},
        [x, gamma, stats, c, rows](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
            const Tensor& xv = x.value();
            const real* gm = gamma.value().ptr();
            std::vector<double> xhat(c), dxhat(c);
            for (std::size_t r = 0; r < rows; ++r) {
                const double mu = (*stats)[2 * r], rstd = (*stats)[2 * r + 1];
                const real* xr = xv.ptr() + r * c;
                const real* gr = g.ptr() + r * c;
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    xhat[j] = (xr[j] - mu) * rstd;
                    dxhat[j] = double(gr[j]) * gm[j];
                    m1 += dxhat[j];
                    m2 += dxhat[j] * xhat[j];
                }
                m1 /= static_cast<double>(c);
                m2 /= static_cast<double>(c);
                if (gi[0]) {
                    real* d = gi[0]->ptr() + r * c;
                    for (std::size_t j = 0; j < c; ++j) d[j] += static_cast<real>(rstd * (dxhat[j] - m1 - xhat[j] * m2));
                }
                if (gi[1])
                    for (std::size_t j = 0; j < c; ++j) (*gi[1])[j] += static_cast<real>(gr[j] * xhat[j]);
                if (gi[2])
                    for (std::size_t j = 0; j < c; ++j) (*gi[2])[j] += gr[j];
            }
        });
}

// ---- convolution ---------------------------------------------------------------

namespace {

struct ConvGeom {
    int h, w, cin, cout, k, stride, pad, ho, wo;
};

// Rows of the patch matrix handled per GEMM call; bounds scratch memory.
std::size_t chunk_rows(std::size_t row_width) {
    constexpr std::size_t budget = std::size_t{1} << 21;  // floats
    return std::max<std::size_t>(1, budget / std::max<std::size_t>(1, row_width));
}

// Copies the k×k×C patch feeding output position p (of an `wo`-wide grid)
// from a map of extent h×w, zero outside. Used for conv im2col and for the
// adjoint gather of the transposed conv.
void gather_patch(const real* src, int h, int w, int c, int k, int stride, int pad, int wo, std::size_t p,
                  real* dst) {
    const int oy = static_cast<int>(p / wo), ox = static_cast<int>(p % wo);
    for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < k; ++kx) {
            const int ixx = ox * stride - pad + kx;
            real* d = dst + (static_cast<std::size_t>(ky) * k + kx) * c;
            if (iy < 0 || iy >= h || ixx < 0 || ixx >= w)
                std::fill_n(d, c, 0.0f);
            else
                std::copy_n(src + (static_cast<std::size_t>(iy) * w + ixx) * c, c, d);
        }
    }
}

// Adjoint of gather_patch: accumulates a patch row back into the map.
void scatter_patch(const real* patch, int h, int w, int c, int k, int stride, int pad, int wo, std::size_t p,
                   real* dst) {
    const int oy = static_cast<int>(p / wo), ox = static_cast<int>(p % wo);
    for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
            const int ixx = ox * stride - pad + kx;
            if (ixx < 0 || ixx >= w) continue;
            const real* s = patch + (static_cast<std::size_t>(ky) * k + kx) * c;
            real* d = dst + (static_cast<std::size_t>(iy) * w + ixx) * c;
            for (int j = 0; j < c; ++j) d[j] += s[j];
        }
    }
}

void add_bias_rows(real* out, const real* bias, std::size_t rows, std::size_t c) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] += bias[j];
}

void bias_grad(const Tensor& g, Tensor& db) {
    const std::size_t c = db.numel();
    for (std::size_t i = 0; i < g.numel(); ++i) db[i % c] += g[i];
}

}  // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_rank(xv, 3, "conv2d input");
    require_rank(wv, 4, "conv2d weight");
    ConvGeom gm{};
    gm.h = static_cast<int>(xv.dim(0));
    gm.w = static_cast<int>(xv.dim(1));
    gm.cin = static_cast<int>(xv.dim(2));
    gm.k = static_cast<int>(wv.dim(0));
    gm.cout = static_cast<int>(wv.dim(3));
    gm.stride = stride;
    gm.pad = pad;
    if (wv.dim(1) != wv.dim(0) || static_cast<int>(wv.dim(2)) != gm.cin)
        throw DimensionError("conv2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                             shape_str(xv.shape()));
    if (b.value().numel() != static_cast<std::size_t>(gm.cout)) throw DimensionError("conv2d: bias size mismatch");
    if (stride < 1 || gm.h + 2 * pad < gm.k || gm.w + 2 * pad < gm.k)
        throw DimensionError("conv2d: input " + shape_str(xv.shape()) + " too small for kernel");
    gm.ho = (gm.h + 2 * pad - gm.k) / stride + 1;
    gm.wo = (gm.w + 2 * pad - gm.k) / stride + 1;

    const std::size_t kk = static_cast<std::size_t>(gm.k) * gm.k * gm.cin;
    const std::size_t positions = static_cast<std::size_t>(gm.ho) * gm.wo;
    const std::size_t cout = gm.cout;
    Tensor out({static_cast<std::size_t>(gm.ho), static_cast<std::size_t>(gm.wo), cout});
    const std::size_t step = chunk_rows(kk);
    std::vector<real> cols(std::min(step, positions) * kk);
    for (std::size_t p0 = 0; p0 < positions; p0 += step) {
        const std::size_t rows = std::min(step, positions - p0);
        for (std::size_t r = 0; r < rows; ++r)
            gather_patch(xv.ptr(), gm.h, gm.w, gm.cin, gm.k, stride, pad, gm.wo, p0 + r, cols.data() + r * kk);
        kernels::gemm(cols.data(), wv.ptr(), out.ptr() + p0 * cout, rows, kk, cout);
    }
    add_bias_rows(out.ptr(), b.value().ptr(), positions, cout);

    return x.tape().record(std::move(out), {x, w, b}, [x, w, gm, kk, positions, cout](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& xv = x.value();
        const Tensor& wv = w.value();
        const std::size_t step = chunk_rows(kk);
        std::vector<real> cols(std::min(step, positions) * kk);
        std::vector<real> dcols(gi[0] ? cols.size() : 0);
        for (std::size_t p0 = 0; p0 < positions; p0 += step) {
            const std::size_t rows = std::min(step, positions - p0);
            const real* gr = g.ptr() + p0 * cout;
            if (gi[1]) {
                for (std::size_t r = 0; r < rows; ++r)
                    gather_patch(xv.ptr(), gm.h, gm.w, gm.cin, gm.k, gm.stride, gm.pad, gm.wo, p0 + r, cols.data() + r * kk);
                kernels::gemm_tn(cols.data(), gr, gi[1]->ptr(), kk, rows, cout, true);
            }
            if (gi[0]) {
                kernels::gemm_nt(gr, wv.ptr(), dcols.data(), rows, cout, kk);
                for (std::size_t r = 0; r < rows; ++r)
                    scatter_patch(dcols.data() + r * kk, gm.h, gm.w, gm.cin, gm.k, gm.stride, gm.pad, gm.wo, p0 + r, gi[0]->ptr());
            }
        }
        if (gi[2]) bias_grad(g, *gi[2]);
    });
}

Var conv_transpose2d(Var x, Var w, Var b, int stride, int pad, int out_pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_rank(xv, 3, "conv_transpose2d input");
    require_rank(wv, 4, "conv_transpose2d weight");
    ConvGeom gm{};
    // Roles swap relative to conv2d: (h, w) is the output map, (ho, wo) the input grid.
    gm.ho = static_cast<int>(xv.dim(0));
    gm.wo = static_cast<int>(xv.dim(1));
    gm.cin = static_cast<int>(xv.dim(2));
    gm.k = static_cast<int>(wv.dim(1));
    gm.cout = static_cast<int>(wv.dim(3));
    gm.stride = stride;
    gm.pad = pad;
    if (static_cast<int>(wv.dim(0)) != gm.cin || wv.dim(2) != wv.dim(1))
        throw DimensionError("conv_transpose2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                             shape_str(xv.shape()));
    if (b.value().numel() != static_cast<std::size_t>(gm.cout))
        throw DimensionError("conv_transpose2d: bias size mismatch");
    gm.h = (gm.ho - 1) * stride - 2 * pad + gm.k + out_pad;
    gm.w = (gm.wo - 1) * stride - 2 * pad + gm.k + out_pad;
    if (stride < 1 || gm.h <= 0 || gm.w <= 0) throw DimensionError("conv_transpose2d: empty output");

    const std::size_t kk = static_cast<std::size_t>(gm.k) * gm.k * gm.cout;
    const std::size_t positions = static_cast<std::size_t>(gm.ho) * gm.wo;
    const std::size_t cin = gm.cin;
    Tensor out({static_cast<std::size_t>(gm.h), static_cast<std::size_t>(gm.w), static_cast<std::size_t>(gm.cout)});
    const std::size_t step = chunk_rows(kk);
    std::vector<real> cols(std::min(step, positions) * kk);
    for (std::size_t p0 = 0; p0 < positions; p0 += step) {
        const std::size_t rows = std::min(step, positions - p0);
        kernels::gemm(xv.ptr() + p0 * cin, wv.ptr(), cols.data(), rows, cin, kk);
        for (std::size_t r = 0; r < rows; ++r)
            scatter_patch(cols.data() + r * kk, gm.h, gm.w, gm.cout, gm.k, stride, pad, gm.wo, p0 + r, out.ptr());
    }
    add_bias_rows(out.ptr(), b.value().ptr(), static_cast<std::size_t>(gm.h) * gm.w, gm.cout);

    return x.tape().record(std::move(out), {x, w, b}, [x, w, gm, kk, positions, cin](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& xv = x.value();
        const Tensor& wv = w.value();
        const std::size_t step = chunk_rows(kk);
        std::vector<real> dcols(std::min(step, positions) * kk);
        for (std::size_t p0 = 0; p0 < positions; p0 += step) {
            const std::size_t rows = std::min(step, positions - p0);
            for (std::size_t r = 0; r < rows; ++r)
                gather_patch(g.ptr(), gm.h, gm.w, gm.cout, gm.k, gm.stride, gm.pad, gm.wo, p0 + r, dcols.data() + r * kk);
            if (gi[0]) kernels::gemm_nt(dcols.data(), wv.ptr(), gi[0]->ptr() + p0 * cin, rows, kk, cin, true);
            if (gi[1]) kernels::gemm_tn(xv.ptr() + p0 * cin, dcols.data(), gi[1]->ptr(), cin, rows, kk, true);
        }
        if (gi[2]) bias_grad(g, *gi[2]);
    });
}

Var depthwise_conv2d(Var x, Var w, Var b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_rank(xv, 3, "depthwise_conv2d input");
    require_rank(wv, 3, "depthwise_conv2d weight");
    const int h = static_cast<int>(xv.dim(0)), wd = static_cast<int>(xv.dim(1));
    const int c = static_cast<int>(xv.dim(2));
    const int k = static_cast<int>(wv.dim(0));
    if (wv.dim(1) != wv.dim(0) || static_cast<int>(wv.dim(2)) != c || k % 2 == 0)
        throw DimensionError("depthwise_conv2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                             shape_str(xv.shape()));
    if (b.value().numel() != static_cast<std::size_t>(c)) throw DimensionError("depthwise_conv2d: bias size mismatch");
    const int r = k / 2;
    Tensor out(xv.shape());
    add_bias_rows(out.ptr(), b.value().ptr(), static_cast<std::size_t>(h) * wd, c);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < wd; ++xx) {
            real* o = out.ptr() + (static_cast<std::size_t>(y) * wd + xx) * c;
            for (int ky = 0; ky < k; ++ky) {
                const int iy = y + ky - r;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = xx + kx - r;
                    if (ix < 0 || ix >= wd) continue;
                    const real* s = xv.ptr() + (static_cast<std::size_t>(iy) * wd + ix) * c;
                    const real* kw = wv.ptr() + (static_cast<std::size_t>(ky) * k + kx) * c;
                    for (int j = 0; j < c; ++j) o[j] += kw[j] * s[j];
                }
            }
        }
    return x.tape().record(std::move(out), {x, w, b}, [x, w, h, wd, c, k, r](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& xv = x.value();
        const Tensor& wv = w.value();
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < wd; ++xx) {
                const real* gr = g.ptr() + (static_cast<std::size_t>(y) * wd + xx) * c;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = y + ky - r;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = xx + kx - r;
                        if (ix < 0 || ix >= wd) continue;
                        const std::size_t src = (static_cast<std::size_t>(iy) * wd + ix) * c;
                        const std::size_t kof = (static_cast<std::size_t>(ky) * k + kx) * c;
                        if (gi[0])
                            for (int j = 0; j < c; ++j) (*gi[0])[src + j] += wv[kof + j] * gr[j];
                        if (gi[1])
                            for (int j = 0; j < c; ++j) (*gi[1])[kof + j] += xv[src + j] * gr[j];
                    }
                }
            }
        if (gi[2]) bias_grad(g, *gi[2]);
    });
}

// ---- entropy ---------------------------------------------------------------------

namespace {

constexpr double kLikelihoodFloor = 1e-9;

double std_normal_cdf(double t) { return 0.5 * std::erfc(-t * std::numbers::sqrt2 / 2.0); }
double std_normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

Var gaussian_bits(Var residual, Var sigma) {
    require_same_shape(residual.value(), sigma.value(), "gaussian_bits");
    const Tensor& v = residual.value();
    const Tensor& s = sigma.value();
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.numel(); ++i) {
        if (!(s[i] > 0.0f)) throw NumericError("gaussian_bits: non-positive scale");
        const double a = std::abs(double(v[i]));
        // Evaluate on the left tail for accuracy.
        const double p = std_normal_cdf((0.5 - a) / s[i]) - std_normal_cdf((-0.5 - a) / s[i]);
        out[i] = static_cast<real>(-std::log2(std::max(p, kLikelihoodFloor)));
    }
    return residual.tape().record(std::move(out), {residual, sigma}, [residual, sigma](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& v = residual.value();
        const Tensor& s = sigma.value();
        for (std::size_t i = 0; i < v.numel(); ++i) {
            const double sg = s[i];
            const double a = std::abs(double(v[i]));
            const double uh = (0.5 - a) / sg, ul = (-0.5 - a) / sg;
            const double p = std::max(std_normal_cdf(uh) - std_normal_cdf(ul), kLikelihoodFloor);
            const double dbits_dp = -1.0 / (p * std::numbers::ln2);
            const double ph = std_normal_pdf(uh), pl = std_normal_pdf(ul);
            if (gi[0]) {
                const double sign = v[i] > 0 ? 1.0 : (v[i] < 0 ? -1.0 : 0.0);
                const double dp_dv = sign * (pl - ph) / sg;
                (*gi[0])[i] += static_cast<real>(g[i] * dbits_dp * dp_dv);
            }
            if (gi[1]) {
                const double dp_ds = (-ph * uh + pl * ul) / sg;
                (*gi[1])[i] += static_cast<real>(g[i] * dbits_dp * dp_ds);
            }
        }
    });
}

}  // namespace camc::ad
