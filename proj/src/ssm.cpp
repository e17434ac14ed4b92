#include "camc/ssm.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "camc/errors.hpp"

namespace camc {
namespace {

// Δ·g(ΔA) with g(e) = (e^e − 1)/e, plus its partials in Δ and A.
struct ZohInput {
    double a_bar, f, df_ddelta, df_da;
};

ZohInput zoh(double delta, double a) {
    const double e = delta * a;
    ZohInput z{};
    z.a_bar = std::exp(e);
    if (std::abs(e) < kZohTaylorThreshold) {
        z.f = delta * (1.0 + 0.5 * e);
        z.df_ddelta = 1.0 + e;
        z.df_da = 0.5 * delta * delta;
    } else {
        z.f = std::expm1(e) / a;
        z.df_ddelta = z.a_bar;
        z.df_da = (e * z.a_bar - std::expm1(e)) / (a * a);
    }
    return z;
}

struct ScanDims {
    std::size_t n, d, ds;
};

ScanDims check_scan_shapes(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                           const Tensor* prompt, const Tensor& skip) {
    if (u.rank() != 2) throw DimensionError("scan input must be N×d, got " + shape_str(u.shape()));
    const ScanDims dims{u.dim(0), u.dim(1), a.cols()};
    auto expect = [](const Tensor& t, std::size_t r, std::size_t c, const char* what) {
        if (t.rank() != 2 || t.dim(0) != r || t.dim(1) != c)
            throw DimensionError(std::string("scan operand ") + what + " has shape " + shape_str(t.shape()) +
                                 ", expected [" + std::to_string(r) + "x" + std::to_string(c) + "]");
    };
    expect(delta, dims.n, dims.d, "delta");
    expect(a, dims.d, dims.ds, "A");
    expect(b, dims.n, dims.ds, "B");
    expect(c, dims.n, dims.ds, "C");
    if (prompt) expect(*prompt, dims.n, dims.ds, "prompt");
    if (skip.numel() != dims.d) throw DimensionError("scan skip gain must have d entries");
    if (dims.ds == 0) throw DimensionError("scan state width must be >= 1");
    return dims;
}

// Forward sweep. When `states` is non-null it receives h for every token (N×d×d_s).
void scan_forward(const ScanDims& dm, const real* u, const real* delta, const real* a, const real* b,
                  const real* c, const real* prompt, const real* skip, real* y, double* y64,
                  std::vector<double>* states) {
    std::vector<double> h(dm.d * dm.ds, 0.0);
    if (states) states->assign(dm.n * dm.d * dm.ds, 0.0);
    for (std::size_t i = 0; i < dm.n; ++i) {
        const real* bi = b + i * dm.ds;
        const real* ci = c + i * dm.ds;
        const real* pi = prompt ? prompt + i * dm.ds : nullptr;
        for (std::size_t ch = 0; ch < dm.d; ++ch) {
            const double dl = delta[i * dm.d + ch];
            if (!(dl > 0.0)) throw NumericError("scan: non-positive step at token " + std::to_string(i));
            const double uc = u[i * dm.d + ch];
            double* hc = h.data() + ch * dm.ds;
            const real* ac = a + ch * dm.ds;
            double acc = 0.0;
            for (std::size_t s = 0; s < dm.ds; ++s) {
                const ZohInput z = zoh(dl, ac[s]);
                hc[s] = z.a_bar * hc[s] + z.f * double(bi[s]) * uc;
                const double read = pi ? double(ci[s]) + double(pi[s]) : double(ci[s]);
                acc += read * hc[s];
            }
            const double out = acc + double(skip[ch]) * uc;
            if (!std::isfinite(out)) throw NumericError("scan: non-finite output at token " + std::to_string(i));
            if (y) y[i * dm.d + ch] = static_cast<real>(out);
            if (y64) y64[i * dm.d + ch] = out;
        }
        if (states) std::copy(h.begin(), h.end(), states->begin() + i * dm.d * dm.ds);
    }
}

}  // namespace

ZohCoefficients discretize(double delta, double a, double b) {
    if (!(delta > 0.0)) throw ContractError("discretize: step must be positive");
    const ZohInput z = zoh(delta, a);
    return {z.a_bar, z.f * b};
}

SsmParams SsmParams::init(std::size_t d, std::size_t d_s, std::mt19937_64& rng) {
    if (d == 0 || d_s == 0) throw ConfigError("scan needs d >= 1 and d_s >= 1");
    SsmParams p;
    const real bound = 1.0f / std::sqrt(static_cast<real>(d));
    std::uniform_real_distribution<real> dist(-bound, bound);
    auto fill = [&](Tensor& t, real gain) {
        for (auto& v : t.data()) v = gain * dist(rng);
    };
    p.delta_w = Tensor({d, d});
    fill(p.delta_w, 0.1f);
    // softplus(bias) = 0.1
    p.delta_b = Tensor({d}, static_cast<real>(std::log(std::expm1(0.1))));
    p.b_w = Tensor({d, d_s});
    fill(p.b_w, 1.0f);
    p.c_w = Tensor({d, d_s});
    fill(p.c_w, 1.0f);
    p.a_log = Tensor({d, d_s});
    for (std::size_t ch = 0; ch < d; ++ch)
        for (std::size_t s = 0; s < d_s; ++s) p.a_log.at(ch, s) = static_cast<real>(std::log(double(s + 1)));
    p.skip = Tensor({d}, 1.0f);
    return p;
}

SsmVars SsmVars::bind(ad::Tape& tape, const SsmParams& p, bool requires_grad) {
    return {tape.leaf(p.delta_w, requires_grad), tape.leaf(p.delta_b, requires_grad),
            tape.leaf(p.b_w, requires_grad),     tape.leaf(p.c_w, requires_grad),
            tape.leaf(p.a_log, requires_grad),   tape.leaf(p.skip, requires_grad)};
}

std::vector<double> scan_recurrence_f64(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
                                        const Tensor& c, const Tensor* prompt, const Tensor& skip) {
    const ScanDims dm = check_scan_shapes(u, delta, a, b, c, prompt, skip);
    std::vector<double> y(dm.n * dm.d);
    scan_forward(dm, u.ptr(), delta.ptr(), a.ptr(), b.ptr(), c.ptr(), prompt ? prompt->ptr() : nullptr, skip.ptr(),
                 nullptr, y.data(), nullptr);
    return y;
}

ad::Var scan_recurrence(ad::Var u, ad::Var delta, ad::Var a, ad::Var b, ad::Var c, std::optional<ad::Var> prompt,
                        ad::Var skip) {
    const Tensor& uv = u.value();
    const ScanDims dm = check_scan_shapes(uv, delta.value(), a.value(), b.value(), c.value(),
                                          prompt ? &prompt->value() : nullptr, skip.value());
    auto& tape = u.tape();
    std::vector<ad::Var> inputs{u, delta, a, b, c, skip};
    if (prompt) inputs.push_back(*prompt);
    bool needs_grad = false;
    for (const auto& v : inputs) needs_grad = needs_grad || v.requires_grad();
    needs_grad = needs_grad && tape.grad_enabled();

    auto states = needs_grad ? std::make_shared<std::vector<double>>() : nullptr;
    Tensor y({dm.n, dm.d});
    scan_forward(dm, uv.ptr(), delta.value().ptr(), a.value().ptr(), b.value().ptr(), c.value().ptr(),
                 prompt ? prompt->value().ptr() : nullptr, skip.value().ptr(), y.ptr(), nullptr, states.get());

    const bool has_prompt = prompt.has_value();
    return tape.record(std::move(y), std::move(inputs), [u, delta, a, b, c, skip, prompt, states, dm, has_prompt](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        const real* uv = u.value().ptr();
        const real* dv = delta.value().ptr();
        const real* av = a.value().ptr();
        const real* bv = b.value().ptr();
        const real* cv = c.value().ptr();
        const real* pv = has_prompt ? prompt->value().ptr() : nullptr;
        const real* kv = skip.value().ptr();
        const std::vector<double>& hs = *states;

        std::vector<double> gu(dm.n * dm.d, 0.0), gdelta(dm.n * dm.d, 0.0);
        std::vector<double> ga(dm.d * dm.ds, 0.0), gb(dm.n * dm.ds, 0.0), gc(dm.n * dm.ds, 0.0);
        std::vector<double> gskip(dm.d, 0.0);
        std::vector<double> carry(dm.d * dm.ds, 0.0);  // adjoint of h_i arriving from token i+1

        for (std::size_t i = dm.n; i-- > 0;) {
            const double* hi = hs.data() + i * dm.d * dm.ds;
            const double* hp = i > 0 ? hs.data() + (i - 1) * dm.d * dm.ds : nullptr;
            for (std::size_t ch = 0; ch < dm.d; ++ch) {
                const std::size_t ic = i * dm.d + ch;
                const double gy = g[ic];
                const double dl = dv[ic];
                const double uc = uv[ic];
                double du = gy * kv[ch];
                gskip[ch] += gy * uc;
                double ddelta = 0.0;
                for (std::size_t s = 0; s < dm.ds; ++s) {
                    const std::size_t cs = ch * dm.ds + s;
                    const std::size_t is = i * dm.ds + s;
                    const double read = pv ? double(cv[is]) + double(pv[is]) : double(cv[is]);
                    const double h_now = hi[cs];
                    const double h_prev = hp ? hp[cs] : 0.0;
                    gc[is] += gy * h_now;
                    const double lam = carry[cs] + gy * read;
                    const ZohInput z = zoh(dl, av[cs]);
                    const double g_abar = lam * h_prev;
                    const double g_f = lam * double(bv[is]) * uc;
                    du += lam * z.f * double(bv[is]);
                    gb[is] += lam * z.f * uc;
                    ddelta += g_abar * z.a_bar * av[cs] + g_f * z.df_ddelta;
                    ga[cs] += g_abar * z.a_bar * dl + g_f * z.df_da;
                    carry[cs] = lam * z.a_bar;
                }
                gu[ic] += du;
                gdelta[ic] += ddelta;
            }
        }
        auto flush = [](Tensor* dst, const std::vector<double>& src) {
            if (!dst) return;
            for (std::size_t k = 0; k < src.size(); ++k) (*dst)[k] += static_cast<real>(src[k]);
        };
        flush(gi[0], gu);
        flush(gi[1], gdelta);
        flush(gi[2], ga);
        flush(gi[3], gb);
        flush(gi[4], gc);
        flush(gi[5], gskip);
        if (has_prompt) flush(gi[6], gc);  // ∂y/∂P has the same form as ∂y/∂C
    });
}

SelectiveCoefficients selective_coefficients(ad::Var u, const SsmVars& p) {
    SelectiveCoefficients k;
    k.delta = ad::softplus(ad::add_row(ad::matmul(u, p.delta_w), p.delta_b));
    k.a = ad::neg(ad::exp(p.a_log));
    k.b = ad::matmul(u, p.b_w);
    k.c = ad::matmul(u, p.c_w);
    return k;
}

ad::Var selective_scan(ad::Var u, const SsmVars& p) {
    const auto k = selective_coefficients(u, p);
    return scan_recurrence(u, k.delta, k.a, k.b, k.c, std::nullopt, p.skip);
}

ad::Var prompted_scan(ad::Var u, const SsmVars& p, ad::Var prompts) {
    const auto k = selective_coefficients(u, p);
    return scan_recurrence(u, k.delta, k.a, k.b, k.c, prompts, p.skip);
}

Tensor selective_scan(const Tensor& x, const SsmParams& p) {
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    return selective_scan(tape.constant(x), SsmVars::bind(tape, p)).value();
}

Tensor prompted_scan(const Tensor& x, const SsmParams& p, const Tensor& prompts) {
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    return prompted_scan(tape.constant(x), SsmVars::bind(tape, p), tape.constant(prompts)).value();
}

namespace {

std::vector<std::int64_t> lookup_index(std::span<const std::int32_t> assignment, std::size_t k) {
    std::vector<std::int64_t> idx(assignment.size());
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        const auto g = assignment[i];
        if (g < 0 || static_cast<std::size_t>(g) >= k)
            throw ContractError("prompt lookup: cluster id " + std::to_string(g) + " outside dictionary of " +
                                std::to_string(k));
        idx[i] = g;
    }
    return idx;
}

}  // namespace

Tensor prompt_lookup(std::span<const std::int32_t> assignment, const PromptDictionary& dict) {
    const auto idx = lookup_index(assignment, dict.clusters());
    const std::size_t ds = dict.dict.cols();
    Tensor out({assignment.size(), ds});
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(dict.dict.ptr() + idx[i] * ds, ds, out.ptr() + i * ds);
    return out;
}

ad::Var prompt_lookup(std::span<const std::int32_t> assignment, ad::Var dict) {
    const auto idx = lookup_index(assignment, dict.value().rank() == 2 ? dict.value().dim(0) : 0);
    return ad::gather_rows(dict, idx);
}

double impulse_response(const FixedSsm& ssm, std::size_t i, std::size_t j) {
    if (j < i) throw ContractError("impulse_response: output index precedes the impulse (causality)");
    const std::size_t d = ssm.skip.numel(), ds = ssm.a.cols();
    if (ssm.delta.numel() != d || ssm.a.numel() != d * ds || ssm.b.numel() != ds || ssm.c.numel() != ds)
        throw DimensionError("impulse_response: inconsistent fixed-system shapes");
    const std::size_t n = j + 1;
    Tensor u({n, d}), delta({n, d}), b({n, ds}), c({n, ds});
    for (std::size_t t = 0; t < n; ++t) {
        std::copy_n(ssm.delta.ptr(), d, delta.ptr() + t * d);
        std::copy_n(ssm.b.ptr(), ds, b.ptr() + t * ds);
        std::copy_n(ssm.c.ptr(), ds, c.ptr() + t * ds);
    }
    for (std::size_t ch = 0; ch < d; ++ch) u.at(i, ch) = 1.0f;
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    const Tensor y = scan_recurrence(tape.constant(u), tape.constant(delta), tape.constant(ssm.a.reshaped({d, ds})),
                                     tape.constant(b), tape.constant(c), std::nullopt, tape.constant(ssm.skip))
                         .value();
    double s = 0.0;
    for (real v : y.row(j)) s += double(v) * v;
    return std::sqrt(s);
}

}  // namespace camc
