#include "support.hpp"

#include <algorithm>
#include <cmath>

namespace testing {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo, float hi) {
    std::uniform_real_distribution<float> u(lo, hi);
    Tensor t(shape);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

Tensor random_normal(const Shape& shape, std::mt19937_64& rng, float stddev) {
    std::normal_distribution<float> n(0.0f, stddev);
    Tensor t(shape);
    for (auto& v : t.data()) v = n(rng);
    return t;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
    return worst;
}

std::vector<double> to_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            long double s = 0;
            for (std::size_t t = 0; t < k; ++t) s += (long double)a[i * k + t] * b[t * n + j];
            out[i * n + j] = static_cast<double>(s);
        }
    return out;
}

std::vector<double> naive_scan(const Tensor& x, const camc::SsmParams& p, const Tensor& prompts) {
    using ld = long double;
    const std::size_t n = x.rows(), d = x.cols(), ds = p.state_dim();
    std::vector<ld> h(d * ds, 0.0L);
    std::vector<double> y(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<ld> delta(d), bv(ds, 0.0L), cv(ds, 0.0L);
        for (std::size_t c = 0; c < d; ++c) {
            ld pre = p.delta_b[c];
            for (std::size_t k = 0; k < d; ++k) pre += (ld)x.at(i, k) * p.delta_w.at(k, c);
            delta[c] = pre > 30 ? pre : std::log1p(std::exp(pre));
        }
        for (std::size_t s = 0; s < ds; ++s)
            for (std::size_t k = 0; k < d; ++k) {
                bv[s] += (ld)x.at(i, k) * p.b_w.at(k, s);
                cv[s] += (ld)x.at(i, k) * p.c_w.at(k, s);
            }
        for (std::size_t c = 0; c < d; ++c) {
            ld acc = (ld)p.skip[c] * x.at(i, c);
            for (std::size_t s = 0; s < ds; ++s) {
                const ld a = -std::exp((ld)p.a_log.at(c, s));
                const ld abar = std::exp(delta[c] * a);
                const ld bbar = std::expm1(delta[c] * a) / a * bv[s];
                ld& hs = h[c * ds + s];
                hs = abar * hs + bbar * x.at(i, c);
                const ld read = cv[s] + (prompts.empty() ? 0.0L : (ld)prompts.at(i, s));
                acc += read * hs;
            }
            y[i * d + c] = static_cast<double>(acc);
        }
    }
    return y;
}

std::vector<double> naive_recurrence(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
                                     const Tensor& c, const Tensor& prompt, const Tensor& skip) {
    using ld = long double;
    const std::size_t n = u.rows(), d = u.cols(), ds = a.cols();
    std::vector<ld> h(d * ds, 0.0L);
    std::vector<double> y(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < d; ++ch) {
            const ld dl = delta.at(i, ch), x = u.at(i, ch);
            ld acc = (ld)skip[ch] * x;
            for (std::size_t s = 0; s < ds; ++s) {
                const ld av = a.at(ch, s);
                ld& hs = h[ch * ds + s];
                hs = std::exp(dl * av) * hs + std::expm1(dl * av) / av * (ld)b.at(i, s) * x;
                acc += ((ld)c.at(i, s) + (prompt.empty() ? 0.0L : (ld)prompt.at(i, s))) * hs;
            }
            y[i * d + ch] = static_cast<double>(acc);
        }
    return y;
}

double normwise_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return den > 0.0 ? num / den : num;
}

camc::AssignmentVector naive_assign(const Tensor& tokens, const Tensor& centers) {
    const std::size_t n = tokens.rows(), k = centers.rows(), d = tokens.cols();
    camc::AssignmentVector g(n);
    for (std::size_t i = 0; i < n; ++i) {
        long double best = -1e30L;
        std::int32_t arg = 0;
        long double xn = 0;
        for (std::size_t t = 0; t < d; ++t) xn += (long double)tokens.at(i, t) * tokens.at(i, t);
        for (std::size_t j = 0; j < k; ++j) {
            long double dot = 0, cn = 0;
            for (std::size_t t = 0; t < d; ++t) {
                dot += (long double)tokens.at(i, t) * centers.at(j, t);
                cn += (long double)centers.at(j, t) * centers.at(j, t);
            }
            const long double cosv = dot / (std::sqrt(xn) * std::sqrt(cn) + 1e-8L);
            if (cosv > best) {
                best = cosv;
                arg = static_cast<std::int32_t>(j);
            }
        }
        g[i] = arg;
    }
    return g;
}

camc::SsmParams random_ssm(std::size_t d, std::size_t d_s, std::mt19937_64& rng) {
    camc::SsmParams p;
    p.delta_w = random_tensor({d, d}, rng, -0.5f, 0.5f);
    p.delta_b = random_tensor({d}, rng, -2.0f, 0.5f);
    p.b_w = random_tensor({d, d_s}, rng, -1.0f, 1.0f);
    p.c_w = random_tensor({d, d_s}, rng, -1.0f, 1.0f);
    p.a_log = random_tensor({d, d_s}, rng, -1.0f, 1.5f);
    p.skip = random_tensor({d}, rng, -1.0f, 1.0f);
    return p;
}

std::vector<double> naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int h = static_cast<int>(x.dim(0)), wd = static_cast<int>(x.dim(1)), cin = static_cast<int>(x.dim(2));
    const int k = static_cast<int>(w.dim(0)), cout = static_cast<int>(w.dim(3));
    const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(oh * ow * cout));
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int co = 0; co < cout; ++co) {
                long double s = b[static_cast<std::size_t>(co)];
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                        if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                        for (int ci = 0; ci < cin; ++ci)
                            s += (long double)x[static_cast<std::size_t>((iy * wd + ix) * cin + ci)] *
                                 w[static_cast<std::size_t>(((ky * k + kx) * cin + ci) * cout + co)];
                    }
                out[static_cast<std::size_t>((oy * ow + ox) * cout + co)] = static_cast<double>(s);
            }
    return out;
}

}  // namespace testing
