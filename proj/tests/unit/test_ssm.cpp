#include <cmath>
#include <random>

#include "camc/errors.hpp"
#include "camc/grad_check.hpp"
#include "camc/ssm.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace camc;
using testing::random_normal;
using testing::random_tensor;

TEST_CASE("ZOH coefficients match the closed form") {
    const ZohCoefficients z = discretize(0.1, -1.0, 1.0);
    CHECK(std::abs(z.a_bar - std::exp(-0.1L)) < 1e-12);
    CHECK(std::abs(z.b_bar - (1.0L - std::exp(-0.1L))) < 1e-12);
    CHECK(std::abs(z.a_bar - 0.90484) < 1e-5);
    CHECK(std::abs(z.b_bar - 0.09516) < 1e-5);
    CHECK_THROWS_AS(discretize(0.0, -1.0, 1.0), ContractError);
    CHECK_THROWS_AS(discretize(-0.5, -1.0, 1.0), ContractError);
}

TEST_CASE("Taylor branch is continuous across the threshold") {
    const double delta = 1.0;
    for (double a : {-kZohTaylorThreshold, -0.999 * kZohTaylorThreshold, -1.001 * kZohTaylorThreshold}) {
        const long double exact = std::expm1((long double)delta * a) / a;
        CHECK(std::abs(discretize(delta, a, 1.0).b_bar - (double)exact) < 1e-12);
    }
    const double below = discretize(delta, -kZohTaylorThreshold * (1 - 1e-9), 1.0).b_bar;
    const double above = discretize(delta, -kZohTaylorThreshold * (1 + 1e-9), 1.0).b_bar;
    CHECK(std::abs(below - above) < 1e-9);
    // a = 0 is the pure integrator.
    CHECK(discretize(0.25, 0.0, 2.0).b_bar == doctest::Approx(0.5));
}

TEST_CASE("N=1 hand-unrolled scan") {
    // d = 1, d_s = 1: h = b̄·x, y = C·h + D·x
    ad::Tape tape;
    const float x = 2.0f, dl = 0.5f, a = -2.0f, b = 3.0f, c = 0.25f, skip = 0.1f;
    const Tensor y = scan_recurrence(tape.constant(Tensor({1, 1}, x)), tape.constant(Tensor({1, 1}, dl)),
                                     tape.constant(Tensor({1, 1}, a)), tape.constant(Tensor({1, 1}, b)),
                                     tape.constant(Tensor({1, 1}, c)), std::nullopt, tape.constant(Tensor({1}, skip)))
                         .value();
    const double bbar = std::expm1(dl * a) / a * b;
    CHECK(y[0] == doctest::Approx(c * bbar * x + skip * x).epsilon(1e-6));
}

TEST_CASE("recurrence matches a naive loop to double precision") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + rng() % 64, d = 1 + rng() % 8, ds = 1 + rng() % 16;
        const Tensor u = random_normal({n, d}, rng);
        const Tensor delta = random_tensor({n, d}, rng, 0.01f, 1.5f);
        Tensor a = random_tensor({d, ds}, rng, -4.0f, -0.05f);
        const Tensor b = random_normal({n, ds}, rng), c = random_normal({n, ds}, rng);
        const Tensor p = random_normal({n, ds}, rng), skip = random_normal({d}, rng);
        const auto got = scan_recurrence_f64(u, delta, a, b, c, &p, skip);
        const auto ref = testing::naive_recurrence(u, delta, a, b, c, p, skip);
        CHECK(testing::normwise_rel_error(got, ref) < 1e-12);
    }
}

TEST_CASE("selective scan matches the from-scratch oracle") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng() % 40, d = 1 + rng() % 6, ds = 1 + rng() % 8;
        const SsmParams p = testing::random_ssm(d, ds, rng);
        const Tensor x = random_normal({n, d}, rng);
        const Tensor prompts = random_normal({n, ds}, rng, 0.3f);
        CHECK(testing::normwise_rel_error(testing::to_double(selective_scan(x, p)), testing::naive_scan(x, p)) < 1e-5);
        CHECK(testing::normwise_rel_error(testing::to_double(prompted_scan(x, p, prompts)),
                                          testing::naive_scan(x, p, prompts)) < 1e-5);
    }
}

TEST_CASE("zero prompts reproduce the plain scan bitwise") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 1 + rng() % 30, d = 1 + rng() % 6, ds = 1 + rng() % 8;
        const SsmParams p = testing::random_ssm(d, ds, rng);
        const Tensor x = random_normal({n, d}, rng);
        CHECK(prompted_scan(x, p, Tensor({n, ds})).identical(selective_scan(x, p)));
    }
}

TEST_CASE("impulse response decays geometrically") {
    // A = ln(0.5) with Δ = 1 → ā = 0.5 per step.
    FixedSsm s;
    s.delta = Tensor({1}, 1.0f);
    s.a = Tensor({1, 1}, static_cast<float>(std::log(0.5)));
    s.b = Tensor({1}, 1.0f);
    s.c = Tensor({1}, 1.0f);
    s.skip = Tensor({1}, 0.0f);
    const double r0 = impulse_response(s, 3, 3);
    for (std::size_t k = 1; k < 6; ++k) CHECK(impulse_response(s, 3, 3 + k) / r0 == doctest::Approx(std::pow(0.5, k)));
    CHECK_THROWS_AS(impulse_response(s, 3, 2), ContractError);
}

TEST_CASE("prompt lookup equals one-hot times dictionary") {
    std::mt19937_64 rng(34);
    PromptDictionary dict{random_normal({5, 3}, rng)};
    const AssignmentVector g{4, 0, 2, 2, 1};
    const Tensor rows = prompt_lookup(g, dict);
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t s = 0; s < 3; ++s) {
            double ref = 0;
            for (std::size_t k = 0; k < 5; ++k) ref += (g[i] == int(k) ? 1.0 : 0.0) * dict.dict.at(k, s);
            CHECK(rows.at(i, s) == ref);
        }
    CHECK_THROWS_AS(prompt_lookup(AssignmentVector{5}, dict), ContractError);
}

TEST_CASE("scan gradients agree with finite differences") {
    std::mt19937_64 rng(35);
    const std::size_t n = 6, d = 3, ds = 4;
    const SsmParams p = testing::random_ssm(d, ds, rng);
    const Tensor x = random_normal({n, d}, rng, 0.7f);
    const Tensor prompts = random_normal({n, ds}, rng, 0.3f);
    const Tensor in[] = {x, p.delta_w, p.delta_b, p.b_w, p.c_w, p.a_log, p.skip, prompts};
    auto build = [](bool with_prompt) {
        return [with_prompt](ad::Tape&, std::span<const ad::Var> v) {
            SsmVars s{v[1], v[2], v[3], v[4], v[5], v[6]};
            return with_prompt ? prompted_scan(v[0], s, v[7]) : selective_scan(v[0], s);
        };
    };
    const auto plain = grad_check(build(false), std::span<const Tensor>(in, 7));
    CHECK_MESSAGE(plain.passed, plain.describe());
    const auto prompted = grad_check(build(true), in);
    CHECK_MESSAGE(prompted.passed, prompted.describe());
}

TEST_CASE("scan validates its operands") {
    ad::Tape tape;
    auto t = [&](Shape s, float v = 0.5f) { return tape.constant(Tensor(std::move(s), v)); };
    CHECK_THROWS_AS(scan_recurrence(t({3, 2}), t({3, 2}), t({2, 4}, -1), t({2, 4}), t({3, 4}), std::nullopt, t({2})),
                    DimensionError);
    CHECK_THROWS_AS(scan_recurrence(t({3, 2}), t({3, 2}, 0.0f), t({2, 4}, -1), t({3, 4}), t({3, 4}), std::nullopt,
                                    t({2})),
                    NumericError);
}
