#include <cmath>
#include <random>

#include "camc/autodiff.hpp"
#include "camc/errors.hpp"
#include "camc/grad_check.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace camc;
using testing::random_tensor;

TEST_CASE("tensor shape bookkeeping") {
    Tensor t({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.rows() == 6);
    CHECK(t.cols() == 4);
    CHECK(Tensor::scalar(3.0f).item() == 3.0f);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(t.reshaped({5, 5}), DimensionError);
    Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
    CHECK(m.at(1, 0) == 3.0f);
    Tensor c = m;
    c[0] = -0.0f;
    CHECK_FALSE(c.identical(Tensor::matrix(2, 2, {0, 2, 3, 4})));  // bitwise: -0 ≠ +0
}

TEST_CASE("matmul matches a triple-loop oracle") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng() % 17, k = 1 + rng() % 13, n = 1 + rng() % 11;
        Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
        ad::Tape tape;
        const Tensor c = ad::matmul(tape.constant(a), tape.constant(b)).value();
        CHECK(testing::max_rel_error(testing::to_double(c), testing::naive_matmul(a, b), 1.0) < 1e-5);
    }
}

TEST_CASE("matmul keeps the leading shape of a rank-3 input") {
    ad::Tape tape;
    ad::Var x = tape.constant(Tensor({2, 3, 4}, 1.0f));
    ad::Var w = tape.constant(Tensor({4, 5}, 0.5f));
    const Tensor y = ad::matmul(x, w).value();
    CHECK(y.shape() == Shape{2, 3, 5});
    CHECK(y[0] == doctest::Approx(2.0));
    CHECK_THROWS_AS(ad::matmul(x, tape.constant(Tensor({3, 5}))), DimensionError);
}

TEST_CASE("softplus matches a high-precision oracle, including the tails") {
    ad::Tape tape;
    const std::vector<float> xs{-80.0f, -20.0f, -1.0f, 0.0f, 0.5f, 3.0f, 20.0f, 80.0f};
    const Tensor y = ad::softplus(tape.constant(Tensor({xs.size()}, xs))).value();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const long double x = xs[i];
        const long double ref = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        CHECK(std::abs(y[i] - (double)ref) <= 1e-6 * std::max(1.0, (double)std::abs(ref)));
    }
    CHECK(y.all_finite());
}

TEST_CASE("shared subexpressions accumulate their gradients") {
    // f = x·x + 3x → df/dx = 2x + 3
    ad::Tape tape;
    ad::Var x = tape.leaf(Tensor::scalar(2.0f));
    ad::Var f = ad::add(ad::mul(x, x), ad::scale(x, 3.0f));
    const ad::Gradients g = tape.backward(f);
    CHECK(g.at(x).item() == doctest::Approx(7.0));
}

TEST_CASE("backward needs a scalar loss") {
    ad::Tape tape;
    ad::Var x = tape.leaf(Tensor({3}, 1.0f));
    CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("no-grad guard records values only") {
    ad::Tape tape;
    ad::Var x = tape.leaf(Tensor::scalar(2.0f));
    ad::Var y;
    {
        ad::NoGradGuard guard(tape);
        y = ad::square(x);
    }
    CHECK(y.value().item() == 4.0f);
    CHECK_FALSE(y.requires_grad());
    CHECK(tape.grad_enabled());
}

TEST_CASE("elementwise op gradients agree with finite differences") {
    std::mt19937_64 rng(3);
    const Tensor a = random_tensor({4, 5}, rng, -2.0f, 2.0f);
    const Tensor b = random_tensor({4, 5}, rng, 0.5f, 2.0f);
    using Op = ad::Var (*)(ad::Var);
    const std::pair<const char*, Op> unary[] = {
        {"exp", ad::exp},         {"softplus", ad::softplus}, {"sigmoid", ad::sigmoid},
        {"silu", ad::silu},       {"gelu", ad::gelu},         {"square", ad::square},
        {"neg", ad::neg},
    };
    for (const auto& [name, op] : unary) {
        CAPTURE(name);
        const Tensor in[] = {a};
        auto rep = grad_check([op](ad::Tape&, std::span<const ad::Var> v) { return op(v[0]); }, in);
        CHECK(rep.passed);
    }
    const Tensor in2[] = {a, b};
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::mul(v[0], v[1]); }, in2).passed);
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::sub(v[0], v[1]); }, in2).passed);
}

TEST_CASE("row-wise and reshaping ops have correct gradients") {
    std::mt19937_64 rng(4);
    const Tensor x = random_tensor({6, 4}, rng);
    const Tensor r = random_tensor({4}, rng);
    const Tensor in[] = {x, r};
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::add_row(v[0], v[1]); }, in).passed);
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::mul_row(v[0], v[1]); }, in).passed);
    CHECK(grad_check(
              [](ad::Tape&, std::span<const ad::Var> v) { return ad::add(v[0], ad::broadcast_rows(v[1], 6)); }, in)
              .passed);
    const Tensor in1[] = {x};
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::slice_cols(v[0], 1, 3); }, in1).passed);
    const std::vector<std::int64_t> idx{5, -1, 0, 0, 3};
    CHECK(grad_check([&](ad::Tape&, std::span<const ad::Var> v) { return ad::gather_rows(v[0], idx); }, in1).passed);
}

TEST_CASE("gather_rows fills zero rows for negative indices") {
    ad::Tape tape;
    const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
    const std::vector<std::int64_t> idx{1, -1, 0};
    const Tensor y = ad::gather_rows(tape.constant(x), idx).value();
    CHECK(y.identical(Tensor::matrix(3, 2, {3, 4, 0, 0, 1, 2})));
}

TEST_CASE("layer norm normalizes rows and differentiates") {
    std::mt19937_64 rng(5);
    const Tensor x = random_tensor({5, 8}, rng, -3.0f, 3.0f);
    ad::Tape tape;
    const Tensor y = ad::layer_norm(tape.constant(x), tape.constant(Tensor({8}, 1.0f)), tape.constant(Tensor({8})))
                         .value();
    for (std::size_t r = 0; r < 5; ++r) {
        double m = 0, v = 0;
        for (float e : y.row(r)) m += e;
        m /= 8;
        for (float e : y.row(r)) v += (e - m) * (e - m);
        CHECK(std::abs(m) < 1e-6);
        CHECK(v / 8 == doctest::Approx(1.0).epsilon(1e-3));
    }
    const Tensor in[] = {x, random_tensor({8}, rng), random_tensor({8}, rng)};
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::layer_norm(v[0], v[1], v[2]); }, in)
              .passed);
}

TEST_CASE("conv2d matches direct summation") {
    std::mt19937_64 rng(6);
    for (int stride : {1, 2})
        for (int k : {3, 5}) {
            const Tensor x = random_tensor({7, 6, 3}, rng);
            const Tensor w = random_tensor({std::size_t(k), std::size_t(k), 3, 4}, rng);
            const Tensor b = random_tensor({4}, rng);
            ad::Tape tape;
            const Tensor y =
                ad::conv2d(tape.constant(x), tape.constant(w), tape.constant(b), stride, k / 2).value();
            CHECK(testing::max_rel_error(testing::to_double(y), testing::naive_conv2d(x, w, b, stride, k / 2), 1.0) <
                  1e-5);
        }
}

TEST_CASE("transposed conv is the adjoint of the strided conv") {
    // <conv(x), y> = <x, conv_T(y)> for matching weight layouts and zero bias.
    std::mt19937_64 rng(7);
    const std::size_t k = 5, cin = 3, cout = 4;
    const Tensor x = random_tensor({8, 8, cin}, rng);
    const Tensor w = random_tensor({k, k, cin, cout}, rng);
    ad::Tape tape;
    const Tensor y = random_tensor({4, 4, cout}, rng);
    const Tensor cx = ad::conv2d(tape.constant(x), tape.constant(w), tape.constant(Tensor({cout})), 2, 2).value();
    // conv_T weights: Cin_T = cout, Cout_T = cin.
    Tensor wt({cout, k, k, cin});
    for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx)
            for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t co = 0; co < cout; ++co)
                    wt[((co * k + ky) * k + kx) * cin + ci] = w[((ky * k + kx) * cin + ci) * cout + co];
    const Tensor ty =
        ad::conv_transpose2d(tape.constant(y), tape.constant(wt), tape.constant(Tensor({cin})), 2, 2, 1).value();
    REQUIRE(ty.shape() == x.shape());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += double(cx[i]) * y[i];
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += double(x[i]) * ty[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("convolution gradients agree with finite differences") {
    std::mt19937_64 rng(8);
    const Tensor x = random_tensor({5, 5, 2}, rng);
    const Tensor w = random_tensor({3, 3, 2, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    const Tensor in[] = {x, w, b};
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::conv2d(v[0], v[1], v[2], 2, 1); }, in)
              .passed);
    const Tensor wt = random_tensor({2, 3, 3, 3}, rng);
    const Tensor in_t[] = {x, wt, b};
    CHECK(grad_check(
              [](ad::Tape&, std::span<const ad::Var> v) { return ad::conv_transpose2d(v[0], v[1], v[2], 2, 1, 1); },
              in_t)
              .passed);
    const Tensor dw = random_tensor({3, 3, 2}, rng);
    const Tensor db = random_tensor({2}, rng);
    const Tensor in_d[] = {x, dw, db};
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::depthwise_conv2d(v[0], v[1], v[2]); },
                     in_d)
              .passed);
}

TEST_CASE("gaussian_bits matches the closed form and differentiates") {
    ad::Tape tape;
    const Tensor v = Tensor({3}, std::vector<float>{0.0f, 1.0f, -2.0f});
    const Tensor s = Tensor({3}, std::vector<float>{1.0f, 1.0f, 0.5f});
    const Tensor bits = ad::gaussian_bits(tape.constant(v), tape.constant(s)).value();
    CHECK(bits[0] == doctest::Approx(-std::log2(0.38292492254802624)).epsilon(1e-6));
    auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    CHECK(bits[1] == doctest::Approx(-std::log2(cdf(1.5) - cdf(0.5))).epsilon(1e-6));
    CHECK(bits[2] == doctest::Approx(-std::log2(cdf(-3.0) - cdf(-5.0))).epsilon(1e-5));
    std::mt19937_64 rng(9);
    const Tensor in[] = {random_tensor({10}, rng, -3.0f, 3.0f), random_tensor({10}, rng, 0.3f, 2.0f)};
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> w) { return ad::gaussian_bits(w[0], w[1]); }, in).passed);
}

TEST_CASE("round_ste rounds in value and passes gradients through") {
    ad::Tape tape;
    ad::Var x = tape.leaf(Tensor({3}, std::vector<float>{0.4f, 1.6f, -2.5f}));
    ad::Var y = ad::round_ste(x);
    CHECK(y.value()[0] == 0.0f);
    CHECK(y.value()[1] == 2.0f);
    CHECK(y.value()[2] == -3.0f);
    const auto g = tape.backward(ad::sum(y));
    for (float e : g.at(x).data()) CHECK(e == 1.0f);
}

TEST_CASE("lower_bound lets gradients push values back above the bound") {
    ad::Tape tape;
    ad::Var x = tape.leaf(Tensor({2}, std::vector<float>{0.05f, 0.5f}));
    ad::Var y = ad::lower_bound(x, 0.11f);
    CHECK(y.value()[0] == 0.11f);
    // Minimizing −y wants y larger: gradient −1 flows for both entries.
    const auto g = tape.backward(ad::neg(ad::sum(y)));
    CHECK(g.at(x)[0] == -1.0f);
    CHECK(g.at(x)[1] == -1.0f);
    // Minimizing +y below the bound is blocked.
    ad::Tape t2;
    ad::Var x2 = t2.leaf(Tensor({1}, std::vector<float>{0.05f}));
    CHECK(t2.backward(ad::sum(ad::lower_bound(x2, 0.11f))).at(x2)[0] == 0.0f);
}
