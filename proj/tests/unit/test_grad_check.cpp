#include <cmath>

#include "camc/errors.hpp"
#include "camc/grad_check.hpp"
#include "doctest.h"

using namespace camc;

namespace {

// y = x² with a deliberately wrong backward rule (returns x instead of 2x).
ad::Var broken_square(ad::Var x) {
    Tensor out = x.value();
    for (auto& v : out.data()) v = v * v;
    return x.tape().record(std::move(out), {x}, [x](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i] * x.value()[i];
    });
}

}  // namespace

TEST_CASE("grad_check accepts a correct gradient") {
    const Tensor in[] = {Tensor({3}, std::vector<float>{0.5f, -1.0f, 2.0f})};
    const auto rep = grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::square(v[0]); }, in);
    CHECK(rep.passed);
    CHECK(rep.worst() < 1e-4);
    CHECK(rep.max_rel_error.size() == 1);
}

TEST_CASE("grad_check rejects a wrong gradient") {
    const Tensor in[] = {Tensor({3}, std::vector<float>{0.5f, -1.0f, 2.0f})};
    const auto rep = grad_check([](ad::Tape&, std::span<const ad::Var> v) { return broken_square(v[0]); }, in);
    CHECK_FALSE(rep.passed);
    CHECK(rep.worst() > 0.1);
    CHECK(rep.describe().find("FAIL") != std::string::npos);
}

TEST_CASE("grad_check reports non-finite graphs") {
    const Tensor in[] = {Tensor({1}, std::vector<float>{1e30f})};
    CHECK_THROWS_AS(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::exp(v[0]); }, in), NumericError);
}

TEST_CASE("grad_check handles several inputs and subsampling") {
    const Tensor a({20}, 0.3f), b({20}, -0.7f);
    const Tensor in[] = {a, b};
    GradCheckOptions opt;
    opt.max_elements_per_input = 5;
    const auto rep =
        grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::mul(v[0], ad::exp(v[1])); }, in, opt);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error.size() == 2);
}
