#include <bit>
#include <cmath>
#include <random>

#include "camc/autodiff.hpp"
#include "camc/clustering.hpp"
#include "camc/errors.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace camc;
using testing::random_normal;
using testing::random_tensor;

namespace {

Tensor unit_rows(Tensor t) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
        double s = 0;
        for (float v : t.row(r)) s += double(v) * v;
        const double n = std::sqrt(s);
        for (auto& v : t.row(r)) v = static_cast<float>(v / n);
    }
    return t;
}

// Rows layer-normalized without affine parameters: equal norms.
Tensor normalized_tokens(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    ad::Tape tape;
    return ad::layer_norm(tape.constant(random_normal({n, d}, rng)), tape.constant(Tensor({d}, 1.0f)),
                          tape.constant(Tensor({d})))
        .value();
}

double row_norm(std::span<const float> r) {
    double s = 0;
    for (float v : r) s += double(v) * v;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("assignment matches an exhaustive argmax") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng() % 60, d = 1 + rng() % 9, k = 1 + rng() % 12;
        const Tensor x = random_normal({n, d}, rng);
        const Tensor c = unit_rows(random_normal({k, d}, rng));
        CHECK(assign(x, c) == testing::naive_assign(x, c));
    }
}

TEST_CASE("ties go to the lowest cluster index") {
    const Tensor c = Tensor::matrix(3, 2, {0, 1, 1, 0, 1, 0});
    const Tensor x = Tensor::matrix(2, 2, {2, 0, 0, 0});
    const AssignmentVector g = assign(x, c);
    CHECK(g[0] == 1);
    CHECK(g[1] == 0);  // zero token: every similarity is 0
}

TEST_CASE("initial centers are normalized segment means") {
    std::mt19937_64 rng(12);
    const std::size_t n = 23, d = 5, k = 4;
    const Tensor x = random_normal({n, d}, rng);
    const ClusterModel m = init_centers(x, k);
    for (std::size_t s = 0; s < k; ++s) {
        const std::size_t b = s * n / k, e = (s + 1) * n / k;
        std::vector<long double> mean(d, 0);
        for (std::size_t i = b; i < e; ++i)
            for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
        long double nn = 0;
        for (auto v : mean) nn += v * v;
        for (std::size_t j = 0; j < d; ++j)
            CHECK(m.centers.at(s, j) == doctest::Approx(double(mean[j] / std::sqrt(nn))).epsilon(1e-5));
    }
    CHECK_THROWS_AS(init_centers(x, n + 1), ConfigError);
}

TEST_CASE("empty clusters keep their centers bitwise") {
    std::mt19937_64 rng(13);
    const Tensor x = random_normal({10, 4}, rng);
    const Tensor c = unit_rows(random_normal({3, 4}, rng));
    const AssignmentVector g(10, 1);  // clusters 0 and 2 empty
    const CenterUpdate u = update_centers(x, g, c);
    CHECK(u.empty_clusters == 2);
    for (std::size_t j : {0u, 2u})
        for (std::size_t t = 0; t < 4; ++t)
            CHECK(std::bit_cast<std::uint32_t>(u.centers.at(j, t)) == std::bit_cast<std::uint32_t>(c.at(j, t)));
}

TEST_CASE("zero member sums keep the previous center") {
    const Tensor x = Tensor::matrix(2, 2, {1, 0, -1, 0});
    const Tensor c = Tensor::matrix(1, 2, {0, 1});
    const AssignmentVector g{0, 0};
    const CenterUpdate u = update_centers(x, g, c);
    CHECK(u.zero_sum_clusters == 1);
    CHECK(u.centers.identical(c));
}

TEST_CASE("training step keeps unit-norm centers and a non-decreasing objective") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 8 + rng() % 56, d = 2 + rng() % 10, k = 1 + rng() % 8;
        const Tensor x = normalized_tokens(n, d, rng);
        ClusterModel m;
        m.centers = unit_rows(random_normal({k, d}, rng));
        const KMeansStepResult r = kmeans_train_step(x, m);
        REQUIRE(r.objective.size() == 5);
        for (std::size_t t = 1; t < r.objective.size(); ++t) CHECK(r.objective[t] >= r.objective[t - 1] - 1e-12);
        for (std::size_t j = 0; j < k; ++j) CHECK(std::abs(row_norm(r.model.centers.row(j)) - 1.0) <= 1e-5);
    }
}

TEST_CASE("EMA endpoints: decay 1 keeps, decay 0 replaces") {
    std::mt19937_64 rng(15);
    const Tensor x = normalized_tokens(30, 6, rng);
    ClusterModel m;
    m.centers = unit_rows(random_normal({4, 6}, rng));
    m.ema_decay = 1.0f;
    const auto keep = kmeans_train_step(x, m);
    for (std::size_t i = 0; i < m.centers.numel(); ++i)
        CHECK(keep.model.centers[i] == doctest::Approx(m.centers[i]).epsilon(1e-6));
    m.ema_decay = 0.0f;
    const auto repl = kmeans_train_step(x, m);
    for (std::size_t i = 0; i < m.centers.numel(); ++i)
        CHECK(repl.model.centers[i] == doctest::Approx(repl.pre_ema_centers[i]).epsilon(1e-6));
}

TEST_CASE("one EMA step blends old and fresh centers") {
    // Two well-separated groups; fresh centers are the group directions.
    const Tensor x = Tensor::matrix(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
    ClusterModel m;
    m.centers = unit_rows(Tensor::matrix(2, 2, {1, 0.2f, 0.2f, 1}));
    m.iters = 1;
    m.ema_decay = 0.5f;
    const auto r = kmeans_train_step(x, m);
    // c = normalize(0.5·old + 0.5·(1,0))
    const double ox = m.centers.at(0, 0), oy = m.centers.at(0, 1);
    const double bx = 0.5 * ox + 0.5, by = 0.5 * oy, nn = std::hypot(bx, by);
    CHECK(r.model.centers.at(0, 0) == doctest::Approx(bx / nn));
    CHECK(r.model.centers.at(0, 1) == doctest::Approx(by / nn));
}

TEST_CASE("clustering rejects malformed inputs") {
    const Tensor c = Tensor::matrix(2, 3, {1, 0, 0, 0, 1, 0});
    CHECK_THROWS_AS(assign(Tensor({4, 2}), c), DimensionError);
    ClusterModel m;
    m.centers = Tensor::matrix(1, 2, {2, 0});  // not unit norm
    CHECK_THROWS_AS(m.validate(), ConfigError);
    CHECK_THROWS_AS(update_centers(Tensor({2, 3}), AssignmentVector{0, 5}, c), ContractError);
}
