#include "camc/clustering.hpp"

#include <cmath>
#include <string>

#include "camc/errors.hpp"

namespace camc {
namespace {

double norm_of(std::span<const real> v) {
    double s = 0.0;
    for (real x : v) s += double(x) * x;
    return std::sqrt(s);
}

void check_tokens(const Tensor& tokens, const Tensor& centers) {
    if (tokens.rank() != 2 || centers.rank() != 2)
        throw DimensionError("clustering expects 2-D tokens and centers, got " + shape_str(tokens.shape()) + " and " +
                             shape_str(centers.shape()));
    if (tokens.dim(1) != centers.dim(1))
        throw DimensionError("token width " + std::to_string(tokens.dim(1)) + " differs from center width " +
                             std::to_string(centers.dim(1)));
    if (centers.dim(0) == 0) throw ConfigError("cluster model has no centers");
}

// Writes the normalized vector into dst; returns false when v is zero.
bool normalize_into(const std::vector<double>& v, std::span<real> dst) {
    double s = 0.0;
    for (double x : v) s += x * x;
    const double n = std::sqrt(s);
    if (!(n > 0.0) || !std::isfinite(n)) return false;
    for (std::size_t j = 0; j < v.size(); ++j) dst[j] = static_cast<real>(v[j] / n);
    return true;
}

}  // namespace

void ClusterModel::validate() const {
    if (centers.rank() != 2 || k() == 0) throw ConfigError("cluster model needs k >= 1 centers");
    if (iters == 0) throw ConfigError("cluster model needs at least one iteration");
    if (!(ema_decay >= 0.0f && ema_decay <= 1.0f)) throw ConfigError("ema_decay must lie in [0, 1]");
    for (std::size_t j = 0; j < k(); ++j)
        if (std::abs(norm_of(centers.row(j)) - 1.0) > 1e-5)
            throw ConfigError("cluster center " + std::to_string(j) + " is not unit-norm");
}

ClusterModel init_centers(const Tensor& tokens, std::size_t k, std::size_t iters, real ema_decay) {
    if (tokens.rank() != 2) throw DimensionError("init_centers expects N×d tokens, got " + shape_str(tokens.shape()));
    const std::size_t n = tokens.dim(0), d = tokens.dim(1);
    if (k == 0 || n < k)
        throw ConfigError("init_centers needs 1 <= k <= N (k=" + std::to_string(k) + ", N=" + std::to_string(n) + ")");
    if (!tokens.all_finite()) throw NumericError("init_centers: non-finite tokens");
    ClusterModel model;
    model.iters = iters;
    model.ema_decay = ema_decay;
    model.centers = Tensor({k, d});
    std::vector<double> acc(d);
    for (std::size_t s = 0; s < k; ++s) {
        const std::size_t begin = s * n / k, end = (s + 1) * n / k;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = begin; i < end; ++i)
            for (std::size_t j = 0; j < d; ++j) acc[j] += tokens.at(i, j);
        for (auto& v : acc) v /= static_cast<double>(end - begin);
        if (!normalize_into(acc, model.centers.row(s))) {
            auto row = model.centers.row(s);
            std::fill(row.begin(), row.end(), 0.0f);
            row[s % d] = 1.0f;
        }
    }
    model.validate();
    return model;
}

AssignmentVector assign(const Tensor& tokens, const Tensor& centers) {
    check_tokens(tokens, centers);
    const std::size_t n = tokens.dim(0), k = centers.dim(0), d = tokens.dim(1);
    std::vector<double> cnorm(k);
    for (std::size_t j = 0; j < k; ++j) cnorm[j] = norm_of(centers.row(j));
    AssignmentVector g(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const real* x = tokens.ptr() + i * d;
        const double xn = norm_of(tokens.row(i));
        double best = 0.0;
        std::int32_t best_j = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const real* c = centers.ptr() + j * d;
            double dot = 0.0;
            for (std::size_t t = 0; t < d; ++t) dot += double(x[t]) * c[t];
            const double sim = dot / (xn * cnorm[j] + kCosineEps);
            if (j == 0 || sim > best) {
                best = sim;
                best_j = static_cast<std::int32_t>(j);
            }
        }
        g[i] = best_j;
    }
    return g;
}

CenterUpdate update_centers(const Tensor& tokens, std::span<const std::int32_t> assignment, const Tensor& centers) {
    check_tokens(tokens, centers);
    const std::size_t n = tokens.dim(0), k = centers.dim(0), d = tokens.dim(1);
    if (assignment.size() != n)
        throw DimensionError("assignment of length " + std::to_string(assignment.size()) + " for " +
                             std::to_string(n) + " tokens");
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = assignment[i];
        if (j < 0 || static_cast<std::size_t>(j) >= k)
            throw ContractError("assignment " + std::to_string(j) + " outside [0, " + std::to_string(k) + ")");
        ++counts[j];
        for (std::size_t t = 0; t < d; ++t) sums[j * d + t] += tokens.at(i, t);
    }
    CenterUpdate out{centers, 0, 0};
    std::vector<double> v(d);
    for (std::size_t j = 0; j < k; ++j) {
        if (counts[j] == 0) {
            ++out.empty_clusters;
            continue;
        }
        std::copy_n(sums.begin() + j * d, d, v.begin());
        if (!normalize_into(v, out.centers.row(j))) {
            auto src = centers.row(j);
            std::copy(src.begin(), src.end(), out.centers.row(j).begin());
            ++out.zero_sum_clusters;
        }
    }
    return out;
}

double mean_cosine(const Tensor& tokens, std::span<const std::int32_t> assignment, const Tensor& centers) {
    check_tokens(tokens, centers);
    const std::size_t n = tokens.dim(0), d = tokens.dim(1);
    if (n == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = centers.row(static_cast<std::size_t>(assignment[i]));
        double dot = 0.0;
        for (std::size_t t = 0; t < d; ++t) dot += double(tokens.at(i, t)) * c[t];
        total += dot / (norm_of(tokens.row(i)) * norm_of(c) + kCosineEps);
    }
    return total / static_cast<double>(n);
}

KMeansStepResult kmeans_train_step(const Tensor& tokens, const ClusterModel& model) {
    model.validate();
    KMeansStepResult result;
    Tensor current = model.centers;
    for (std::size_t t = 0; t < model.iters; ++t) {
        result.assignments = assign(tokens, current);
        result.objective.push_back(mean_cosine(tokens, result.assignments, current));
        current = update_centers(tokens, result.assignments, current).centers;
    }
    result.pre_ema_centers = current;

    result.model = model;
    const std::size_t k = model.k(), d = model.dim();
    const double lambda = model.ema_decay;
    std::vector<double> blend(d);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t t = 0; t < d; ++t)
            blend[t] = lambda * model.centers.at(j, t) + (1.0 - lambda) * current.at(j, t);
        // Antipodal old/new centers can cancel; fall back to the fresh center.
        if (!normalize_into(blend, result.model.centers.row(j))) {
            auto src = current.row(j);
            std::copy(src.begin(), src.end(), result.model.centers.row(j).begin());
        }
    }
    return result;
}

AssignmentVector assign_inference(const Tensor& tokens, const ClusterModel& model) {
    return assign(tokens, model.centers);
}

}  // namespace camc
