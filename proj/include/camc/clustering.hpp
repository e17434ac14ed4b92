#pragma once

// Spherical (cosine) k-means over token features, as used to group the
// tokens of a content-adaptive scan block.
//
// Cluster ids are 0-based throughout: 0 .. k-1.

#include <cstdint>
#include <span>
#include <vector>

#include "camc/tensor.hpp"

namespace camc {

using AssignmentVector = std::vector<std::int32_t>;

struct ClusterModel {
    Tensor centers;  // k × d, unit-norm rows
    std::size_t iters = 5;
    real ema_decay = 0.99f;

    std::size_t k() const { return centers.rank() == 2 ? centers.dim(0) : 0; }
    std::size_t dim() const { return centers.rank() == 2 ? centers.dim(1) : 0; }
    // Throws ConfigError on k == 0, iters == 0, decay outside [0, 1] or non-unit centers.
    void validate() const;
};

// Denominator guard for cosine similarity; zero tokens score 0 everywhere.
inline constexpr double kCosineEps = 1e-8;

// Centers from the means of k consecutive token segments.
ClusterModel init_centers(const Tensor& tokens, std::size_t k, std::size_t iters = 5, real ema_decay = 0.99f);

// argmax_j cos(x_i, c_j); ties go to the lowest index.
AssignmentVector assign(const Tensor& tokens, const Tensor& centers);

struct CenterUpdate {
    Tensor centers;
    std::size_t empty_clusters = 0;    // kept their previous center
    std::size_t zero_sum_clusters = 0; // members summed to the zero vector; also kept
};

// Normalized member sums; clusters without usable members keep their row bitwise.
CenterUpdate update_centers(const Tensor& tokens, std::span<const std::int32_t> assignment, const Tensor& centers);

struct KMeansStepResult {
    AssignmentVector assignments;  // from the last of the T iterations
    ClusterModel model;            // EMA-blended, re-normalized centers
    Tensor pre_ema_centers;        // c* of the last iteration
    std::vector<double> objective; // mean cosine after each assign step
};

// T assign/update iterations followed by one EMA blend with the incoming centers.
KMeansStepResult kmeans_train_step(const Tensor& tokens, const ClusterModel& model);

// Frozen-center assignment used at inference.
AssignmentVector assign_inference(const Tensor& tokens, const ClusterModel& model);

// Mean over tokens of cos(x_i, c_{g_i}).
double mean_cosine(const Tensor& tokens, std::span<const std::int32_t> assignment, const Tensor& centers);

}  // namespace camc
