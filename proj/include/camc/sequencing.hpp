#pragma once

// Cluster-contiguous token ordering and its inverse.

#include <cstdint>
#include <span>
#include <vector>

#include "camc/autodiff.hpp"
#include "camc/clustering.hpp"

namespace camc {

struct Permutation {
    // Reordered position i holds original token forward[i]; inverse undoes it.
    std::vector<std::int64_t> forward;
    std::vector<std::int64_t> inverse;

    std::size_t size() const { return forward.size(); }
    static Permutation identity(std::size_t n);
    // Throws ContractError unless forward is a bijection and inverse matches.
    void validate() const;
};

// Stable counting sort by cluster id: all of cluster 0 (in raster order), then cluster 1, ...
Permutation build_permutation(std::span<const std::int32_t> assignment, std::size_t k);

Tensor apply_permutation(const Permutation& p, const Tensor& x);
Tensor restore_permutation(const Permutation& p, const Tensor& x);
ad::Var apply_permutation(const Permutation& p, ad::Var x);
ad::Var restore_permutation(const Permutation& p, ad::Var x);

// Assignment vector expressed in reordered positions.
AssignmentVector permute_assignment(const Permutation& p, std::span<const std::int32_t> assignment);

}  // namespace camc
