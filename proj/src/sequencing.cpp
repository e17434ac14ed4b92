#include "camc/sequencing.hpp"

#include <string>

#include "camc/errors.hpp"

namespace camc {

Permutation Permutation::identity(std::size_t n) {
    Permutation p;
    p.forward.resize(n);
    p.inverse.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.forward[i] = p.inverse[i] = static_cast<std::int64_t>(i);
    return p;
}

void Permutation::validate() const {
    const auto n = static_cast<std::int64_t>(forward.size());
    if (inverse.size() != forward.size()) throw ContractError("permutation halves differ in length");
    std::vector<char> seen(forward.size(), 0);
    for (std::size_t i = 0; i < forward.size(); ++i) {
        const auto f = forward[i];
        if (f < 0 || f >= n || seen[f]) throw ContractError("forward index table is not a bijection");
        seen[f] = 1;
        if (inverse[f] != static_cast<std::int64_t>(i)) throw ContractError("inverse does not undo forward");
    }
}

Permutation build_permutation(std::span<const std::int32_t> assignment, std::size_t k) {
    std::vector<std::size_t> start(k + 1, 0);
    for (auto g : assignment) {
        if (g < 0 || static_cast<std::size_t>(g) >= k)
            throw ContractError("cluster id " + std::to_string(g) + " outside [0, " + std::to_string(k) + ")");
        ++start[g + 1];
    }
    for (std::size_t j = 0; j < k; ++j) start[j + 1] += start[j];
    Permutation p;
    p.forward.resize(assignment.size());
    p.inverse.resize(assignment.size());
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        const std::size_t slot = start[assignment[i]]++;
        p.forward[slot] = static_cast<std::int64_t>(i);
        p.inverse[i] = static_cast<std::int64_t>(slot);
    }
    return p;
}

namespace {

void check_rows(const Permutation& p, std::size_t rows) {
    if (rows != p.size())
        throw DimensionError("permutation over " + std::to_string(p.size()) + " tokens applied to " +
                             std::to_string(rows) + " rows");
}

Tensor gather(const Tensor& x, const std::vector<std::int64_t>& index) {
    const std::size_t c = x.cols();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < index.size(); ++i) std::copy_n(x.ptr() + index[i] * c, c, out.ptr() + i * c);
    return out;
}

}  // namespace

Tensor apply_permutation(const Permutation& p, const Tensor& x) {
    check_rows(p, x.rows());
    return gather(x, p.forward);
}

Tensor restore_permutation(const Permutation& p, const Tensor& x) {
    check_rows(p, x.rows());
    return gather(x, p.inverse);
}

ad::Var apply_permutation(const Permutation& p, ad::Var x) {
    check_rows(p, x.value().rows());
    return ad::gather_rows(x, p.forward);
}

ad::Var restore_permutation(const Permutation& p, ad::Var x) {
    check_rows(p, x.value().rows());
    return ad::gather_rows(x, p.inverse);
}

AssignmentVector permute_assignment(const Permutation& p, std::span<const std::int32_t> assignment) {
    check_rows(p, assignment.size());
    AssignmentVector out(assignment.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = assignment[p.forward[i]];
    return out;
}

}  // namespace camc
