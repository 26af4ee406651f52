#pragma once

#include <cstdint>
#include <vector>

namespace geoadapt {

// Latin Hypercube sample of level indices, n_samples x n_dims.
// Per dimension: if n_samples <= n_levels each level appears at most once;
// if n_samples is a multiple of n_levels each level appears exactly
// n_samples / n_levels times (stacked LHS). Family generation is pinned to
// 10 dims; tests may override.
std::vector<std::vector<int>> lhs_sample(int n_dims, int n_levels, int n_samples, uint64_t seed,
                                         bool allow_any_dims = false);

}  // namespace geoadapt
