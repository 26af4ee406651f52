#include "geoadapt/lhs.hpp"

#include "geoadapt/common.hpp"

namespace geoadapt {

std::vector<std::vector<int>> lhs_sample(int n_dims, int n_levels, int n_samples, uint64_t seed,
                                         bool allow_any_dims) {
  if (!allow_any_dims && n_dims != 10)
    throw ConfigError("lhs_sample: family generation requires exactly 10 dimensions");
  if (n_dims < 1 || n_levels < 1 || n_samples < 1)
    throw ConfigError("lhs_sample: counts must be positive");
  const bool one_shot = n_samples <= n_levels;
  if (!one_shot && n_samples % n_levels != 0)
    throw ConfigError("lhs_sample: n_samples must be <= n_levels or a multiple of it");

  std::vector<std::vector<int>> out(static_cast<size_t>(n_samples),
                                    std::vector<int>(static_cast<size_t>(n_dims)));
  for (int dim = 0; dim < n_dims; ++dim) {
    RandomStream rng(derive_seed(seed, "lhs-dim", static_cast<uint64_t>(dim)));
    std::vector<int> column;
    if (one_shot) {
      auto picks = rng.sample_without_replacement(static_cast<size_t>(n_levels),
                                                  static_cast<size_t>(n_samples));
      column.assign(picks.begin(), picks.end());
    } else {
      const int reps = n_samples / n_levels;
      column.reserve(static_cast<size_t>(n_samples));
      for (int level = 0; level < n_levels; ++level)
        for (int r = 0; r < reps; ++r) column.push_back(level);
      rng.shuffle(column);
    }
    for (int s = 0; s < n_samples; ++s)
      out[static_cast<size_t>(s)][static_cast<size_t>(dim)] = column[static_cast<size_t>(s)];
  }
  return out;
}

}  // namespace geoadapt
