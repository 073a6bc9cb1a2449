#pragma once

// Which earlier representations each DWA module reads.

#include <cstddef>
#include <optional>
#include <vector>

#include "denseformer/config.hpp"

namespace denseformer {

// Ascending source indices of a DWA row; std::nullopt means the depth has no
// DWA module and Y_i = X_i is passed through.
using ActiveIndices = std::optional<std::vector<std::size_t>>;

// Dilated/periodic rule: depth i carries a DWA iff p divides i, and reads
// {j : 0 <= j <= i, j = i (mod k)}. Total over 1 <= i, k >= 1, p >= 1.
ActiveIndices active_indices(std::size_t i, std::size_t k, std::size_t p);

// Sources of depth i (1..depth) under any pattern. Patterns without DWA
// return std::nullopt everywhere.
ActiveIndices dwa_sources(const SparsityPattern& pattern, std::size_t i, std::size_t depth);

// Slot counts of the k residue-class groups over indices 0..depth:
// floor((d+1)/k), plus one for the first (d+1) mod k groups.
std::vector<std::size_t> dilation_groups(std::size_t depth, std::size_t k);

// Learnable scalars the pattern adds on top of a plain Transformer.
std::size_t param_count_added(std::size_t depth, const SparsityPattern& pattern);

}  // namespace denseformer
