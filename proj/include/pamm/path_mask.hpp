#pragma once

#include <cstdint>
#include <vector>

#include "pamm/hierarchy.hpp"
#include "pamm/labelseq.hpp"
#include "pamm/mat.hpp"

namespace pamm {

// Per-sample binary mask over a multi-level label sequence. Row i marks the
// positions a well-behaved decoder should attend to at timestep i: the token
// itself, its hierarchy ancestors, and the separator directly after each
// ancestor occurrence; symbol rows inherit the previous token's set plus that
// token itself.
struct PathAdaptiveMask {
    int n = 0;
    std::vector<uint8_t> m;                        // n*n row-major, 0/1
    std::vector<std::vector<int>> path_index_sets; // C_i, 0-based column indices

    uint8_t at(int i, int j) const { return m[static_cast<size_t>(i) * n + j]; }
};

PathAdaptiveMask build_mask(const LabelHierarchy& h, const MultiLevelSequence& ml);

// Per row i: 1 - sum_{j in C_i} score(i, j).
std::vector<double> off_path_mass(const Mat& score, const PathAdaptiveMask& mask);

}  // namespace pamm
