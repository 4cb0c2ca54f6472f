#pragma once

#include <array>

#include "bavit/patch_labeling.hpp"

namespace bavit {

/// Neighbourhood-count smoothing: a BG cell turns FG when the kernel-weighted
/// number of FG neighbours is strictly greater than threshold. Out-of-grid
/// neighbours count as BG.
struct CcaConfig {
    // row-major 3x3, centre must be 0
    std::array<int, 9> kernel = {1, 1, 1, 1, 0, 1, 1, 1, 1};
    int threshold = 2;
    int steps = 3;

    void validate() const;
};

/// One synchronous step; reads only the input grid.
TokenLabelMap cca_step(const TokenLabelMap& labels, const CcaConfig& config = {});

/// cca_step applied config.steps times.
TokenLabelMap cca(const TokenLabelMap& labels, const CcaConfig& config = {});

}  // namespace bavit
