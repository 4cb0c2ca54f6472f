#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "bavit/image_io.hpp"
#include "bavit/prune.hpp"

namespace bavit {

using Rgb = std::array<std::uint8_t, 3>;

struct RenderSpec {
    Rgb fg_tint = {220, 30, 30};
    Rgb bg_tint = {128, 128, 128};
    double alpha = 0.45;
    Rgb pruned_fill = {255, 255, 255};
    bool grid_lines = false;
    Rgb grid_color = {0, 0, 0};

    void validate() const;
};

/// Blends every patch towards its label's tint: out = (1 - alpha) * in + alpha * tint.
RgbImage render_overlay(const RgbImage& image, const TokenLabelMap& labels, const RenderSpec& spec = {});

/// Pruned patches become spec.pruned_fill; kept patches are copied verbatim.
RgbImage render_sparse(const RgbImage& image, const PruneMask& mask, const RenderSpec& spec = {});

/// "<stem>_sparse_<pct>.ppm" with the sparsity printed to one decimal, e.g. "img_sparse_40.0.ppm".
std::string sparse_filename(const std::string& stem, double sparsity);

}  // namespace bavit
