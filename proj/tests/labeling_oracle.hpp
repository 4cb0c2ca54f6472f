#pragma once

#include <vector>

#include "bavit/patch_labeling.hpp"

namespace bavit::testing {

// Pixel-rasterization oracles: count pixels one at a time.
inline TokenLabelMap boxes_oracle(const PatchGrid& grid, const std::vector<BoundingBox>& boxes, double tau,
                           OverlapMode mode) {
    TokenLabelMap out(grid);
    const int W = grid.image_width();
    const int H = grid.image_height();
    for (int t = 0; t < grid.token_count(); ++t) {
        const BoundingBox p = grid.patch_rect(t);
        bool fg = false;
        for (const auto& b : boxes) {
            std::int64_t inter = 0;
            std::int64_t box_pixels = 0;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    const bool in_box = x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
                    const bool in_patch = x >= p.x_min && x < p.x_max && y >= p.y_min && y < p.y_max;
                    box_pixels += in_box;
                    inter += in_box && in_patch;
                }
            }
            if (box_pixels == 0) continue;
            const double patch_pixels = static_cast<double>(p.area());
            const double ratio = mode == OverlapMode::patch_coverage
                                     ? static_cast<double>(inter) / patch_pixels
                                     : static_cast<double>(inter) / (patch_pixels + static_cast<double>(box_pixels) -
                                                                     static_cast<double>(inter));
            if (ratio >= tau) fg = true;
        }
        out.set(t, fg);
    }
    return out;
}

inline TokenLabelMap mask_oracle(const PatchGrid& grid, const SegMask& mask, double min_fraction) {
    TokenLabelMap out(grid);
    for (int t = 0; t < grid.token_count(); ++t) {
        const BoundingBox p = grid.patch_rect(t);
        int count = 0;
        for (int y = p.y_min; y < p.y_max; ++y) {
            for (int x = p.x_min; x < p.x_max; ++x) count += mask.at(x, y) != 0;
        }
        out.set(t, static_cast<double>(count) / static_cast<double>(p.area()) > min_fraction);
    }
    return out;
}

}  // namespace bavit::testing
