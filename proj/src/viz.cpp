#include "bavit/viz.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "bavit/error.hpp"

namespace bavit {

void RenderSpec::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("render: alpha must be in [0,1]");
}

namespace {

void require_dims(const RgbImage& image, const PatchGrid& grid) {
    if (image.width != grid.image_width() || image.height != grid.image_height()) {
        throw GeometryError("render: image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                            " but the grid covers " + std::to_string(grid.image_width()) + "x" +
                            std::to_string(grid.image_height()));
    }
}

}  // namespace

RgbImage render_overlay(const RgbImage& image, const TokenLabelMap& labels, const RenderSpec& spec) {
    spec.validate();
    const PatchGrid& grid = labels.grid();
    require_dims(image, grid);
    const int k = grid.patch_size();
    RgbImage out = image;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            std::uint8_t* px = out.at(x, y);
            if (spec.grid_lines && (x % k == 0 || y % k == 0)) {
                for (int ch = 0; ch < 3; ++ch) px[ch] = spec.grid_color[static_cast<std::size_t>(ch)];
                continue;
            }
            const Rgb& tint = labels.at(y / k, x / k) ? spec.fg_tint : spec.bg_tint;
            for (int ch = 0; ch < 3; ++ch) {
                const double v = (1.0 - spec.alpha) * px[ch] + spec.alpha * tint[static_cast<std::size_t>(ch)];
                px[ch] = static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
    return out;
}

RgbImage render_sparse(const RgbImage& image, const PruneMask& mask, const RenderSpec& spec) {
    spec.validate();
    const PatchGrid& grid = mask.grid();
    require_dims(image, grid);
    RgbImage out = image;
    for (int t = 0; t < grid.token_count(); ++t) {
        if (mask.kept(t)) continue;
        const BoundingBox rect = grid.patch_rect(t);
        for (int y = rect.y_min; y < rect.y_max; ++y) {
            for (int x = rect.x_min; x < rect.x_max; ++x) {
                std::uint8_t* px = out.at(x, y);
                for (int ch = 0; ch < 3; ++ch) px[ch] = spec.pruned_fill[static_cast<std::size_t>(ch)];
            }
        }
    }
    return out;
}

std::string sparse_filename(const std::string& stem, double sparsity) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", sparsity * 100.0);
    return stem + "_sparse_" + buf + ".ppm";
}

}  // namespace bavit
