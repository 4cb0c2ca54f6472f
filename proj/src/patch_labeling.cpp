#include "bavit/patch_labeling.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "bavit/error.hpp"

namespace bavit {

BoundingBox intersect(const BoundingBox& a, const BoundingBox& b) {
    return {std::max(a.x_min, b.x_min), std::max(a.y_min, b.y_min), std::min(a.x_max, b.x_max),
            std::min(a.y_max, b.y_max)};
}

std::int64_t intersection_area(const BoundingBox& a, const BoundingBox& b) {
    const BoundingBox overlap_rect = intersect(a, b);
    return overlap_rect.valid() ? overlap_rect.area() : 0;
}

BoundingBox clamp_to_image(const BoundingBox& box, int width, int height) {
    return {std::clamp(box.x_min, 0, width), std::clamp(box.y_min, 0, height),
            std::clamp(box.x_max, 0, width), std::clamp(box.y_max, 0, height)};
}

PatchGrid::PatchGrid(int image_width, int image_height, int patch_size)
    : image_width_(image_width), image_height_(image_height), patch_size_(patch_size) {
    if (patch_size <= 0 || image_width <= 0 || image_height <= 0) {
        throw GeometryError("patch grid: image and patch sizes must be positive");
    }
    if (image_width % patch_size != 0 || image_height % patch_size != 0) {
        throw GeometryError("patch grid: image " + std::to_string(image_width) + "x" +
                            std::to_string(image_height) + " is not a multiple of patch size " +
                            std::to_string(patch_size));
    }
    rows_ = image_height / patch_size;
    cols_ = image_width / patch_size;
}

BoundingBox PatchGrid::patch_rect(int row, int col) const {
    return {col * patch_size_, row * patch_size_, (col + 1) * patch_size_, (row + 1) * patch_size_};
}

BoundingBox PatchGrid::patch_rect(int token) const { return patch_rect(token / cols_, token % cols_); }

TokenLabelMap::TokenLabelMap(PatchGrid grid)
    : grid_(grid), labels_(static_cast<std::size_t>(grid.token_count()), 0) {}

TokenLabelMap::TokenLabelMap(PatchGrid grid, std::vector<std::uint8_t> labels)
    : grid_(grid), labels_(std::move(labels)) {
    if (labels_.size() != static_cast<std::size_t>(grid_.token_count())) {
        throw GeometryError("label map: expected " + std::to_string(grid_.token_count()) +
                            " labels, got " + std::to_string(labels_.size()));
    }
    for (auto& v : labels_) {
        if (v > 1) throw GeometryError("label map: labels must be 0 or 1");
    }
}

int TokenLabelMap::fg_count() const { return std::accumulate(labels_.begin(), labels_.end(), 0); }

double TokenLabelMap::fg_fraction() const {
    return labels_.empty() ? 0.0 : static_cast<double>(fg_count()) / static_cast<double>(labels_.size());
}

OverlapMode parse_overlap_mode(std::string_view text) {
    if (text == "jaccard") return OverlapMode::jaccard;
    if (text == "coverage" || text == "patch_coverage") return OverlapMode::patch_coverage;
    throw std::invalid_argument("unknown overlap mode '" + std::string(text) + "'");
}

std::string_view to_string(OverlapMode mode) {
    return mode == OverlapMode::jaccard ? "jaccard" : "coverage";
}

namespace {

void require_valid(const BoundingBox& patch, const BoundingBox& box) {
    if (!patch.valid() || !box.valid()) {
        throw GeometryError("overlap: zero-area rectangle");
    }
}

}  // namespace

double jaccard(const BoundingBox& patch, const BoundingBox& box) {
    require_valid(patch, box);
    const std::int64_t inter = intersection_area(patch, box);
    const std::int64_t uni = patch.area() + box.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double patch_coverage(const BoundingBox& patch, const BoundingBox& box) {
    require_valid(patch, box);
    return static_cast<double>(intersection_area(patch, box)) / static_cast<double>(patch.area());
}

double overlap(OverlapMode mode, const BoundingBox& patch, const BoundingBox& box) {
    return mode == OverlapMode::jaccard ? jaccard(patch, box) : patch_coverage(patch, box);
}

TokenLabelMap label_from_boxes(const PatchGrid& grid, std::span<const BoundingBox> boxes, double tau,
                               OverlapMode mode) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("label_from_boxes: tau must be in [0,1]");
    std::vector<BoundingBox> clamped;
    clamped.reserve(boxes.size());
    for (const auto& box : boxes) {
        if (!box.valid()) throw GeometryError("label_from_boxes: degenerate box");
        const BoundingBox c = clamp_to_image(box, grid.image_width(), grid.image_height());
        if (c.valid()) clamped.push_back(c);
    }

    TokenLabelMap out(grid);
    for (int t = 0; t < grid.token_count(); ++t) {
        const BoundingBox patch = grid.patch_rect(t);
        for (const auto& box : clamped) {
            if (overlap(mode, patch, box) >= tau) {
                out.set(t, true);
                break;
            }
        }
    }
    return out;
}

TokenLabelMap label_from_mask(const PatchGrid& grid, const SegMask& mask, double min_fraction) {
    if (mask.width != grid.image_width() || mask.height != grid.image_height()) {
        throw GeometryError("label_from_mask: mask is " + std::to_string(mask.width) + "x" +
                            std::to_string(mask.height) + ", grid expects " +
                            std::to_string(grid.image_width()) + "x" + std::to_string(grid.image_height()));
    }
    if (!(min_fraction > 0.0 && min_fraction < 1.0)) {
        throw std::invalid_argument("label_from_mask: min_fraction must be in (0,1)");
    }
    const int k = grid.patch_size();
    const double area = static_cast<double>(k) * k;
    TokenLabelMap out(grid);
    for (int r = 0; r < grid.rows(); ++r) {
        for (int c = 0; c < grid.cols(); ++c) {
            int nonzero = 0;
            for (int y = r * k; y < (r + 1) * k; ++y) {
                for (int x = c * k; x < (c + 1) * k; ++x) nonzero += mask.at(x, y) != 0;
            }
            out.set(r, c, static_cast<double>(nonzero) / area > min_fraction);
        }
    }
    return out;
}

}  // namespace bavit
