#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace bavit {

/// Half-open integer pixel rectangle [x_min, x_max) x [y_min, y_max).
struct BoundingBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
    std::int64_t area() const {
        return static_cast<std::int64_t>(width()) * static_cast<std::int64_t>(height());
    }
    bool valid() const { return x_min < x_max && y_min < y_max; }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Intersection of two rectangles; may be empty (invalid()).
BoundingBox intersect(const BoundingBox& a, const BoundingBox& b);
std::int64_t intersection_area(const BoundingBox& a, const BoundingBox& b);

/// Clamp to [0,width) x [0,height). The result may be empty.
BoundingBox clamp_to_image(const BoundingBox& box, int width, int height);

/// A k x k tiling of an image. Tokens are numbered row-major.
class PatchGrid {
public:
    PatchGrid() = default;
    /// Throws GeometryError unless both dimensions are positive multiples of patch_size.
    PatchGrid(int image_width, int image_height, int patch_size);

    static PatchGrid square(int image_size, int patch_size) {
        return PatchGrid(image_size, image_size, patch_size);
    }

    int image_width() const { return image_width_; }
    int image_height() const { return image_height_; }
    int patch_size() const { return patch_size_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int token_count() const { return rows_ * cols_; }

    BoundingBox patch_rect(int token) const;
    BoundingBox patch_rect(int row, int col) const;

    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;

private:
    int image_width_ = 0;
    int image_height_ = 0;
    int patch_size_ = 0;
    int rows_ = 0;
    int cols_ = 0;
};

/// Binary per-token labels in row-major grid order; 1 = FG, 0 = BG.
class TokenLabelMap {
public:
    TokenLabelMap() = default;
    explicit TokenLabelMap(PatchGrid grid);
    TokenLabelMap(PatchGrid grid, std::vector<std::uint8_t> labels);

    const PatchGrid& grid() const { return grid_; }
    std::span<const std::uint8_t> labels() const { return labels_; }
    int size() const { return static_cast<int>(labels_.size()); }

    std::uint8_t at(int token) const { return labels_.at(static_cast<std::size_t>(token)); }
    std::uint8_t at(int row, int col) const { return at(row * grid_.cols() + col); }
    void set(int token, bool fg) { labels_.at(static_cast<std::size_t>(token)) = fg ? 1 : 0; }
    void set(int row, int col, bool fg) { set(row * grid_.cols() + col, fg); }

    int fg_count() const;
    double fg_fraction() const;

    friend bool operator==(const TokenLabelMap&, const TokenLabelMap&) = default;

private:
    PatchGrid grid_;
    std::vector<std::uint8_t> labels_;
};

/// Single-channel class-id raster; 0 = background.
struct SegMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    SegMask() = default;
    SegMask(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

enum class OverlapMode { jaccard, patch_coverage };

/// Accepts "jaccard", "coverage" or "patch_coverage".
OverlapMode parse_overlap_mode(std::string_view text);
std::string_view to_string(OverlapMode mode);

/// |patch ∩ box| / |patch ∪ box|. Throws GeometryError on a zero-area rectangle.
double jaccard(const BoundingBox& patch, const BoundingBox& box);

/// |patch ∩ box| / |patch|.
double patch_coverage(const BoundingBox& patch, const BoundingBox& box);

double overlap(OverlapMode mode, const BoundingBox& patch, const BoundingBox& box);

inline constexpr double kDefaultBoxThreshold = 0.5;
inline constexpr double kDefaultMaskFraction = 0.10;

/// A token is FG iff some box reaches overlap >= tau. Boxes are clamped to the
/// image first; a box lying entirely outside the image contributes nothing.
TokenLabelMap label_from_boxes(const PatchGrid& grid, std::span<const BoundingBox> boxes,
                               double tau = kDefaultBoxThreshold,
                               OverlapMode mode = OverlapMode::patch_coverage);

/// A token is FG iff the fraction of nonzero mask pixels inside it is strictly
/// greater than min_fraction.
TokenLabelMap label_from_mask(const PatchGrid& grid, const SegMask& mask,
                              double min_fraction = kDefaultMaskFraction);

}  // namespace bavit
