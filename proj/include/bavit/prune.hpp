#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bavit/net.hpp"
#include "bavit/patch_labeling.hpp"

namespace bavit {

/// keep[i] == true means token i survives (FG).
class PruneMask {
public:
    PruneMask() = default;
    PruneMask(PatchGrid grid, std::vector<std::uint8_t> keep);

    const PatchGrid& grid() const { return grid_; }
    std::span<const std::uint8_t> keep() const { return keep_; }
    bool kept(int token) const { return keep_.at(static_cast<std::size_t>(token)) != 0; }
    int kept_count() const;
    int pruned_count() const { return static_cast<int>(keep_.size()) - kept_count(); }
    /// pruned / M
    double sparsity() const;

    TokenLabelMap as_labels() const;
    static PruneMask from_labels(const TokenLabelMap& labels);

private:
    PatchGrid grid_;
    std::vector<std::uint8_t> keep_;
};

/// Prunes token i iff P(BG) > theta; ties are kept. probs is M x 2 for one image.
PruneMask mask_from_probs(const Matrix<float>& probs, const PatchGrid& grid, double theta);
PruneMask mask_from_bg_probs(std::span<const double> p_bg, const PatchGrid& grid, double theta);

/// Threshold whose strict pruning rule removes the round(target * n) largest
/// P(BG) values of the calibration set: the value at ascending index
/// n - k - 1 (the largest value that is still kept).
double theta_for_sparsity(std::span<const double> p_bg, double target_sparsity);

/// dst(r, c) = src(floor(r * R_s / R_d), floor(c * C_s / C_d)).
TokenLabelMap upscale_labels(const TokenLabelMap& src, const PatchGrid& dst_grid);
PruneMask upscale_mask(const PruneMask& src, const PatchGrid& dst_grid);

/// Tokens surviving a mask, in grid order, plus their positions.
struct KeptTokens {
    Matrix<float> tokens;      // K x S
    std::vector<int> indices;  // grid positions of the K rows
    int total_tokens = 0;

    /// Scatters processed K x S rows back to an M x S matrix with exact zero rows at pruned positions.
    Matrix<float> restore(const Matrix<float>& processed) const;
};

/// tokens is M x S for one image.
KeptTokens apply_mask(const Matrix<float>& tokens, const PruneMask& mask);

// ---- token economics ---------------------------------------------------------

/// Layer-weighted token totals for a dense detector with a classifier in front.
struct TokenBudget {
    std::int64_t detector_tokens = 1024;
    std::int64_t detector_layers = 12;
    std::int64_t classifier_tokens = 576;
    std::int64_t classifier_layers = 2;

    std::int64_t detector_total() const { return detector_tokens * detector_layers; }
    std::int64_t classifier_total() const { return classifier_tokens * classifier_layers; }
};

struct PruneReport {
    double sparsity = 0.0;
    std::int64_t bavit_tokens = 0;           // Tb
    std::int64_t detector_tokens = 0;        // Ty
    std::int64_t pruned_detector_tokens = 0; // floor(Ty * (1 - s))
    std::int64_t combined_tokens = 0;        // pruned + Tb
    double reduction = 0.0;                  // (Ty - combined) / Ty, as a ratio
};

/// floor(Ty * (1 - s)), robust to representation error in s.
std::int64_t pruned_token_count(std::int64_t detector_tokens, double sparsity);

PruneReport prune_report(std::int64_t detector_tokens, std::int64_t bavit_tokens, double sparsity);

struct ImageTokens {
    std::int64_t detector_tokens = 0;
    std::int64_t bavit_tokens = 0;
    double sparsity = 0.0;
};

/// Mean over images of (Ty - (Tb + floor(Ty (1 - s)))) / Ty.
double token_reduction(std::span<const ImageTokens> per_image);

std::vector<PruneReport> table2_report(std::span<const double> sparsities, const TokenBudget& budget = {});

std::string format_prune_table(std::span<const PruneReport> rows);
std::string prune_rows_json(std::span<const PruneReport> rows);

}  // namespace bavit
