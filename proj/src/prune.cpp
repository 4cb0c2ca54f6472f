#include "bavit/prune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "bavit/error.hpp"
#include "bavit/loss.hpp"

namespace bavit {

PruneMask::PruneMask(PatchGrid grid, std::vector<std::uint8_t> keep) : grid_(grid), keep_(std::move(keep)) {
    if (keep_.size() != static_cast<std::size_t>(grid_.token_count())) {
        throw GeometryError("prune mask: size does not match grid");
    }
    for (auto& k : keep_) k = k ? 1 : 0;
}

int PruneMask::kept_count() const { return std::accumulate(keep_.begin(), keep_.end(), 0); }

double PruneMask::sparsity() const {
    return keep_.empty() ? 0.0 : static_cast<double>(pruned_count()) / static_cast<double>(keep_.size());
}

TokenLabelMap PruneMask::as_labels() const { return TokenLabelMap(grid_, keep_); }

PruneMask PruneMask::from_labels(const TokenLabelMap& labels) {
    return PruneMask(labels.grid(), std::vector<std::uint8_t>(labels.labels().begin(), labels.labels().end()));
}

PruneMask mask_from_bg_probs(std::span<const double> p_bg, const PatchGrid& grid, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("mask_from_probs: theta must be in [0,1]");
    if (p_bg.size() != static_cast<std::size_t>(grid.token_count())) {
        throw GeometryError("mask_from_probs: probability count does not match grid");
    }
    std::vector<std::uint8_t> keep(p_bg.size());
    for (std::size_t i = 0; i < p_bg.size(); ++i) keep[i] = !(p_bg[i] > theta);
    return PruneMask(grid, std::move(keep));
}

PruneMask mask_from_probs(const Matrix<float>& probs, const PatchGrid& grid, double theta) {
    if (probs.cols() != 2) throw GeometryError("mask_from_probs: expected M x 2 probabilities");
    std::vector<double> p_bg(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) p_bg[static_cast<std::size_t>(i)] = probs(i, kBackground);
    return mask_from_bg_probs(p_bg, grid, theta);
}

double theta_for_sparsity(std::span<const double> p_bg, double target_sparsity) {
    if (p_bg.empty()) throw std::invalid_argument("theta_for_sparsity: empty calibration set");
    if (!(target_sparsity >= 0.0 && target_sparsity < 1.0)) {
        throw std::invalid_argument("theta_for_sparsity: target must be in [0,1)");
    }
    std::vector<double> sorted(p_bg.begin(), p_bg.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<std::int64_t>(sorted.size());
    const std::int64_t prune = std::min<std::int64_t>(std::llround(target_sparsity * static_cast<double>(n)), n - 1);
    return sorted[static_cast<std::size_t>(n - prune - 1)];
}

TokenLabelMap upscale_labels(const TokenLabelMap& src, const PatchGrid& dst_grid) {
    const PatchGrid& sg = src.grid();
    if (sg.token_count() == 0 || dst_grid.token_count() == 0) throw GeometryError("upscale_labels: empty grid");
    if (dst_grid.rows() < sg.rows() || dst_grid.cols() < sg.cols()) {
        throw GeometryError("upscale_labels: destination grid is smaller than source");
    }
    TokenLabelMap out(dst_grid);
    for (int r = 0; r < dst_grid.rows(); ++r) {
        const int sr = r * sg.rows() / dst_grid.rows();
        for (int c = 0; c < dst_grid.cols(); ++c) out.set(r, c, src.at(sr, c * sg.cols() / dst_grid.cols()));
    }
    return out;
}

PruneMask upscale_mask(const PruneMask& src, const PatchGrid& dst_grid) {
    return PruneMask::from_labels(upscale_labels(src.as_labels(), dst_grid));
}

KeptTokens apply_mask(const Matrix<float>& tokens, const PruneMask& mask) {
    if (tokens.rows() != mask.grid().token_count()) {
        throw GeometryError("apply_mask: " + std::to_string(tokens.rows()) + " tokens but mask covers " +
                            std::to_string(mask.grid().token_count()));
    }
    KeptTokens out;
    out.total_tokens = static_cast<int>(tokens.rows());
    for (int i = 0; i < out.total_tokens; ++i) {
        if (mask.kept(i)) out.indices.push_back(i);
    }
    out.tokens.resize(static_cast<Eigen::Index>(out.indices.size()), tokens.cols());
    for (std::size_t k = 0; k < out.indices.size(); ++k) {
        out.tokens.row(static_cast<Eigen::Index>(k)) = tokens.row(out.indices[k]);
    }
    return out;
}

Matrix<float> KeptTokens::restore(const Matrix<float>& processed) const {
    if (processed.rows() != static_cast<Eigen::Index>(indices.size())) {
        throw GeometryError("restore: processed row count does not match kept tokens");
    }
    Matrix<float> out = Matrix<float>::Zero(total_tokens, processed.cols());
    for (std::size_t k = 0; k < indices.size(); ++k) out.row(indices[k]) = processed.row(static_cast<Eigen::Index>(k));
    return out;
}

std::int64_t pruned_token_count(std::int64_t detector_tokens, double sparsity) {
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw std::invalid_argument("sparsity must be in [0,1]");
    const double kept = static_cast<double>(detector_tokens) * (1.0 - sparsity);
    // 1e-9 absorbs decimal-to-binary error so exact products do not floor down
    return static_cast<std::int64_t>(std::floor(kept + 1e-9));
}

PruneReport prune_report(std::int64_t detector_tokens, std::int64_t bavit_tokens, double sparsity) {
    if (detector_tokens <= 0) throw std::invalid_argument("prune report: detector tokens must be positive");
    PruneReport r;
    r.sparsity = sparsity;
    r.bavit_tokens = bavit_tokens;
    r.detector_tokens = detector_tokens;
    r.pruned_detector_tokens = pruned_token_count(detector_tokens, sparsity);
    r.combined_tokens = r.pruned_detector_tokens + bavit_tokens;
    r.reduction = static_cast<double>(detector_tokens - r.combined_tokens) / static_cast<double>(detector_tokens);
    return r;
}

double token_reduction(std::span<const ImageTokens> per_image) {
    if (per_image.empty()) throw std::invalid_argument("token_reduction: no images");
    double sum = 0.0;
    for (const auto& img : per_image) sum += prune_report(img.detector_tokens, img.bavit_tokens, img.sparsity).reduction;
    return sum / static_cast<double>(per_image.size());
}

std::vector<PruneReport> table2_report(std::span<const double> sparsities, const TokenBudget& budget) {
    std::vector<PruneReport> rows;
    rows.reserve(sparsities.size());
    for (double s : sparsities) rows.push_back(prune_report(budget.detector_total(), budget.classifier_total(), s));
    return rows;
}

std::string format_prune_table(std::span<const PruneReport> rows) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%9s %8s %10s %14s %14s %11s\n", "sparsity", "bavit", "detector", "det_pruned",
                  "det+bavit", "reduction");
    out += line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%8.2f%% %8lld %10lld %14lld %14lld %10.3f%%\n", r.sparsity * 100.0,
                      static_cast<long long>(r.bavit_tokens), static_cast<long long>(r.detector_tokens),
                      static_cast<long long>(r.pruned_detector_tokens), static_cast<long long>(r.combined_tokens),
                      r.reduction * 100.0);
        out += line;
    }
    return out;
}

std::string prune_rows_json(std::span<const PruneReport> rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"sparsity", r.sparsity},
                       {"bavit_tokens", r.bavit_tokens},
                       {"detector_tokens", r.detector_tokens},
                       {"pruned_detector_tokens", r.pruned_detector_tokens},
                       {"combined_tokens", r.combined_tokens},
                       {"reduction_pct", r.reduction * 100.0}});
    }
    return arr.dump(2) + "\n";
}

}  // namespace bavit
