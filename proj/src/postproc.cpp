#include "bavit/postproc.hpp"

#include <stdexcept>

namespace bavit {

void CcaConfig::validate() const {
    if (kernel[4] != 0) throw std::invalid_argument("cca: kernel centre weight must be 0");
    if (threshold < 0) throw std::invalid_argument("cca: threshold must be >= 0");
    if (steps < 0) throw std::invalid_argument("cca: steps must be >= 0");
}

TokenLabelMap cca_step(const TokenLabelMap& labels, const CcaConfig& config) {
    config.validate();
    const int rows = labels.grid().rows();
    const int cols = labels.grid().cols();
    TokenLabelMap out = labels;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (labels.at(r, c)) continue;
            int sum = 0;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr;
                    const int cc = c + dc;
                    if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
                    sum += config.kernel[static_cast<std::size_t>((dr + 1) * 3 + (dc + 1))] * labels.at(rr, cc);
                }
            }
            if (sum > config.threshold) out.set(r, c, true);
        }
    }
    return out;
}

TokenLabelMap cca(const TokenLabelMap& labels, const CcaConfig& config) {
    config.validate();
    TokenLabelMap current = labels;
    for (int i = 0; i < config.steps; ++i) {
        TokenLabelMap next = cca_step(current, config);
        if (next == current) break;  // fixpoint; further steps are no-ops
        current = std::move(next);
    }
    return current;
}

}  // namespace bavit
