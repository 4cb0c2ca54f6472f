#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bavit/net.hpp"

namespace bavit {

// Class index convention everywhere: 0 = BG, 1 = FG.
inline constexpr int kBackground = 0;
inline constexpr int kForeground = 1;

/// Optional per-class multipliers on the token NLL. Off (1, 1) by default.
struct ClassWeights {
    double background = 1.0;
    double foreground = 1.0;

    double of(std::uint8_t label) const { return label ? foreground : background; }
};

/// Row-wise stable softmax over the 2 classes. Throws NumericError on non-finite logits.
template <typename T>
Matrix<T> softmax_tokens(const Matrix<T>& logits);

template <typename T>
struct LossValue {
    T value = 0;                 // mean of per_token
    std::vector<T> per_token;    // B*M weighted negative log-likelihoods
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Accumulative cross-entropy: mean over all B*M tokens of -log p(true class),
/// with probabilities clamped below at 1e-12.
template <typename T>
LossValue<T> accumulative_ce(const Matrix<T>& probs, std::span<const std::uint8_t> labels,
                             const ClassWeights& weights = {});

/// d(accumulative_ce o softmax)/d logits = (softmax - one_hot) / (B*M).
template <typename T>
Matrix<T> accumulative_ce_grad(const Matrix<T>& logits, std::span<const std::uint8_t> labels,
                               const ClassWeights& weights = {});

}  // namespace bavit
