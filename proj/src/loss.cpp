#include "bavit/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "bavit/error.hpp"

namespace bavit {

namespace {

template <typename T>
void check_labels(const Matrix<T>& m, std::span<const std::uint8_t> labels) {
    if (m.cols() != 2) throw GeometryError("loss: expected 2 classes per token");
    if (static_cast<std::size_t>(m.rows()) != labels.size()) {
        throw GeometryError("loss: " + std::to_string(m.rows()) + " tokens but " + std::to_string(labels.size()) +
                            " labels");
    }
    for (auto l : labels) {
        if (l > 1) throw std::invalid_argument("loss: label " + std::to_string(l) + " is not 0 or 1");
    }
}

}  // namespace

template <typename T>
Matrix<T> softmax_tokens(const Matrix<T>& logits) {
    if (!logits.allFinite()) throw NumericError("softmax: non-finite logits");
    Matrix<T> probs(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const T max = logits.row(i).maxCoeff();
        probs.row(i) = (logits.row(i).array() - max).exp();
        probs.row(i) /= probs.row(i).sum();
    }
    return probs;
}

template <typename T>
LossValue<T> accumulative_ce(const Matrix<T>& probs, std::span<const std::uint8_t> labels,
                             const ClassWeights& weights) {
    check_labels(probs, labels);
    LossValue<T> out;
    out.per_token.resize(labels.size());
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const T p = std::max(probs(static_cast<Eigen::Index>(i), labels[i]), static_cast<T>(kProbabilityFloor));
        out.per_token[i] = static_cast<T>(-weights.of(labels[i]) * std::log(static_cast<double>(p)));
        total += static_cast<double>(out.per_token[i]);
    }
    out.value = labels.empty() ? T(0) : static_cast<T>(total / static_cast<double>(labels.size()));
    return out;
}

template <typename T>
Matrix<T> accumulative_ce_grad(const Matrix<T>& logits, std::span<const std::uint8_t> labels,
                               const ClassWeights& weights) {
    check_labels(logits, labels);
    Matrix<T> grad = softmax_tokens(logits);
    const T inv_n = T(1) / static_cast<T>(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        grad(r, labels[i]) -= T(1);
        grad.row(r) *= static_cast<T>(weights.of(labels[i])) * inv_n;
    }
    return grad;
}

template Matrix<float> softmax_tokens<float>(const Matrix<float>&);
template Matrix<double> softmax_tokens<double>(const Matrix<double>&);
template LossValue<float> accumulative_ce<float>(const Matrix<float>&, std::span<const std::uint8_t>,
                                                 const ClassWeights&);
template LossValue<double> accumulative_ce<double>(const Matrix<double>&, std::span<const std::uint8_t>,
                                                   const ClassWeights&);
template Matrix<float> accumulative_ce_grad<float>(const Matrix<float>&, std::span<const std::uint8_t>,
                                                   const ClassWeights&);
template Matrix<double> accumulative_ce_grad<double>(const Matrix<double>&, std::span<const std::uint8_t>,
                                                     const ClassWeights&);

}  // namespace bavit
