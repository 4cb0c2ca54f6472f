#pragma once

// Central finite-difference oracle for the classifier's parameter gradients.
// Deliberately independent of backward(): it only calls forward() and the loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bavit/loss.hpp"
#include "bavit/net.hpp"
#include "bavit/rng.hpp"

namespace bavit::testing {

struct GradCheckCase {
    ModelConfig config;
    ModelParams<double> params;
    std::vector<float> images;
    std::vector<std::uint8_t> labels;
    int batch = 1;
};

inline double loss_of(const GradCheckCase& c, const ModelParams<double>& params) {
    const auto fwd = forward(params, c.config, c.images, c.batch, false);
    return accumulative_ce(softmax_tokens(fwd.logits), c.labels).value;
}

/// Parameters ~ 0.25 N(0,1) (norm scales centred on 1), uniform pixels, random labels.
inline GradCheckCase make_case(const ModelConfig& config, int batch, Rng& rng) {
    GradCheckCase c;
    c.config = config;
    c.batch = batch;
    c.params = ModelParams<double>::zeros(c.config);
    c.params.visit([&](const std::string& name, Matrix<double>& m) {
        const bool is_scale = name.find("norm") != std::string::npos && name.ends_with("weight");
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (is_scale ? 1.0 : 0.0) + 0.25 * rng.normal();
    });
    const std::size_t pixels = static_cast<std::size_t>(c.batch) * c.config.image_size * c.config.image_size * 3;
    c.images.resize(pixels);
    for (auto& v : c.images) v = static_cast<float>(rng.uniform());
    c.labels.resize(static_cast<std::size_t>(c.batch) * c.config.tokens());
    for (auto& l : c.labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 1));
    return c;
}

/// Random tiny config with M <= 16, S <= 16, depth <= 2, and parameters drawn
/// with enough spread that attention and GELU are far from linear.
inline GradCheckCase random_case(std::uint64_t seed) {
    Rng rng(seed);
    GradCheckCase c;
    c.config.patch_size = rng.uniform_int(1, 2) * 2;
    c.config.image_size = c.config.patch_size * rng.uniform_int(1, 4);
    c.config.embed_dim = 4 * rng.uniform_int(1, 4);
    const int head_options[] = {1, 2, 4};
    do {
        c.config.heads = head_options[rng.uniform_int(0, 2)];
    } while (c.config.embed_dim % c.config.heads != 0);
    c.config.mlp_ratio = rng.uniform_int(1, 3);
    c.config.depth = rng.uniform_int(0, 2);
    return make_case(c.config, rng.uniform_int(1, 2), rng);
}

/// |a - n| / max(|a|, |n|, floor), maximised over every parameter scalar.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t scalars = 0;
};

inline GradCheckResult compare_with_finite_differences(const GradCheckCase& c, const GradientSet<double>& analytic,
                                                       double step = 1e-4, double floor = 1e-6) {
    GradCheckResult result;
    std::vector<const Matrix<double>*> grads;
    analytic.visit([&](const std::string&, const Matrix<double>& m) { grads.push_back(&m); });
    ModelParams<double> probe = c.params;
    std::size_t t = 0;
    probe.visit([&](const std::string& name, Matrix<double>& m) {
        const Matrix<double>& g = *grads[t++];
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double saved = m.data()[i];
            m.data()[i] = saved + step;
            const double up = loss_of(c, probe);
            m.data()[i] = saved - step;
            const double down = loss_of(c, probe);
            m.data()[i] = saved;
            const double numeric = (up - down) / (2 * step);
            const double a = g.data()[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_tensor = name;
            }
            ++result.scalars;
        }
    });
    return result;
}

inline GradientSet<double> analytic_gradients(const GradCheckCase& c) {
    const auto fwd = forward(c.params, c.config, c.images, c.batch, true);
    return backward(c.params, fwd.cache, accumulative_ce_grad(fwd.logits, c.labels));
}

}  // namespace bavit::testing
