#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bavit/data.hpp"

namespace bavit {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Architecture of the CLS-free token classifier. Inputs are square
/// image_size x image_size RGB images; tokens() = (image_size / patch_size)^2.
struct ModelConfig {
    int image_size = 384;
    int patch_size = 16;
    int embed_dim = 192;
    int depth = 2;
    int heads = 3;
    int mlp_ratio = 4;
    int classes = 2;

    int grid_side() const { return image_size / patch_size; }
    int tokens() const { return grid_side() * grid_side(); }
    int patch_dim() const { return 3 * patch_size * patch_size; }
    int head_dim() const { return embed_dim / heads; }
    int hidden_dim() const { return embed_dim * mlp_ratio; }
    PatchGrid grid() const { return PatchGrid::square(image_size, patch_size); }

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;

    static ModelConfig small() { return {}; }
    static ModelConfig large() {
        ModelConfig c;
        c.depth = 10;
        return c;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct EncoderLayerParams {
    Matrix<T> norm1_scale, norm1_shift;  // 1 x S
    Matrix<T> qkv_weight, qkv_bias;      // S x 3S, 1 x 3S  (columns: Q | K | V, heads contiguous)
    Matrix<T> proj_weight, proj_bias;    // S x S, 1 x S
    Matrix<T> norm2_scale, norm2_shift;  // 1 x S
    Matrix<T> fc1_weight, fc1_bias;      // S x rS, 1 x rS
    Matrix<T> fc2_weight, fc2_bias;      // rS x S, 1 x S
};

/// Every learnable tensor. Weights are stored input-major (y = x W + b).
/// Also used, shape-congruent, as the gradient set.
template <typename T>
struct ModelParams {
    Matrix<T> patch_weight, patch_bias;  // 3k^2 x S, 1 x S
    Matrix<T> pos_embed;                 // M x S
    std::vector<EncoderLayerParams<T>> layers;
    Matrix<T> norm_scale, norm_shift;  // 1 x S
    Matrix<T> head_weight, head_bias;  // S x 2, 1 x 2

    /// All tensors zero, shaped by config.
    static ModelParams zeros(const ModelConfig& config);

    /// Calls f(name, tensor) for every tensor in a fixed canonical order.
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    std::size_t scalar_count() const;

    template <typename U>
    ModelParams<U> cast() const;

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        f(std::string("patch_embed.weight"), self.patch_weight);
        f(std::string("patch_embed.bias"), self.patch_bias);
        f(std::string("pos_embed"), self.pos_embed);
        for (std::size_t i = 0; i < self.layers.size(); ++i) {
            auto& l = self.layers[i];
            const std::string p = "blocks." + std::to_string(i) + ".";
            f(p + "norm1.weight", l.norm1_scale);
            f(p + "norm1.bias", l.norm1_shift);
            f(p + "attn.qkv.weight", l.qkv_weight);
            f(p + "attn.qkv.bias", l.qkv_bias);
            f(p + "attn.proj.weight", l.proj_weight);
            f(p + "attn.proj.bias", l.proj_bias);
            f(p + "norm2.weight", l.norm2_scale);
            f(p + "norm2.bias", l.norm2_shift);
            f(p + "mlp.fc1.weight", l.fc1_weight);
            f(p + "mlp.fc1.bias", l.fc1_bias);
            f(p + "mlp.fc2.weight", l.fc2_weight);
            f(p + "mlp.fc2.bias", l.fc2_bias);
        }
        f(std::string("norm.weight"), self.norm_scale);
        f(std::string("norm.bias"), self.norm_shift);
        f(std::string("head.weight"), self.head_weight);
        f(std::string("head.bias"), self.head_bias);
    }
};

template <typename T>
using GradientSet = ModelParams<T>;

/// Linear weights and positional embeddings ~ truncated normal (std 0.02,
/// cut at +-2), biases 0, norm scales 1, shifts 0.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

/// Per-layer activations kept for the backward pass. Row blocks of M rows
/// belong to consecutive images.
template <typename T>
struct LayerCache {
    Matrix<T> input;               // BM x S
    Matrix<T> norm1_hat;           // BM x S
    Eigen::Matrix<T, Eigen::Dynamic, 1> norm1_rstd;
    Matrix<T> qkv;                 // BM x 3S
    std::vector<Matrix<T>> attn;   // B*heads matrices, M x M
    Matrix<T> attn_out;            // BM x S (heads concatenated)
    Matrix<T> mid;                 // BM x S
    Matrix<T> norm2_hat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> norm2_rstd;
    Matrix<T> fc1_in;              // BM x S
    Matrix<T> fc1_out;             // BM x rS, pre-activation
    Matrix<T> gelu_out;            // BM x rS
};

template <typename T>
struct ForwardCache {
    ModelConfig config;
    int batch = 0;
    Matrix<T> patches;  // BM x 3k^2, normalized pixels
    std::vector<LayerCache<T>> layers;
    Matrix<T> final_input;
    Matrix<T> final_hat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> final_rstd;
    Matrix<T> features;  // BM x S, head input
};

/// Logits are BM x 2 (column 0 = BG, column 1 = FG).
template <typename T>
struct ForwardResult {
    Matrix<T> logits;
    ForwardCache<T> cache;
};

/// Image tokens in row-major grid order; feature index (py*k + px)*3 + channel;
/// pixels mapped from [0,1] to [-1,1] with mean 0.5 / std 0.5.
template <typename T>
Matrix<T> patchify(const ModelConfig& config, std::span<const float> images, int batch);

/// patchify -> patch embed -> + pos -> depth x (pre-norm MHSA + residual,
/// pre-norm GELU MLP + residual) -> final norm -> per-token linear head.
/// images is B x H x W x 3 in [0,1]. Throws GeometryError on shape mismatch.
template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& config, std::span<const float> images,
                         int batch, bool keep_cache = true);

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& config, const Batch& batch,
                         bool keep_cache = true) {
    return forward(params, config, batch.images, batch.size, keep_cache);
}

/// Analytic gradient of <d_logits, logits> with respect to every parameter.
template <typename T>
GradientSet<T> backward(const ModelParams<T>& params, const ForwardCache<T>& cache, const Matrix<T>& d_logits);

/// Closed-form parameter count.
std::int64_t count_params(const ModelConfig& config);

/// Per-stage forward FLOPs. Matrix products cost 2 FLOPs per multiply-accumulate;
/// elementwise costs per element: bias/residual add 1, LayerNorm 8, softmax 5
/// plus 1 for the score scaling, GELU 8.
struct FlopBreakdown {
    std::int64_t patch_embed = 0;
    std::int64_t qkv = 0;
    std::int64_t attention_scores = 0;  // Q K^T
    std::int64_t attention_values = 0;  // A V
    std::int64_t projection = 0;
    std::int64_t mlp = 0;
    std::int64_t head = 0;
    std::int64_t elementwise = 0;

    std::int64_t total() const {
        return patch_embed + qkv + attention_scores + attention_values + projection + mlp + head + elementwise;
    }
    std::int64_t matmul_total() const { return total() - elementwise; }
};

FlopBreakdown flop_breakdown(const ModelConfig& config);
std::int64_t estimate_flops(const ModelConfig& config);

}  // namespace bavit
