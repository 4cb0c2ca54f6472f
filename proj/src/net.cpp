#include "bavit/net.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bavit/error.hpp"
#include "bavit/rng.hpp"

namespace bavit {

namespace {

constexpr double kNormEps = 1e-6;

template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
Matrix<T> zeros(Eigen::Index rows, Eigen::Index cols) {
    return Matrix<T>::Zero(rows, cols);
}

template <typename T>
void add_row(Matrix<T>& m, const Matrix<T>& row) {
    m.rowwise() += row.row(0);
}

template <typename T>
Matrix<T> column_sum(const Matrix<T>& m) {
    return m.colwise().sum();
}

/// Writes the normalized rows to hat/rstd and returns hat * scale + shift.
template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& scale, const Matrix<T>& shift, Matrix<T>& hat,
                     Vector<T>& rstd) {
    const auto n = x.cols();
    hat.resize(x.rows(), n);
    rstd.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const T mean = x.row(i).sum() / static_cast<T>(n);
        const auto centered = x.row(i).array() - mean;
        const T var = centered.square().sum() / static_cast<T>(n);
        rstd(i) = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
        hat.row(i) = centered * rstd(i);
    }
    Matrix<T> y = (hat.array().rowwise() * scale.row(0).array()).matrix();
    y.rowwise() += shift.row(0);
    return y;
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& hat, const Vector<T>& rstd,
                              const Matrix<T>& scale, Matrix<T>& d_scale, Matrix<T>& d_shift) {
    d_scale += (dy.array() * hat.array()).matrix().colwise().sum();
    d_shift += dy.colwise().sum();
    const Matrix<T> dhat = (dy.array().rowwise() * scale.row(0).array()).matrix();
    const auto n = static_cast<T>(dy.cols());
    Matrix<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const T mean_dhat = dhat.row(i).sum() / n;
        const T mean_dhat_hat = dhat.row(i).dot(hat.row(i)) / n;
        dx.row(i) = rstd(i) * (dhat.row(i).array() - mean_dhat - hat.row(i).array() * mean_dhat_hat);
    }
    return dx;
}

template <typename T>
constexpr T kInvSqrt2 = std::numbers::sqrt2_v<T> / T(2);

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * kInvSqrt2<T>));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * kInvSqrt2<T>));
    const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> * kInvSqrt2<T>;
    return cdf + x * pdf;
}

/// In-place numerically stable row softmax.
template <typename T>
void softmax_rows(Matrix<T>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const T max = m.row(i).maxCoeff();
        m.row(i) = (m.row(i).array() - max).exp();
        m.row(i) /= m.row(i).sum();
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw GeometryError(what);
}

template <typename T>
void check_shapes(const ModelParams<T>& p, const ModelConfig& c) {
    const auto S = c.embed_dim;
    require(p.patch_weight.rows() == c.patch_dim() && p.patch_weight.cols() == S,
            "forward: patch_embed weight does not match config");
    require(p.pos_embed.rows() == c.tokens() && p.pos_embed.cols() == S,
            "forward: pos_embed does not match config token count");
    require(static_cast<int>(p.layers.size()) == c.depth, "forward: layer count does not match config depth");
    for (const auto& l : p.layers) {
        require(l.qkv_weight.rows() == S && l.qkv_weight.cols() == 3 * S, "forward: attention qkv shape mismatch");
        require(l.fc1_weight.cols() == c.hidden_dim(), "forward: mlp hidden size mismatch");
    }
    require(p.head_weight.rows() == S && p.head_weight.cols() == c.classes, "forward: head shape mismatch");
}

}  // namespace

void ModelConfig::validate() const {
    if (patch_size <= 0 || image_size <= 0 || image_size % patch_size != 0) {
        throw std::invalid_argument("model config: image_size must be a positive multiple of patch_size");
    }
    if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
        throw std::invalid_argument("model config: embed_dim must be divisible by heads");
    }
    if (depth < 0) throw std::invalid_argument("model config: depth must be >= 0");
    if (mlp_ratio <= 0) throw std::invalid_argument("model config: mlp_ratio must be positive");
    if (classes != 2) throw std::invalid_argument("model config: classes must be 2");
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& c) {
    c.validate();
    const auto S = c.embed_dim;
    ModelParams<T> p;
    p.patch_weight = bavit::zeros<T>(c.patch_dim(), S);
    p.patch_bias = bavit::zeros<T>(1, S);
    p.pos_embed = bavit::zeros<T>(c.tokens(), S);
    p.layers.resize(static_cast<std::size_t>(c.depth));
    for (auto& l : p.layers) {
        l.norm1_scale = bavit::zeros<T>(1, S);
        l.norm1_shift = bavit::zeros<T>(1, S);
        l.qkv_weight = bavit::zeros<T>(S, 3 * S);
        l.qkv_bias = bavit::zeros<T>(1, 3 * S);
        l.proj_weight = bavit::zeros<T>(S, S);
        l.proj_bias = bavit::zeros<T>(1, S);
        l.norm2_scale = bavit::zeros<T>(1, S);
        l.norm2_shift = bavit::zeros<T>(1, S);
        l.fc1_weight = bavit::zeros<T>(S, c.hidden_dim());
        l.fc1_bias = bavit::zeros<T>(1, c.hidden_dim());
        l.fc2_weight = bavit::zeros<T>(c.hidden_dim(), S);
        l.fc2_bias = bavit::zeros<T>(1, S);
    }
    p.norm_scale = bavit::zeros<T>(1, S);
    p.norm_shift = bavit::zeros<T>(1, S);
    p.head_weight = bavit::zeros<T>(S, c.classes);
    p.head_bias = bavit::zeros<T>(1, c.classes);
    return p;
}

template <typename T>
std::size_t ModelParams<T>::scalar_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    ModelParams<U> out;
    out.layers.resize(layers.size());
    std::vector<const Matrix<T>*> src;
    visit([&](const std::string&, const Matrix<T>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Matrix<U>& m) { m = src[i++]->template cast<U>(); });
    return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
    ModelParams<T> p = ModelParams<T>::zeros(config);
    Rng rng(seed);
    auto normal_fill = [&](Matrix<T>& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.truncated_normal(0.02, -2.0, 2.0));
    };
    normal_fill(p.patch_weight);
    normal_fill(p.pos_embed);
    for (auto& l : p.layers) {
        l.norm1_scale.setOnes();
        l.norm2_scale.setOnes();
        normal_fill(l.qkv_weight);
        normal_fill(l.proj_weight);
        normal_fill(l.fc1_weight);
        normal_fill(l.fc2_weight);
    }
    p.norm_scale.setOnes();
    normal_fill(p.head_weight);
    return p;
}

template <typename T>
Matrix<T> patchify(const ModelConfig& config, std::span<const float> images, int batch) {
    const int k = config.patch_size;
    const int side = config.image_size;
    const int g = config.grid_side();
    const int M = config.tokens();
    require(batch >= 1, "patchify: batch must be >= 1");
    require(images.size() == static_cast<std::size_t>(batch) * side * side * 3,
            "patchify: image buffer does not match batch x " + std::to_string(side) + "x" + std::to_string(side) +
                "x3");
    Matrix<T> out(static_cast<Eigen::Index>(batch) * M, config.patch_dim());
    for (int b = 0; b < batch; ++b) {
        const float* img = images.data() + static_cast<std::size_t>(b) * side * side * 3;
        for (int r = 0; r < g; ++r) {
            for (int c = 0; c < g; ++c) {
                T* row = out.row(static_cast<Eigen::Index>(b) * M + r * g + c).data();
                for (int py = 0; py < k; ++py) {
                    const float* src = img + (static_cast<std::size_t>(r * k + py) * side + c * k) * 3;
                    for (int j = 0; j < k * 3; ++j) row[py * k * 3 + j] = (static_cast<T>(src[j]) - T(0.5)) / T(0.5);
                }
            }
        }
    }
    return out;
}

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& config, std::span<const float> images,
                         int batch, bool keep_cache) {
    config.validate();
    check_shapes(params, config);
    const int M = config.tokens();
    const int S = config.embed_dim;
    const int H = config.heads;
    const int d = config.head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(d));

    ForwardResult<T> result;
    ForwardCache<T>& cache = result.cache;
    cache.config = config;
    cache.batch = batch;
    cache.patches = patchify<T>(config, images, batch);

    Matrix<T> x(cache.patches.rows(), S);
    x.noalias() = cache.patches * params.patch_weight;
    add_row(x, params.patch_bias);
    for (int b = 0; b < batch; ++b) x.middleRows(static_cast<Eigen::Index>(b) * M, M) += params.pos_embed;

    for (const auto& lp : params.layers) {
        LayerCache<T> lc;
        lc.input = x;
        const Matrix<T> h1 = layer_norm(x, lp.norm1_scale, lp.norm1_shift, lc.norm1_hat, lc.norm1_rstd);
        lc.qkv.noalias() = h1 * lp.qkv_weight;
        add_row(lc.qkv, lp.qkv_bias);

        lc.attn_out = zeros<T>(x.rows(), S);
        lc.attn.reserve(static_cast<std::size_t>(batch) * H);
        for (int b = 0; b < batch; ++b) {
            const auto r0 = static_cast<Eigen::Index>(b) * M;
            for (int h = 0; h < H; ++h) {
                const auto q = lc.qkv.block(r0, h * d, M, d);
                const auto kk = lc.qkv.block(r0, S + h * d, M, d);
                const auto v = lc.qkv.block(r0, 2 * S + h * d, M, d);
                Matrix<T> a(M, M);
                a.noalias() = q * kk.transpose();
                a *= scale;
                softmax_rows(a);
                lc.attn_out.block(r0, h * d, M, d).noalias() = a * v;
                lc.attn.push_back(std::move(a));
            }
        }
        lc.mid = x;
        lc.mid.noalias() += lc.attn_out * lp.proj_weight;
        add_row(lc.mid, lp.proj_bias);

        lc.fc1_in = layer_norm(lc.mid, lp.norm2_scale, lp.norm2_shift, lc.norm2_hat, lc.norm2_rstd);
        lc.fc1_out.noalias() = lc.fc1_in * lp.fc1_weight;
        add_row(lc.fc1_out, lp.fc1_bias);
        lc.gelu_out = lc.fc1_out.unaryExpr([](T v) { return gelu(v); });
        x = lc.mid;
        x.noalias() += lc.gelu_out * lp.fc2_weight;
        add_row(x, lp.fc2_bias);
        if (keep_cache) cache.layers.push_back(std::move(lc));
    }

    cache.final_input = x;
    cache.features = layer_norm(x, params.norm_scale, params.norm_shift, cache.final_hat, cache.final_rstd);
    result.logits.noalias() = cache.features * params.head_weight;
    add_row(result.logits, params.head_bias);
    if (!keep_cache) {
        cache = ForwardCache<T>{};
        cache.config = config;
        cache.batch = batch;
    }
    return result;
}

template <typename T>
GradientSet<T> backward(const ModelParams<T>& params, const ForwardCache<T>& cache, const Matrix<T>& d_logits) {
    const ModelConfig& config = cache.config;
    check_shapes(params, config);
    const int M = config.tokens();
    const int S = config.embed_dim;
    const int H = config.heads;
    const int d = config.head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(d));
    const auto rows = static_cast<Eigen::Index>(cache.batch) * M;
    require(cache.patches.rows() == rows && static_cast<int>(cache.layers.size()) == config.depth,
            "backward: cache is incomplete (forward ran without keep_cache?)");
    require(d_logits.rows() == rows && d_logits.cols() == config.classes,
            "backward: d_logits shape does not match the cached forward pass");

    GradientSet<T> g = ModelParams<T>::zeros(config);
    g.head_weight.noalias() = cache.features.transpose() * d_logits;
    g.head_bias = column_sum(d_logits);
    Matrix<T> d_features = d_logits * params.head_weight.transpose();
    Matrix<T> dx = layer_norm_backward(d_features, cache.final_hat, cache.final_rstd, params.norm_scale,
                                       g.norm_scale, g.norm_shift);

    for (int li = config.depth - 1; li >= 0; --li) {
        const auto& lp = params.layers[static_cast<std::size_t>(li)];
        const auto& lc = cache.layers[static_cast<std::size_t>(li)];
        auto& lg = g.layers[static_cast<std::size_t>(li)];

        // MLP branch
        lg.fc2_weight.noalias() = lc.gelu_out.transpose() * dx;
        lg.fc2_bias = column_sum(dx);
        Matrix<T> d_hidden = dx * lp.fc2_weight.transpose();
        d_hidden.array() *= lc.fc1_out.unaryExpr([](T v) { return gelu_grad(v); }).array();
        lg.fc1_weight.noalias() = lc.fc1_in.transpose() * d_hidden;
        lg.fc1_bias = column_sum(d_hidden);
        const Matrix<T> d_fc1_in = d_hidden * lp.fc1_weight.transpose();
        Matrix<T> d_mid = dx + layer_norm_backward(d_fc1_in, lc.norm2_hat, lc.norm2_rstd, lp.norm2_scale,
                                                   lg.norm2_scale, lg.norm2_shift);

        // attention branch
        lg.proj_weight.noalias() = lc.attn_out.transpose() * d_mid;
        lg.proj_bias = column_sum(d_mid);
        const Matrix<T> d_attn_out = d_mid * lp.proj_weight.transpose();
        Matrix<T> d_qkv = zeros<T>(rows, 3 * S);
        for (int b = 0; b < cache.batch; ++b) {
            const auto r0 = static_cast<Eigen::Index>(b) * M;
            for (int h = 0; h < H; ++h) {
                const Matrix<T>& a = lc.attn[static_cast<std::size_t>(b) * H + h];
                const auto q = lc.qkv.block(r0, h * d, M, d);
                const auto kk = lc.qkv.block(r0, S + h * d, M, d);
                const auto v = lc.qkv.block(r0, 2 * S + h * d, M, d);
                const auto d_out = d_attn_out.block(r0, h * d, M, d);
                Matrix<T> d_a = d_out * v.transpose();
                d_qkv.block(r0, 2 * S + h * d, M, d).noalias() = a.transpose() * d_out;
                // softmax Jacobian, row by row
                const Vector<T> row_dot = (d_a.array() * a.array()).rowwise().sum();
                Matrix<T> d_scores = (a.array() * (d_a.array().colwise() - row_dot.array())).matrix();
                d_scores *= scale;
                d_qkv.block(r0, h * d, M, d).noalias() = d_scores * kk;
                d_qkv.block(r0, S + h * d, M, d).noalias() = d_scores.transpose() * q;
            }
        }
        Matrix<T> h1 = (lc.norm1_hat.array().rowwise() * lp.norm1_scale.row(0).array()).matrix();
        h1.rowwise() += lp.norm1_shift.row(0);
        lg.qkv_weight.noalias() = h1.transpose() * d_qkv;
        lg.qkv_bias = column_sum(d_qkv);
        const Matrix<T> d_h1 = d_qkv * lp.qkv_weight.transpose();
        dx = d_mid + layer_norm_backward(d_h1, lc.norm1_hat, lc.norm1_rstd, lp.norm1_scale, lg.norm1_scale,
                                         lg.norm1_shift);
    }

    for (int b = 0; b < cache.batch; ++b) g.pos_embed += dx.middleRows(static_cast<Eigen::Index>(b) * M, M);
    g.patch_weight.noalias() = cache.patches.transpose() * dx;
    g.patch_bias = column_sum(dx);
    return g;
}

std::int64_t count_params(const ModelConfig& c) {
    c.validate();
    const std::int64_t S = c.embed_dim;
    const std::int64_t R = c.hidden_dim();
    const std::int64_t patch = static_cast<std::int64_t>(c.patch_dim()) * S + S;
    const std::int64_t pos = static_cast<std::int64_t>(c.tokens()) * S;
    const std::int64_t per_layer = 2 * S                // norm1
                                   + S * 3 * S + 3 * S  // qkv
                                   + S * S + S          // proj
                                   + 2 * S              // norm2
                                   + S * R + R          // fc1
                                   + R * S + S;         // fc2
    const std::int64_t tail = 2 * S + S * c.classes + c.classes;
    return patch + pos + c.depth * per_layer + tail;
}

FlopBreakdown flop_breakdown(const ModelConfig& c) {
    c.validate();
    const std::int64_t M = c.tokens();
    const std::int64_t S = c.embed_dim;
    const std::int64_t R = c.hidden_dim();
    const std::int64_t P = c.patch_dim();
    const std::int64_t L = c.depth;
    FlopBreakdown f;
    f.patch_embed = 2 * M * P * S;
    f.qkv = L * 2 * M * S * 3 * S;
    f.attention_scores = L * 2 * M * M * S;
    f.attention_values = L * 2 * M * M * S;
    f.projection = L * 2 * M * S * S;
    f.mlp = L * 2 * (2 * M * S * R);
    f.head = 2 * M * S * c.classes;

    const std::int64_t embed_adds = 2 * M * S;  // bias + positional embedding
    const std::int64_t per_layer = 2 * 8 * M * S       // two LayerNorms
                                   + 3 * M * S         // qkv bias
                                   + 6 * c.heads * M * M  // score scaling + softmax
                                   + 2 * M * S         // projection bias + residual
                                   + R * M + 8 * R * M  // fc1 bias + GELU
                                   + 2 * M * S;        // fc2 bias + residual
    f.elementwise = embed_adds + L * per_layer + 8 * M * S + M * c.classes;
    return f;
}

std::int64_t estimate_flops(const ModelConfig& config) { return flop_breakdown(config).total(); }

#define BAVIT_INSTANTIATE(T)                                                                                     \
    template struct ModelParams<T>;                                                                              \
    template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                   \
    template Matrix<T> patchify<T>(const ModelConfig&, std::span<const float>, int);                            \
    template ForwardResult<T> forward<T>(const ModelParams<T>&, const ModelConfig&, std::span<const float>, int, \
                                         bool);                                                                   \
    template GradientSet<T> backward<T>(const ModelParams<T>&, const ForwardCache<T>&, const Matrix<T>&);

BAVIT_INSTANTIATE(float)
BAVIT_INSTANTIATE(double)
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

#undef BAVIT_INSTANTIATE

}  // namespace bavit
