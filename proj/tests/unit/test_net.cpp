#include <doctest.h>

#include <cmath>

#include "bavit/error.hpp"
#include "bavit/loss.hpp"
#include "bavit/net.hpp"
#include "gradcheck_oracle.hpp"

using namespace bavit;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.image_size = 8;
    c.patch_size = 4;
    c.embed_dim = 8;
    c.depth = 1;
    c.heads = 2;
    c.mlp_ratio = 2;
    return c;
}

std::int64_t layer_params(const ModelConfig& c) {
    const std::int64_t S = c.embed_dim;
    const std::int64_t H = static_cast<std::int64_t>(c.embed_dim) * c.mlp_ratio;
    return 4 * S + (S * 3 * S + 3 * S) + (S * S + S) + (S * H + H) + (H * S + S);
}

}  // namespace

TEST_SUITE("net") {

TEST_CASE("config validation") {
    CHECK_NOTHROW(ModelConfig::small().validate());
    CHECK_NOTHROW(ModelConfig::large().validate());
    ModelConfig bad;
    bad.heads = 5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.image_size = 100;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("init is seeded and follows the stated distribution") {
    const auto config = ModelConfig::small();
    const auto a = init_params<float>(config, 4);
    const auto b = init_params<float>(config, 4);
    const auto c = init_params<float>(config, 5);
    CHECK(a.patch_weight == b.patch_weight);
    CHECK(a.layers[1].fc2_weight == b.layers[1].fc2_weight);
    CHECK(a.patch_weight != c.patch_weight);

    a.visit([](const std::string& name, const Matrix<float>& m) {
        if (name.ends_with("bias") || name.find("norm") != std::string::npos) {
            const float expected = (name.find("norm") != std::string::npos && name.ends_with("weight")) ? 1.0f : 0.0f;
            CHECK_MESSAGE((m.array() == expected).all(), name);
        }
    });

    const auto& w = a.patch_weight;
    REQUIRE(w.size() >= 100000);
    const double mean = w.mean();
    const double var = (w.array() - static_cast<float>(mean)).square().mean();
    CHECK(std::sqrt(var) >= 0.015);
    CHECK(std::sqrt(var) <= 0.025);
    CHECK(w.cwiseAbs().maxCoeff() <= 2.0f);
}

TEST_CASE("logit shape") {
    const auto config = ModelConfig::small();
    const auto params = init_params<float>(config, 0);
    std::vector<float> image(384 * 384 * 3, 0.5f);
    const auto out = forward(params, config, image, 1, false);
    CHECK(out.logits.rows() == 576);
    CHECK(out.logits.cols() == 2);
    CHECK_THROWS_AS(forward(params, config, std::span<const float>(image).first(100), 1), GeometryError);
}

TEST_CASE("constant network emits the head bias") {
    const auto config = tiny_config();
    auto params = ModelParams<double>::zeros(config);
    params.head_bias << 0.7, -1.3;
    Rng rng(1);
    std::vector<float> images(2 * 8 * 8 * 3);
    for (auto& v : images) v = static_cast<float>(rng.uniform());
    const auto out = forward(params, config, images, 2, false);
    for (Eigen::Index r = 0; r < out.logits.rows(); ++r) {
        CHECK(out.logits(r, 0) == doctest::Approx(0.7));
        CHECK(out.logits(r, 1) == doctest::Approx(-1.3));
    }
}

TEST_CASE("swapping patches and positions swaps the outputs") {
    Rng rng(3);
    ModelConfig config = tiny_config();
    config.depth = 2;
    auto c = testing::make_case(config, 1, rng);
    const auto base = forward(c.params, config, c.images, 1, false).logits;

    // swap tokens 0 and 3: the (0,0) and (1,1) patches
    std::vector<float> swapped = c.images;
    const int k = config.patch_size;
    for (int y = 0; y < k; ++y) {
        for (int x = 0; x < k; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                const std::size_t a = (static_cast<std::size_t>(y) * 8 + x) * 3 + ch;
                const std::size_t b = (static_cast<std::size_t>(y + k) * 8 + x + k) * 3 + ch;
                std::swap(swapped[a], swapped[b]);
            }
        }
    }
    auto params = c.params;
    params.pos_embed.row(0).swap(params.pos_embed.row(3));
    const auto perm = forward(params, config, swapped, 1, false).logits;
    for (int j = 0; j < 2; ++j) {
        CHECK(perm(0, j) == doctest::Approx(base(3, j)).epsilon(1e-12));
        CHECK(perm(3, j) == doctest::Approx(base(0, j)).epsilon(1e-12));
        CHECK(perm(1, j) == doctest::Approx(base(1, j)).epsilon(1e-12));
        CHECK(perm(2, j) == doctest::Approx(base(2, j)).epsilon(1e-12));
    }
}

TEST_CASE("attention rows are distributions") {
    Rng rng(8);
    const auto c = testing::make_case(tiny_config(), 2, rng);
    const auto out = forward(c.params, c.config, c.images, 2, true);
    REQUIRE(out.cache.layers.size() == 1);
    const auto& attn = out.cache.layers[0].attn;
    REQUIRE(attn.size() == 4);
    for (const auto& a : attn) {
        CHECK((a.array() >= 0.0).all());
        for (Eigen::Index r = 0; r < a.rows(); ++r) CHECK(a.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("float and double forward agree") {
    const auto config = tiny_config();
    const auto pf = init_params<float>(config, 2);
    const auto pd = pf.cast<double>();
    Rng rng(2);
    std::vector<float> images(8 * 8 * 3);
    for (auto& v : images) v = static_cast<float>(rng.uniform());
    const auto lf = forward(pf, config, images, 1, false).logits;
    const auto ld = forward(pd, config, images, 1, false).logits;
    CHECK((lf.cast<double>() - ld).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("backward structure") {
    Rng rng(5);
    const auto c = testing::make_case(tiny_config(), 2, rng);
    const auto fwd = forward(c.params, c.config, c.images, 2, true);

    const Matrix<double> zero = Matrix<double>::Zero(fwd.logits.rows(), 2);
    backward(c.params, fwd.cache, zero).visit([](const std::string& name, const Matrix<double>& g) {
        CHECK_MESSAGE(g.isZero(0.0), name);
    });

    Matrix<double> d(fwd.logits.rows(), 2);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.normal();
    const auto grads = backward(c.params, fwd.cache, d);
    CHECK(grads.head_bias(0, 0) == doctest::Approx(d.col(0).sum()));
    CHECK(grads.head_bias(0, 1) == doctest::Approx(d.col(1).sum()));
}

TEST_CASE("gradients match finite differences on a tiny config") {
    ModelConfig config;
    config.image_size = 4;
    config.patch_size = 2;  // M = 4
    config.embed_dim = 8;
    config.depth = 1;
    config.heads = 2;
    config.mlp_ratio = 4;
    Rng rng(12);
    const auto c = testing::make_case(config, 1, rng);
    const auto result = testing::compare_with_finite_differences(c, testing::analytic_gradients(c));
    CHECK_MESSAGE(result.max_rel_error < 1e-4, result.worst_tensor);
}

TEST_CASE("parameter count") {
    const auto small = ModelConfig::small();
    CHECK(count_params(small) == 1148738);
    CHECK(static_cast<std::int64_t>(ModelParams<float>::zeros(small).scalar_count()) == count_params(small));

    ModelConfig flat = small;
    flat.depth = 0;
    const std::int64_t S = 192;
    CHECK(count_params(flat) == (768 * S + S) + 576 * S + 2 * S + (S * 2 + 2));

    ModelConfig deep = small;
    deep.depth = 4;
    CHECK(count_params(deep) - count_params(small) == 2 * layer_params(small));
    CHECK(count_params(ModelConfig::large()) == count_params(flat) + 10 * layer_params(small));
}

TEST_CASE("flop estimate") {
    const auto small = ModelConfig::small();
    const auto f = estimate_flops(small);
    CHECK(f >= 1.5e9);
    CHECK(f <= 2.4e9);

    // Square grids only: compare M with 4M (quadratic terms x16, linear x4).
    ModelConfig a = small;
    a.image_size = 256;
    ModelConfig four = a;
    four.image_size = 512;
    const auto fa = flop_breakdown(a);
    const auto f4 = flop_breakdown(four);
    CHECK(f4.attention_scores == 16 * fa.attention_scores);
    CHECK(f4.attention_values == 16 * fa.attention_values);
    CHECK(f4.qkv == 4 * fa.qkv);
    CHECK(f4.mlp == 4 * fa.mlp);
    CHECK(f4.patch_embed == 4 * fa.patch_embed);

    ModelConfig flat = small;
    flat.depth = 0;
    const auto f0 = flop_breakdown(flat);
    CHECK(f0.qkv == 0);
    CHECK(f0.mlp == 0);
    CHECK(f0.attention_scores == 0);
    CHECK(f0.matmul_total() == f0.patch_embed + f0.head);
}

}  // TEST_SUITE
