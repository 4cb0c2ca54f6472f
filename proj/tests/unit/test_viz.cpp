#include <doctest.h>

#include "bavit/viz.hpp"
#include "support.hpp"

using namespace bavit;

TEST_SUITE("viz") {

TEST_CASE("overlay blending") {
    const auto img = testing::noise_image(32, 32, 1);
    const auto g = PatchGrid::square(32, 16);
    TokenLabelMap labels(g, {1, 0, 0, 1});

    RenderSpec none;
    none.alpha = 0.0;
    CHECK(render_overlay(img, labels, none) == img);

    RenderSpec solid;
    solid.alpha = 1.0;
    const auto fg = render_overlay(img, TokenLabelMap(g, {1, 1, 1, 1}), solid);
    for (std::size_t i = 0; i < fg.pixels.size(); i += 3) {
        CHECK(fg.pixels[i] == solid.fg_tint[0]);
        CHECK(fg.pixels[i + 1] == solid.fg_tint[1]);
        CHECK(fg.pixels[i + 2] == solid.fg_tint[2]);
    }

    const RenderSpec spec;
    const auto out = render_overlay(img, labels, spec);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const bool is_fg = labels.at(y / 16, x / 16) != 0;
            const auto& tint = is_fg ? spec.fg_tint : spec.bg_tint;
            for (int c = 0; c < 3; ++c) {
                const double want = (1 - spec.alpha) * img.at(x, y)[c] + spec.alpha * tint[static_cast<std::size_t>(c)];
                CHECK(std::abs(out.at(x, y)[c] - want) <= 0.5 + 1e-9);
            }
        }
    }
}

TEST_CASE("sparse rendering") {
    const auto img = testing::noise_image(80, 32, 2);
    const PatchGrid g(80, 32, 16);  // 10 tokens
    const RenderSpec spec;
    CHECK(render_sparse(img, PruneMask(g, std::vector<std::uint8_t>(10, 1)), spec) == img);

    const auto blank = render_sparse(img, PruneMask(g, std::vector<std::uint8_t>(10, 0)), spec);
    for (auto p : blank.pixels) CHECK(p == 255);

    const PruneMask forty(g, {0, 1, 1, 0, 1, 0, 1, 1, 0, 1});
    const auto out = render_sparse(img, forty, spec);
    int fill_patches = 0;
    for (int t = 0; t < 10; ++t) {
        const auto r = g.patch_rect(t);
        bool all_fill = true;
        bool all_same = true;
        for (int y = r.y_min; y < r.y_max; ++y) {
            for (int x = r.x_min; x < r.x_max; ++x) {
                for (int c = 0; c < 3; ++c) {
                    all_fill = all_fill && out.at(x, y)[c] == 255;
                    all_same = all_same && out.at(x, y)[c] == img.at(x, y)[c];
                }
            }
        }
        CHECK((forty.kept(t) ? all_same : all_fill));
        fill_patches += !forty.kept(t);
    }
    CHECK(fill_patches == 4);
    CHECK(forty.sparsity() == doctest::Approx(0.4));
}

TEST_CASE("sparse filename") {
    CHECK(sparse_filename("img", 0.4) == "img_sparse_40.0.ppm");
    CHECK(sparse_filename("a_b", 0.0) == "a_b_sparse_0.0.ppm");
    CHECK(sparse_filename("x", 0.3456) == "x_sparse_34.6.ppm");
}

}  // TEST_SUITE
