#include <doctest.h>

#include "bavit/error.hpp"
#include "bavit/postproc.hpp"
#include "bavit/rng.hpp"

using namespace bavit;

namespace {

TokenLabelMap grid_from(int rows, int cols, const std::string& cells) {
    TokenLabelMap m(PatchGrid(cols, rows, 1));
    for (int i = 0; i < rows * cols; ++i) m.set(i, cells[static_cast<std::size_t>(i)] == '1');
    return m;
}

}  // namespace

TEST_SUITE("postproc") {

TEST_CASE("uniform grids are fixed points") {
    const auto bg = grid_from(3, 3, "000000000");
    const auto fg = grid_from(3, 3, "111111111");
    CHECK(cca_step(bg) == bg);
    CHECK(cca_step(fg) == fg);
}

TEST_CASE("isolated background cell flips, two neighbours do not") {
    const auto hole = grid_from(3, 3, "111101111");
    CHECK(cca_step(hole).fg_count() == 9);

    const auto two = grid_from(3, 3, "110000000");
    const auto next = cca_step(two);
    CHECK(next.at(1, 0) == 0);  // neighbours (0,0), (0,1): 2, not > 2
    CHECK(next == two);

    const auto three = grid_from(3, 3, "111000000");
    CHECK(cca_step(three).at(1, 1) == 1);
}

TEST_CASE("steps compose") {
    Rng rng(3);
    TokenLabelMap m(PatchGrid(9, 7, 1));
    for (int t = 0; t < m.size(); ++t) m.set(t, rng.uniform() < 0.3);
    CcaConfig zero;
    zero.steps = 0;
    CHECK(cca(m, zero) == m);
    CHECK(cca(m) == cca_step(cca_step(cca_step(m))));
}

TEST_CASE("a crack closes in one step") {
    TokenLabelMap m(PatchGrid(8, 8, 1));
    for (int t = 0; t < 64; ++t) m.set(t, true);
    for (int r = 1; r < 7; ++r) m.set(r, 4, false);
    const auto after = cca_step(m);
    CHECK(after.fg_count() == 64);
}

TEST_CASE("config validation") {
    CcaConfig c;
    c.kernel[4] = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CcaConfig neg;
    neg.steps = -1;
    CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

TEST_CASE("four-neighbour kernel") {
    CcaConfig four;
    four.kernel = {0, 1, 0, 1, 0, 1, 0, 1, 0};
    four.threshold = 2;
    const auto diag = grid_from(3, 3, "101000101");
    CHECK(cca_step(diag, four).at(1, 1) == 0);
    const auto plus = grid_from(3, 3, "010101010");
    CHECK(cca_step(plus, four).at(1, 1) == 1);
}

}  // TEST_SUITE
