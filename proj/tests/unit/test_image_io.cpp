#include <doctest.h>

#include "bavit/error.hpp"
#include "bavit/image_io.hpp"
#include "support.hpp"

using namespace bavit;

TEST_SUITE("image_io") {

TEST_CASE("ppm round trip") {
    const auto img = testing::noise_image(7, 5, 3);
    const std::string bytes = encode_ppm(img);
    CHECK(bytes.rfind("P6\n7 5\n255\n", 0) == 0);
    CHECK(decode_ppm(bytes) == img);
}

TEST_CASE("pgm round trip and comments") {
    SegMask m(3, 2);
    m.values = {0, 1, 2, 3, 250, 0};
    const auto decoded = decode_pgm(encode_pgm(m));
    CHECK(decoded.values == m.values);
    const std::string with_comment = std::string("P5\n# made by hand\n3 2\n255\n") + std::string("\x00\x01\x02\x03\xfa\x00", 6);
    CHECK(decode_pgm(with_comment).values == m.values);
}

TEST_CASE("malformed netpbm reports offsets") {
    CHECK_THROWS_AS(decode_ppm("P3\n1 1\n255\n"), DataError);
    CHECK_THROWS_AS(decode_ppm("P6\n2 2\n65535\n"), DataError);
    try {
        decode_ppm("P6\n2 2\n255\nabc");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        REQUIRE(e.byte_offset().has_value());
        CHECK(*e.byte_offset() > 0);
    }
}

TEST_CASE("non-255 maxval is rescaled") {
    const std::string bytes = std::string("P6\n1 1\n15\n") + std::string("\x0f\x00\x07", 3);
    const auto img = decode_ppm(bytes);
    CHECK(img.pixels[0] == 255);
    CHECK(img.pixels[1] == 0);
    CHECK(img.pixels[2] == 119);
}

TEST_CASE("float conversion round trip") {
    const auto img = testing::noise_image(4, 4, 9);
    CHECK(to_rgb(to_float(img)) == img);
}

TEST_CASE("resizing") {
    const auto img = to_float(testing::noise_image(6, 4, 5));
    const auto same = resize_bilinear(img, 6, 4);
    CHECK(same.values == img.values);

    FloatImage flat(5, 5);
    for (auto& v : flat.values) v = 0.25f;
    for (float v : resize_bilinear(flat, 13, 9).values) CHECK(v == doctest::Approx(0.25f));

    SegMask m(2, 2);
    m.values = {1, 2, 3, 4};
    const auto up = resize_nearest(m, 4, 4);
    CHECK(up.at(0, 0) == 1);
    CHECK(up.at(3, 0) == 2);
    CHECK(up.at(0, 3) == 3);
    CHECK(up.at(3, 3) == 4);
}

TEST_CASE("file helpers") {
    testing::TempDir dir("io");
    const auto img = testing::noise_image(3, 3, 1);
    write_ppm(dir / "nested/a.ppm", img);
    CHECK(read_ppm(dir / "nested/a.ppm") == img);
    CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), DataError);
}

}  // TEST_SUITE
