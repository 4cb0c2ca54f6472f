#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bavit/patch_labeling.hpp"

namespace bavit {

/// 8-bit interleaved RGB.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* at(int x, int y) const {
        return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Interleaved RGB with channel values in [0,1], row-major H x W x 3.
struct FloatImage {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    FloatImage() = default;
    FloatImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

    float* at(int x, int y) { return &values[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const float* at(int x, int y) const { return &values[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

// Binary netpbm I/O. Readers throw DataError on malformed input.
RgbImage decode_ppm(const std::string& bytes);
SegMask decode_pgm(const std::string& bytes);
std::string encode_ppm(const RgbImage& image);
std::string encode_pgm(const SegMask& mask);

RgbImage read_ppm(const std::filesystem::path& path);
SegMask read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
void write_pgm(const std::filesystem::path& path, const SegMask& mask);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

FloatImage to_float(const RgbImage& image);
/// Rounds to nearest and saturates.
RgbImage to_rgb(const FloatImage& image);

/// Half-pixel-center bilinear resampling with edge clamping.
FloatImage resize_bilinear(const FloatImage& image, int width, int height);
/// Nearest-neighbour resampling; class ids are preserved.
SegMask resize_nearest(const SegMask& mask, int width, int height);

}  // namespace bavit
