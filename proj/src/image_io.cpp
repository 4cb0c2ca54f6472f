#include "bavit/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bavit/error.hpp"

namespace bavit {

namespace {

struct NetpbmHeader {
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t data_offset = 0;
};

NetpbmHeader parse_header(const std::string& bytes, std::string_view magic) {
    if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0) {
        throw DataError("netpbm: expected magic " + std::string(magic), 0);
    }
    std::size_t pos = 2;
    auto next_int = [&]() {
        // whitespace and '#' comments may separate header fields
        while (pos < bytes.size()) {
            const char ch = bytes[pos];
            if (ch == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(ch))) {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            throw DataError("netpbm: malformed header", pos);
        }
        long value = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > (1L << 24)) throw DataError("netpbm: header value too large", pos);
            ++pos;
        }
        return static_cast<int>(value);
    };
    NetpbmHeader h;
    h.width = next_int();
    h.height = next_int();
    h.maxval = next_int();
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw DataError("netpbm: missing whitespace after header", pos);
    }
    h.data_offset = pos + 1;
    if (h.width <= 0 || h.height <= 0) throw DataError("netpbm: zero image dimension", pos);
    if (h.maxval <= 0 || h.maxval > 255) {
        throw DataError("netpbm: only 8-bit files are supported (maxval " + std::to_string(h.maxval) + ")", pos);
    }
    return h;
}

void require_payload(const std::string& bytes, const NetpbmHeader& h, std::size_t expected) {
    const std::size_t available = bytes.size() - h.data_offset;
    if (available < expected) {
        throw DataError("netpbm: truncated pixel data (expected " + std::to_string(expected) +
                            " bytes, got " + std::to_string(available) + ")",
                        bytes.size());
    }
}

}  // namespace

RgbImage decode_ppm(const std::string& bytes) {
    const NetpbmHeader h = parse_header(bytes, "P6");
    RgbImage image(h.width, h.height);
    require_payload(bytes, h, image.pixels.size());
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const int raw = static_cast<unsigned char>(bytes[h.data_offset + i]);
        image.pixels[i] = h.maxval == 255 ? static_cast<std::uint8_t>(raw)
                                          : static_cast<std::uint8_t>(std::lround(raw * 255.0 / h.maxval));
    }
    return image;
}

SegMask decode_pgm(const std::string& bytes) {
    const NetpbmHeader h = parse_header(bytes, "P5");
    SegMask mask(h.width, h.height);
    require_payload(bytes, h, mask.values.size());
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset), mask.values.size(),
                mask.values.begin());
    return mask;
}

std::string encode_ppm(const RgbImage& image) {
    std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    return out;
}

std::string encode_pgm(const SegMask& mask) {
    std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(mask.values.data()), mask.values.size());
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
    try {
        return decode_ppm(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what(), e.byte_offset());
    }
}

SegMask read_pgm(const std::filesystem::path& path) {
    try {
        return decode_pgm(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what(), e.byte_offset());
    }
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) { write_file(path, encode_ppm(image)); }
void write_pgm(const std::filesystem::path& path, const SegMask& mask) { write_file(path, encode_pgm(mask)); }

FloatImage to_float(const RgbImage& image) {
    FloatImage out(image.width, image.height);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) out.values[i] = image.pixels[i] / 255.0f;
    return out;
}

RgbImage to_rgb(const FloatImage& image) {
    RgbImage out(image.width, image.height);
    for (std::size_t i = 0; i < image.values.size(); ++i) {
        const float v = std::clamp(image.values[i], 0.0f, 1.0f);
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return out;
}

FloatImage resize_bilinear(const FloatImage& image, int width, int height) {
    if (width <= 0 || height <= 0) throw GeometryError("resize: target size must be positive");
    if (width == image.width && height == image.height) return image;
    FloatImage out(width, height);
    const double sx = static_cast<double>(image.width) / width;
    const double sy = static_cast<double>(image.height) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
        const int y0 = std::min(static_cast<int>(fy), image.height - 1);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
            const int x0 = std::min(static_cast<int>(fx), image.width - 1);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - x0;
            float* dst = out.at(x, y);
            for (int ch = 0; ch < 3; ++ch) {
                const double top = image.at(x0, y0)[ch] * (1 - wx) + image.at(x1, y0)[ch] * wx;
                const double bottom = image.at(x0, y1)[ch] * (1 - wx) + image.at(x1, y1)[ch] * wx;
                dst[ch] = static_cast<float>(top * (1 - wy) + bottom * wy);
            }
        }
    }
    return out;
}

SegMask resize_nearest(const SegMask& mask, int width, int height) {
    if (width <= 0 || height <= 0) throw GeometryError("resize: target size must be positive");
    if (width == mask.width && height == mask.height) return mask;
    SegMask out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(static_cast<int>((y + 0.5) * mask.height / height), mask.height - 1);
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(static_cast<int>((x + 0.5) * mask.width / width), mask.width - 1);
            out.at(x, y) = mask.at(sx, sy);
        }
    }
    return out;
}

}  // namespace bavit
