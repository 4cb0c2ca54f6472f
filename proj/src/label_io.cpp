#include "bavit/label_io.hpp"

#include <sstream>

#include "bavit/error.hpp"
#include "bavit/image_io.hpp"

namespace bavit {

std::string encode_label_map(const TokenLabelMap& labels) {
    std::string out = std::to_string(labels.grid().rows()) + " " + std::to_string(labels.grid().cols()) + "\n";
    out.reserve(out.size() + labels.labels().size() + 1);
    for (auto v : labels.labels()) out.push_back(v ? '1' : '0');
    out.push_back('\n');
    return out;
}

TokenLabelMap decode_label_map(const std::string& text, int patch_size) {
    std::istringstream in(text);
    int rows = 0;
    int cols = 0;
    std::string bits;
    if (!(in >> rows >> cols) || rows <= 0 || cols <= 0) throw DataError("label map: bad header line");
    if (!(in >> bits)) bits.clear();
    if (bits.size() != static_cast<std::size_t>(rows) * cols) {
        throw DataError("label map: expected " + std::to_string(rows * cols) + " labels, got " +
                        std::to_string(bits.size()));
    }
    std::vector<std::uint8_t> labels(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] != '0' && bits[i] != '1') throw DataError("label map: invalid character", i);
        labels[i] = bits[i] == '1';
    }
    return TokenLabelMap(PatchGrid(cols * patch_size, rows * patch_size, patch_size), std::move(labels));
}

void write_label_map(const std::filesystem::path& path, const TokenLabelMap& labels) {
    write_file(path, encode_label_map(labels));
}

TokenLabelMap read_label_map(const std::filesystem::path& path, int patch_size) {
    try {
        return decode_label_map(read_file(path), patch_size);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what(), e.byte_offset());
    }
}

}  // namespace bavit
