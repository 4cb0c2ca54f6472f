#pragma once

#include <filesystem>
#include <string>

#include "bavit/patch_labeling.hpp"

namespace bavit {

// Label-map text format:
//   line 1: "<rows> <cols>"
//   line 2: rows*cols characters '0'/'1' in row-major order
std::string encode_label_map(const TokenLabelMap& labels);
/// The file does not carry pixel geometry, so the patch size is supplied.
TokenLabelMap decode_label_map(const std::string& text, int patch_size);

void write_label_map(const std::filesystem::path& path, const TokenLabelMap& labels);
TokenLabelMap read_label_map(const std::filesystem::path& path, int patch_size);

}  // namespace bavit
