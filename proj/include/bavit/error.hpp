#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace bavit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid rectangles, grids that do not tile an image, mismatched shapes.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Unreadable or malformed input files.
class DataError : public Error {
public:
    explicit DataError(const std::string& what, std::optional<std::size_t> byte_offset = std::nullopt)
        : Error(what), byte_offset_(byte_offset) {}

    std::optional<std::size_t> byte_offset() const { return byte_offset_; }

private:
    std::optional<std::size_t> byte_offset_;
};

/// Non-finite values in logits, gradients or the loss.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace bavit
