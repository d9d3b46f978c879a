#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace latentir {

/// Caller supplied arguments that violate an operation's preconditions.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed binary file. `offset` is the byte position where decoding failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& path, std::uint64_t offset, const std::string& what)
        : std::runtime_error(path + ": format error at offset " + std::to_string(offset) + ": " + what),
          path_(path),
          offset_(offset) {}

    [[nodiscard]] const std::string& path() const noexcept { return path_; }
    [[nodiscard]] std::uint64_t offset() const noexcept { return offset_; }

private:
    std::string path_;
    std::uint64_t offset_;
};

/// Malformed text input. Line numbers are 1-based.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Training diverged or produced a non-finite quantity.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace latentir
