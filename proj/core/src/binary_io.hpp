#pragma once

// Little-endian encode/decode over in-memory buffers. Readers throw
// FormatError with the failing byte offset.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>

#include "latentir/errors.hpp"

namespace latentir::detail {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

class BinaryWriter {
public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        char raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        buf_.append(raw, sizeof(T));
    }

    void put_bytes(std::string_view bytes) { buf_.append(bytes); }

    /// u32 length prefix followed by the raw bytes.
    void put_string(std::string_view s) {
        put(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }

    /// LEB128 unsigned varint.
    void put_varint(std::uint64_t v) {
        while (v >= 0x80) {
            buf_.push_back(static_cast<char>((v & 0x7f) | 0x80));
            v >>= 7;
        }
        buf_.push_back(static_cast<char>(v));
    }

    [[nodiscard]] const std::string& bytes() const noexcept { return buf_; }
    [[nodiscard]] std::string release() noexcept { return std::move(buf_); }

private:
    std::string buf_;
};

class BinaryReader {
public:
    BinaryReader(std::string_view data, std::string source)
        : data_(data), source_(std::move(source)) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get(const char* what) {
        need(sizeof(T), what);
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string_view get_bytes(std::size_t n, const char* what) {
        need(n, what);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::string get_string(const char* what) {
        const auto len = get<std::uint32_t>(what);
        return std::string(get_bytes(len, what));
    }

    std::uint64_t get_varint(const char* what) {
        std::uint64_t v = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            need(1, what);
            const auto byte = static_cast<unsigned char>(data_[pos_++]);
            v |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
            if ((byte & 0x80) == 0) {
                return v;
            }
        }
        fail(std::string("varint overflow in ") + what);
    }

    [[noreturn]] void fail(const std::string& what) const { throw FormatError(source_, pos_, what); }

    [[nodiscard]] std::size_t offset() const noexcept { return pos_; }
    [[nodiscard]] std::size_t remaining() const noexcept { return data_.size() - pos_; }

    void expect_end() const {
        if (remaining() != 0) {
            fail(std::to_string(remaining()) + " trailing bytes");
        }
    }

private:
    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            fail(std::string("truncated while reading ") + what);
        }
    }

    std::string_view data_;
    std::string source_;
    std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::string_view bytes);

}  // namespace latentir::detail
