#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlgt/errors.hpp"

namespace mlgt {

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
   public:
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void text(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    template <typename U>
    void uint(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }

    std::vector<std::uint8_t>& buffer() { return buf_; }

   private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; every failure reports its offset.
class ByteReader {
   public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
        need(n, what);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::string text(std::size_t n, const char* what) {
        auto b = bytes(n, what);
        return {b.begin(), b.end()};
    }

    template <typename U>
    U uint(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(U(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(uint<std::uint32_t>(what)); }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

   private:
    void need(std::size_t n, const char* what) const {
        if (data_.size() - pos_ < n) {
            throw FormatError(std::string("truncated input while reading ") + what, pos_);
        }
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace mlgt
