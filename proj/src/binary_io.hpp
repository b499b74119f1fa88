#pragma once

// Little-endian byte buffers with offset-carrying parse errors. Internal.

#include "lowshot/error.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lowshot::detail {

class ByteWriter {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void expect_magic(std::string_view m) {
        need(m.size(), "magic");
        if (std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0)
            throw ParseError("bad magic, expected \"" + std::string(m) + "\"", pos_);
        pos_ += m.size();
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    double f32(const char* what) {
        const std::size_t at = pos_;
        const float f = std::bit_cast<float>(u32(what));
        if (!std::isfinite(f)) throw ParseError(std::string("non-finite ") + what, at);
        return static_cast<double>(f);
    }

    void expect_end() const {
        if (pos_ != bytes_.size()) throw ParseError("trailing bytes after payload", pos_);
    }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw ParseError(std::string("truncated input while reading ") + what, bytes_.size());
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace lowshot::detail
