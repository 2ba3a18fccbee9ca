#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "lbridge/errors.hpp"

// Little-endian byte packing for the binary file formats. Build the whole
// payload in memory, write it in one shot; read the whole file, then parse.
namespace lbridge::binio {

inline void append_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void append_u64(std::string& out, uint64_t v) {
    append_u32(out, static_cast<uint32_t>(v & 0xFFFFFFFFu));
    append_u32(out, static_cast<uint32_t>(v >> 32));
}

inline void append_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    append_u32(out, bits);
}

class Reader {
public:
    Reader(std::string data, std::string what)
        : data_(std::move(data)), what_(std::move(what)) {}

    uint32_t u32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + pos_);
        const uint32_t v = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                           (static_cast<uint32_t>(p[2]) << 16) |
                           (static_cast<uint32_t>(p[3]) << 24);
        pos_ += 4;
        return v;
    }

    uint64_t u64() {
        const uint64_t lo = u32();
        const uint64_t hi = u32();
        return lo | (hi << 32);
    }

    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    std::string bytes(size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    size_t offset() const { return pos_; }
    size_t size() const { return data_.size(); }
    size_t remaining() const { return data_.size() - pos_; }

    void expect_end() const {
        if (pos_ != data_.size()) {
            throw DataError(what_ + ": " + std::to_string(data_.size() - pos_) +
                            " trailing bytes at byte " + std::to_string(pos_));
        }
    }

private:
    std::string data_;
    std::string what_;
    size_t pos_ = 0;

    void need(size_t n) {
        if (pos_ + n > data_.size()) {
            throw DataError(what_ + ": unexpected end of file at byte " + std::to_string(pos_) +
                            " (need " + std::to_string(n) + " more, have " +
                            std::to_string(data_.size() - pos_) + ")");
        }
    }
};

std::string read_file(const std::string& path, const std::string& what);
void write_file(const std::string& path, const std::string& payload, const std::string& what);

}  // namespace lbridge::binio
