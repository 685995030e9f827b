#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace memformer::byteio {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("write to " + path.string() + " failed");
    }
}

// Little-endian encoding helpers shared by the cube, label, and checkpoint
// formats. Values are assembled byte by byte so the host byte order is
// irrelevant.

class Writer {
public:
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::string_view bytes) {
        for (char c : bytes) {
            buffer_.push_back(static_cast<std::uint8_t>(c));
        }
    }

    const std::vector<std::uint8_t>& bytes() const { return buffer_; }

    void write_file(const std::filesystem::path& path) const { byteio::write_file(path, buffer_); }

private:
    void put(std::uint64_t v, int width) {
        for (int i = 0; i < width; ++i) {
            buffer_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    std::vector<std::uint8_t> buffer_;
};

/// Error raised when a binary file does not match its format. `offset` is the
/// byte position at which the problem was detected.
class FormatError : public std::runtime_error {
public:
    FormatError(std::size_t offset, const std::string& message)
        : std::runtime_error(message + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class Reader {
public:
    explicit Reader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

    static Reader from_file(const std::filesystem::path& path) { return Reader(read_file(path)); }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void expect_magic(std::string_view magic) {
        need(magic.size(), "magic");
        for (std::size_t i = 0; i < magic.size(); ++i) {
            if (bytes_[pos_ + i] != static_cast<std::uint8_t>(magic[i])) {
                throw FormatError(pos_, "bad magic, expected \"" + std::string(magic) + "\"");
            }
        }
        pos_ += magic.size();
    }

    std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(get(2, what)); }
    std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
    std::uint64_t u64(const char* what) { return get(8, what); }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    std::string raw(std::size_t n, const char* what) {
        need(n, what);
        std::string out(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return out;
    }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError(pos_, std::string("truncated ") + what + ": need " + std::to_string(n) +
                                        " bytes, found " + std::to_string(remaining()));
        }
    }

private:
    std::uint64_t get(int width, const char* what) {
        need(static_cast<std::size_t>(width), what);
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace memformer::byteio
