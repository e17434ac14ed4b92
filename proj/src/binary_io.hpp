#pragma once

// Little-endian byte buffer helpers shared by the checkpoint and coded-file formats.

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "camc/errors.hpp"

namespace camc::io {

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void raw(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void str16(const std::string& s) {
        if (s.size() > 0xffff) throw ContractError("string too long for the binary format");
        u16(static_cast<std::uint16_t>(s.size()));
        raw(s);
    }
    void str32(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s);
    }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

// Throws the error type E on reads past the end.
template <class E>
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4))); }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::string raw(std::size_t n) {
        auto b = bytes(n);
        return std::string(b.begin(), b.end());
    }
    std::string str16() { return raw(u16()); }
    std::string str32() { return raw(u32()); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (n > data_.size() - pos_) throw E("unexpected end of data");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
// Writes via a temporary file and rename so readers never see a partial file.
void write_file(const std::string& path, std::span<const std::uint8_t> data);

}  // namespace camc::io
