#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixedrc::bytes {

// Little-endian byte writer/reader used by every on-disk format.
struct Writer {
    std::vector<uint8_t> buf;

    void u8(uint8_t v) { buf.push_back(v); }
    void u16(uint16_t v) {
        buf.push_back(static_cast<uint8_t>(v));
        buf.push_back(static_cast<uint8_t>(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void raw(const void* p, std::size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void str(const std::string& s) { raw(s.data(), s.size()); }
    void f32_array(const float* p, std::size_t n) {
        // floats are IEEE-754; stored little-endian
        for (std::size_t i = 0; i < n; ++i) f32(p[i]);
    }
};

struct Reader {
    const uint8_t* p;
    std::size_t n;
    std::size_t pos = 0;

    Reader(const uint8_t* data, std::size_t size) : p(data), n(size) {}
    explicit Reader(const std::vector<uint8_t>& v) : p(v.data()), n(v.size()) {}

    void need(std::size_t k) const {
        if (pos + k > n) throw std::runtime_error("truncated stream at byte " + std::to_string(pos));
    }
    uint8_t u8() {
        need(1);
        return p[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p[pos]) | static_cast<uint16_t>(p[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
    std::vector<uint8_t> blob(std::size_t k) {
        need(k);
        std::vector<uint8_t> b(p + pos, p + pos + k);
        pos += k;
        return b;
    }
    bool done() const { return pos == n; }
};

// LEB128 with zigzag mapping for signed values.
inline void put_varint(Writer& w, uint64_t v) {
    while (v >= 0x80) {
        w.u8(static_cast<uint8_t>(v) | 0x80);
        v >>= 7;
    }
    w.u8(static_cast<uint8_t>(v));
}

inline uint64_t get_varint(Reader& r) {
    uint64_t v = 0;
    int shift = 0;
    while (true) {
        const uint8_t b = r.u8();
        v |= static_cast<uint64_t>(b & 0x7F) << shift;
        if (!(b & 0x80)) break;
        shift += 7;
        if (shift > 63) throw std::runtime_error("varint too long");
    }
    return v;
}

inline uint64_t zigzag(int64_t v) { return (static_cast<uint64_t>(v) << 1) ^ static_cast<uint64_t>(v >> 63); }
inline int64_t unzigzag(uint64_t v) { return static_cast<int64_t>(v >> 1) ^ -static_cast<int64_t>(v & 1); }

void write_file(const std::string& path, const std::vector<uint8_t>& data);
std::vector<uint8_t> read_file(const std::string& path);

}  // namespace mixedrc::bytes
