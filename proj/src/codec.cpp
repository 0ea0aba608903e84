#include "mixedrc/codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "mixedrc/bytes.hpp"
#include "mixedrc/imgops.hpp"

namespace mixedrc::codec {

namespace {

constexpr char kMagic[4] = {'T', 'Y', 'C', '1'};
constexpr int kBlock = 8;

// orthonormal 8-point DCT-II basis
const std::array<std::array<double, kBlock>, kBlock>& dct_matrix() {
    static const auto m = [] {
        std::array<std::array<double, kBlock>, kBlock> mm{};
        for (int k = 0; k < kBlock; ++k) {
            const double s = k == 0 ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
            for (int n = 0; n < kBlock; ++n)
                mm[k][n] = s * std::cos((2.0 * n + 1.0) * k * 3.14159265358979323846 / (2.0 * kBlock));
        }
        return mm;
    }();
    return m;
}

const std::array<int, 64>& zigzag_order() {
    static const auto z = [] {
        std::array<int, 64> order{};
        int idx = 0;
        for (int s = 0; s < 2 * kBlock - 1; ++s) {
            if (s % 2 == 0) {
                for (int y = std::min(s, kBlock - 1); y >= std::max(0, s - kBlock + 1); --y)
                    order[idx++] = y * kBlock + (s - y);
            } else {
                for (int y = std::max(0, s - kBlock + 1); y <= std::min(s, kBlock - 1); ++y)
                    order[idx++] = y * kBlock + (s - y);
            }
        }
        return order;
    }();
    return z;
}

void dct2d(const double in[kBlock][kBlock], double out[kBlock][kBlock]) {
    const auto& m = dct_matrix();
    double tmp[kBlock][kBlock];
    for (int k = 0; k < kBlock; ++k)
        for (int x = 0; x < kBlock; ++x) {
            double acc = 0.0;
            for (int n = 0; n < kBlock; ++n) acc += m[k][n] * in[n][x];
            tmp[k][x] = acc;
        }
    for (int y = 0; y < kBlock; ++y)
        for (int k = 0; k < kBlock; ++k) {
            double acc = 0.0;
            for (int n = 0; n < kBlock; ++n) acc += tmp[y][n] * m[k][n];
            out[y][k] = acc;
        }
}

void idct2d(const double in[kBlock][kBlock], double out[kBlock][kBlock]) {
    const auto& m = dct_matrix();
    double tmp[kBlock][kBlock];
    for (int n = 0; n < kBlock; ++n)
        for (int x = 0; x < kBlock; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kBlock; ++k) acc += m[k][n] * in[k][x];
            tmp[n][x] = acc;
        }
    for (int y = 0; y < kBlock; ++y)
        for (int n = 0; n < kBlock; ++n) {
            double acc = 0.0;
            for (int k = 0; k < kBlock; ++k) acc += tmp[y][k] * m[k][n];
            out[y][n] = acc;
        }
}

void encode_block(bytes::Writer& w, const int32_t coef[64]) {
    int pos = 0;
    while (pos < 64) {
        int run = 0;
        while (pos + run < 64 && coef[zigzag_order()[pos + run]] == 0) ++run;
        if (pos + run == 64) {
            w.u8(0xFF);  // end of block
            return;
        }
        w.u8(static_cast<uint8_t>(run));
        bytes::put_varint(w, bytes::zigzag(coef[zigzag_order()[pos + run]]));
        pos += run + 1;
    }
}

void decode_block(bytes::Reader& r, int32_t coef[64]) {
    std::fill(coef, coef + 64, 0);
    int pos = 0;
    while (pos < 64) {
        const uint8_t b = r.u8();
        if (b == 0xFF) return;
        const int run = b;
        if (pos + run >= 64) throw std::runtime_error("toy codec: run overflows block");
        pos += run;
        coef[zigzag_order()[pos]] = static_cast<int32_t>(bytes::unzigzag(bytes::get_varint(r)));
        ++pos;
    }
}

void encode_plane(bytes::Writer& w, const Tensor& frame, int ci, double step) {
    const int h = frame.h(), wd = frame.w();
    for (int by = 0; by < h; by += kBlock)
        for (int bx = 0; bx < wd; bx += kBlock) {
            double block[kBlock][kBlock];
            for (int y = 0; y < kBlock; ++y)
                for (int x = 0; x < kBlock; ++x) block[y][x] = frame.at(ci, by + y, bx + x) * 255.0;
            double freq[kBlock][kBlock];
            dct2d(block, freq);
            int32_t q[64];
            for (int y = 0; y < kBlock; ++y)
                for (int x = 0; x < kBlock; ++x)
                    q[y * kBlock + x] = static_cast<int32_t>(std::llround(freq[y][x] / step));
            encode_block(w, q);
        }
}

void decode_plane(bytes::Reader& r, Tensor& frame, int ci, double step) {
    const int h = frame.h(), wd = frame.w();
    for (int by = 0; by < h; by += kBlock)
        for (int bx = 0; bx < wd; bx += kBlock) {
            int32_t q[64];
            decode_block(r, q);
            double freq[kBlock][kBlock];
            for (int y = 0; y < kBlock; ++y)
                for (int x = 0; x < kBlock; ++x) freq[y][x] = q[y * kBlock + x] * step;
            double block[kBlock][kBlock];
            idct2d(freq, block);
            for (int y = 0; y < kBlock; ++y)
                for (int x = 0; x < kBlock; ++x)
                    frame.at(ci, by + y, bx + x) = static_cast<float>(std::clamp(block[y][x] / 255.0, 0.0, 1.0));
        }
}

}  // namespace

double quant_step(int qp) {
    if (qp < 0 || qp > 51) throw std::invalid_argument("toy codec: qp must be in [0,51], got " + std::to_string(qp));
    return std::pow(2.0, (qp - 4.0) / 6.0);
}

std::vector<uint8_t> toy_encode(const Clip& clip, int qp) {
    clip.validate();
    const double step = quant_step(qp);
    const Tensor& f0 = clip.frames.front();

    bytes::Writer w;
    w.raw(kMagic, 4);
    w.u8(static_cast<uint8_t>(qp));
    w.u8(static_cast<uint8_t>(f0.c()));
    w.u32(static_cast<uint32_t>(f0.w()));
    w.u32(static_cast<uint32_t>(f0.h()));
    w.u32(static_cast<uint32_t>(clip.frame_count()));
    w.u32(static_cast<uint32_t>(clip.fps_num));
    w.u32(static_cast<uint32_t>(clip.fps_den));

    for (const Tensor& frame : clip.frames) {
        auto [padded, rec] = imgops::pad_to_multiple(frame, kBlock);
        bytes::Writer fw;
        for (int ci = 0; ci < padded.c(); ++ci) encode_plane(fw, padded, ci, step);
        w.u32(static_cast<uint32_t>(fw.buf.size()));
        w.raw(fw.buf.data(), fw.buf.size());
    }
    return std::move(w.buf);
}

std::vector<uint8_t> toy_encode_frame(const Tensor& frame, int qp) {
    return toy_encode(Clip({frame}), qp);
}

Clip toy_decode(const std::vector<uint8_t>& data) {
    bytes::Reader r(data);
    if (r.str(4) != std::string(kMagic, 4)) throw std::runtime_error("toy codec: bad magic");
    const int qp = r.u8();
    const double step = quant_step(qp);
    const int channels = r.u8();
    const int width = static_cast<int>(r.u32());
    const int height = static_cast<int>(r.u32());
    const int frames = static_cast<int>(r.u32());
    const int fps_num = static_cast<int>(r.u32());
    const int fps_den = static_cast<int>(r.u32());
    if (channels < 1 || width < 1 || height < 1 || frames < 1)
        throw std::runtime_error("toy codec: corrupt header");

    const int ph = (height % kBlock == 0) ? height : height + kBlock - height % kBlock;
    const int pw = (width % kBlock == 0) ? width : width + kBlock - width % kBlock;

    Clip clip;
    clip.fps_num = fps_num;
    clip.fps_den = fps_den;
    clip.frames.reserve(frames);
    for (int f = 0; f < frames; ++f) {
        const uint32_t len = r.u32();
        r.need(len);
        bytes::Reader fr(r.p + r.pos, len);
        r.pos += len;
        Tensor padded = Tensor::chw(channels, ph, pw);
        for (int ci = 0; ci < channels; ++ci) decode_plane(fr, padded, ci, step);
        if (ph == height && pw == width)
            clip.frames.push_back(std::move(padded));
        else
            clip.frames.push_back(imgops::crop_to(padded, imgops::CropRecord{height, width}));
    }
    return clip;
}

}  // namespace mixedrc::codec
