#include "mixedrc/imgops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixedrc::imgops {

Tensor down_shuffle(const Tensor& x, int r) {
    require_frame(x, "down_shuffle");
    if (r <= 0) throw std::invalid_argument("down_shuffle: r must be positive, got " + std::to_string(r));
    if (x.h() % r != 0)
        throw std::invalid_argument("down_shuffle: height " + std::to_string(x.h()) + " not divisible by r=" +
                                    std::to_string(r));
    if (x.w() % r != 0)
        throw std::invalid_argument("down_shuffle: width " + std::to_string(x.w()) + " not divisible by r=" +
                                    std::to_string(r));
    const int c = x.c(), h = x.h() / r, w = x.w() / r;
    Tensor out = Tensor::chw(c * r * r, h, w);
    for (int ci = 0; ci < c; ++ci)
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
                const int oc = ci * r * r + dy * r + dx;
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) out.at(oc, i, j) = x.at(ci, i * r + dy, j * r + dx);
            }
    return out;
}

Tensor up_shuffle(const Tensor& x, int r) {
    require_frame(x, "up_shuffle");
    if (r <= 0) throw std::invalid_argument("up_shuffle: r must be positive, got " + std::to_string(r));
    if (x.c() % (r * r) != 0)
        throw std::invalid_argument("up_shuffle: channels " + std::to_string(x.c()) + " not divisible by r^2=" +
                                    std::to_string(r * r));
    const int c = x.c() / (r * r), h = x.h(), w = x.w();
    Tensor out = Tensor::chw(c, h * r, w * r);
    for (int ci = 0; ci < c; ++ci)
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
                const int ic = ci * r * r + dy * r + dx;
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) out.at(ci, i * r + dy, j * r + dx) = x.at(ic, i, j);
            }
    return out;
}

double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

namespace {

// Resample one axis with 4-tap cubic interpolation, replicate borders.
// in: (C, H, W) treated as rows of length `len` along the chosen axis.
Tensor resize_axis(const Tensor& x, int out_len, bool horizontal) {
    const int c = x.c(), h = x.h(), w = x.w();
    const int in_len = horizontal ? w : h;
    const int oh = horizontal ? h : out_len;
    const int ow = horizontal ? out_len : w;
    Tensor out = Tensor::chw(c, oh, ow);

    const double scale = static_cast<double>(out_len) / in_len;
    std::vector<int> idx(static_cast<std::size_t>(out_len) * 4);
    std::vector<double> wgt(static_cast<std::size_t>(out_len) * 4);
    for (int o = 0; o < out_len; ++o) {
        const double src = (o + 0.5) / scale - 0.5;
        const int base = static_cast<int>(std::floor(src));
        for (int k = 0; k < 4; ++k) {
            const int tap = base - 1 + k;
            idx[o * 4 + k] = std::clamp(tap, 0, in_len - 1);
            wgt[o * 4 + k] = cubic_weight(src - tap);
        }
    }

    for (int ci = 0; ci < c; ++ci) {
        if (horizontal) {
            for (int y = 0; y < h; ++y) {
                const float* row = x.plane(ci) + static_cast<std::size_t>(y) * w;
                float* orow = out.plane(ci) + static_cast<std::size_t>(y) * ow;
                for (int o = 0; o < ow; ++o) {
                    const int* id = &idx[o * 4];
                    const double* wg = &wgt[o * 4];
                    orow[o] = static_cast<float>(wg[0] * row[id[0]] + wg[1] * row[id[1]] + wg[2] * row[id[2]] +
                                                 wg[3] * row[id[3]]);
                }
            }
        } else {
            for (int o = 0; o < oh; ++o) {
                const int* id = &idx[o * 4];
                const double* wg = &wgt[o * 4];
                const float* r0 = x.plane(ci) + static_cast<std::size_t>(id[0]) * w;
                const float* r1 = x.plane(ci) + static_cast<std::size_t>(id[1]) * w;
                const float* r2 = x.plane(ci) + static_cast<std::size_t>(id[2]) * w;
                const float* r3 = x.plane(ci) + static_cast<std::size_t>(id[3]) * w;
                float* orow = out.plane(ci) + static_cast<std::size_t>(o) * ow;
                for (int j = 0; j < w; ++j)
                    orow[j] = static_cast<float>(wg[0] * r0[j] + wg[1] * r1[j] + wg[2] * r2[j] + wg[3] * r3[j]);
            }
        }
    }
    return out;
}

}  // namespace

Tensor bicubic_resize_to(const Tensor& x, int out_h, int out_w, bool clamp_output) {
    require_frame(x, "bicubic_resize");
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bicubic_resize: output dims must be >= 1, got " + std::to_string(out_h) + "x" +
                                    std::to_string(out_w));
    Tensor t = resize_axis(x, out_w, /*horizontal=*/true);
    t = resize_axis(t, out_h, /*horizontal=*/false);
    if (clamp_output)
        for (float& f : t.v) f = std::clamp(f, 0.0f, 1.0f);
    return t;
}

Tensor bicubic_resize(const Tensor& x, double scale, bool clamp_output) {
    require_frame(x, "bicubic_resize");
    if (scale <= 0.0) throw std::invalid_argument("bicubic_resize: scale must be positive");
    const int oh = static_cast<int>(std::llround(x.h() * scale));
    const int ow = static_cast<int>(std::llround(x.w() * scale));
    return bicubic_resize_to(x, oh, ow, clamp_output);
}

Clip bicubic_resize(const Clip& c, double scale, bool clamp_output) {
    Clip out;
    out.fps_num = c.fps_num;
    out.fps_den = c.fps_den;
    out.frames.reserve(c.frames.size());
    for (const auto& f : c.frames) out.frames.push_back(bicubic_resize(f, scale, clamp_output));
    return out;
}

std::vector<double> gaussian_kernel_1d(double sigma, int ksize) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel_1d: sigma must be positive");
    if (ksize < 3 || ksize % 2 == 0)
        throw std::invalid_argument("gaussian_kernel_1d: ksize must be odd and >= 3, got " + std::to_string(ksize));
    const int half = ksize / 2;
    std::vector<double> k(ksize);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        k[i + half] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        sum += k[i + half];
    }
    for (double& v : k) v /= sum;
    return k;
}

Tensor gaussian_lowpass(const Tensor& x, double sigma, int ksize) {
    require_frame(x, "gaussian_lowpass");
    const auto k = gaussian_kernel_1d(sigma, ksize);
    const int half = ksize / 2;
    const int c = x.c(), h = x.h(), w = x.w();

    Tensor tmp = Tensor::chw(c, h, w);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y) {
            const float* row = x.plane(ci) + static_cast<std::size_t>(y) * w;
            float* orow = tmp.plane(ci) + static_cast<std::size_t>(y) * w;
            for (int xw = 0; xw < w; ++xw) {
                double acc = 0.0;
                for (int t = -half; t <= half; ++t) acc += k[t + half] * row[std::clamp(xw + t, 0, w - 1)];
                orow[xw] = static_cast<float>(acc);
            }
        }
    Tensor out = Tensor::chw(c, h, w);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y) {
            float* orow = out.plane(ci) + static_cast<std::size_t>(y) * w;
            for (int xw = 0; xw < w; ++xw) {
                double acc = 0.0;
                for (int t = -half; t <= half; ++t)
                    acc += k[t + half] * tmp.at(ci, std::clamp(y + t, 0, h - 1), xw);
                orow[xw] = static_cast<float>(acc);
            }
        }
    return out;
}

std::pair<Tensor, CropRecord> pad_to_multiple(const Tensor& x, int r) {
    require_frame(x, "pad_to_multiple");
    if (r < 1) throw std::invalid_argument("pad_to_multiple: r must be >= 1");
    const int h = x.h(), w = x.w();
    const int ph = (h % r == 0) ? h : h + (r - h % r);
    const int pw = (w % r == 0) ? w : w + (r - w % r);
    if (ph == h && pw == w) return {x, CropRecord{}};
    Tensor out = Tensor::chw(x.c(), ph, pw);
    for (int ci = 0; ci < x.c(); ++ci)
        for (int y = 0; y < ph; ++y)
            for (int j = 0; j < pw; ++j) out.at(ci, y, j) = x.at(ci, std::min(y, h - 1), std::min(j, w - 1));
    return {out, CropRecord{h, w}};
}

Tensor crop_to(const Tensor& x, const CropRecord& rec) {
    if (!rec.padded()) return x;
    require_frame(x, "crop_to");
    if (rec.orig_h > x.h() || rec.orig_w > x.w())
        throw std::invalid_argument("crop_to: record larger than frame");
    Tensor out = Tensor::chw(x.c(), rec.orig_h, rec.orig_w);
    for (int ci = 0; ci < x.c(); ++ci)
        for (int y = 0; y < rec.orig_h; ++y)
            for (int j = 0; j < rec.orig_w; ++j) out.at(ci, y, j) = x.at(ci, y, j);
    return out;
}

}  // namespace mixedrc::imgops
