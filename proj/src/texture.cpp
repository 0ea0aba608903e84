#include "mixedrc/texture.hpp"

#include <cmath>
#include <stdexcept>

#include "mixedrc/imgops.hpp"

namespace mixedrc::texture {

namespace {

void check_cfg(const LossConfig& cfg) {
    if (cfg.p != 1 && cfg.p != 2) throw std::invalid_argument("loss config: p must be 1 or 2");
    if (cfg.surrogate_k <= 0.0f) throw std::invalid_argument("loss config: surrogate_k must be positive");
    if (cfg.scale < 1) throw std::invalid_argument("loss config: scale must be >= 1");
    if (cfg.flat_threshold < 0.0f) throw std::invalid_argument("loss config: flat_threshold must be >= 0");
}

void check_pair(const Tensor& y, const Tensor& x, const LossConfig& cfg) {
    require_frame(y, "analysis y");
    require_frame(x, "analysis x");
    if (y.c() != x.c())
        throw std::invalid_argument("analysis: channel mismatch " + y.shape_str() + " vs " + x.shape_str());
    if (y.h() != x.h() * cfg.scale || y.w() != x.w() * cfg.scale)
        throw std::invalid_argument("analysis: y " + y.shape_str() + " is not " + std::to_string(cfg.scale) +
                                    "x the size of x " + x.shape_str());
}

double norm_over_count(const std::vector<double>& diff, int p) {
    double acc = 0.0;
    for (double d : diff) acc += (p == 1) ? std::abs(d) : d * d;
    if (p == 2) acc = std::sqrt(acc);
    return acc / static_cast<double>(diff.size());
}

}  // namespace

Tensor luma(const Tensor& frame) {
    require_frame(frame, "luma");
    if (frame.c() == 1) return frame;
    if (frame.c() != 3)
        throw std::invalid_argument("luma: expected 1 or 3 channels, got " + std::to_string(frame.c()));
    Tensor out = Tensor::chw(1, frame.h(), frame.w());
    const float* r = frame.plane(0);
    const float* g = frame.plane(1);
    const float* b = frame.plane(2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.v[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
    return out;
}

SignMap sign_map(const Tensor& ry, const Tensor& rlp, float eps) {
    require_same_shape(ry, rlp, "sign_map");
    SignMap m(ry.c(), ry.h(), ry.w());
    for (std::size_t i = 0; i < ry.size(); ++i) {
        const double p = static_cast<double>(ry.v[i]) * rlp.v[i];
        m.v[i] = std::abs(p) <= eps ? 0 : (p > 0 ? 1 : -1);
    }
    return m;
}

namespace {

struct AnalysisParts {
    Tensor rlp;  // lowpass(x_up) - x_up on the analysis plane(s)
    Tensor x_up_plane;
};

AnalysisParts analysis_parts(const Tensor& x, int out_h, int out_w, const LossConfig& cfg) {
    Tensor x_up = imgops::bicubic_resize_to(x, out_h, out_w);
    Tensor plane = cfg.per_channel ? x_up : luma(x_up);
    Tensor lp = imgops::gaussian_lowpass(plane, cfg.lp_sigma, cfg.lp_ksize);
    Tensor rlp(plane.dims);
    for (std::size_t i = 0; i < plane.size(); ++i) rlp.v[i] = lp.v[i] - plane.v[i];
    return {std::move(rlp), std::move(plane)};
}

}  // namespace

SignMap analysis_map(const Tensor& y, const Tensor& x, const LossConfig& cfg) {
    check_cfg(cfg);
    check_pair(y, x, cfg);
    AnalysisParts parts = analysis_parts(x, y.h(), y.w(), cfg);
    Tensor y_plane = cfg.per_channel ? y : luma(y);
    Tensor ry(y_plane.dims);
    for (std::size_t i = 0; i < ry.size(); ++i) ry.v[i] = y_plane.v[i] - parts.x_up_plane.v[i];
    return sign_map(ry, parts.rlp, cfg.flat_threshold);
}

double disentangled_loss(const Tensor& x, const Tensor& y_hat, const Tensor& y, const LossConfig& cfg) {
    check_cfg(cfg);
    require_same_shape(y_hat, y, "disentangled_loss");
    SignMap dy = analysis_map(y, x, cfg);
    SignMap dh = analysis_map(y_hat, x, cfg);
    std::vector<double> diff(dy.size());
    for (std::size_t i = 0; i < dy.size(); ++i) diff[i] = static_cast<double>(dy.v[i]) - dh.v[i];
    return norm_over_count(diff, cfg.p);
}

double soft_disentangled_loss(const Tensor& x, const Tensor& y_hat, const Tensor& y, const LossConfig& cfg) {
    check_cfg(cfg);
    check_pair(y, x, cfg);
    require_same_shape(y_hat, y, "soft_disentangled_loss");
    AnalysisParts parts = analysis_parts(x, y.h(), y.w(), cfg);
    Tensor y_plane = cfg.per_channel ? y : luma(y);
    Tensor h_plane = cfg.per_channel ? y_hat : luma(y_hat);
    std::vector<double> diff(y_plane.size());
    for (std::size_t i = 0; i < y_plane.size(); ++i) {
        const double pg = static_cast<double>(y_plane.v[i] - parts.x_up_plane.v[i]) * parts.rlp.v[i];
        const double hard = std::abs(pg) <= cfg.flat_threshold ? 0.0 : (pg > 0 ? 1.0 : -1.0);
        const double ph = static_cast<double>(h_plane.v[i] - parts.x_up_plane.v[i]) * parts.rlp.v[i];
        diff[i] = hard - std::tanh(cfg.surrogate_k * ph);
    }
    return norm_over_count(diff, cfg.p);
}

nn::Var soft_disentangled_loss_tape(nn::Tape& t, const Tensor& x, nn::Var y_hat, const Tensor& y,
                                    const LossConfig& cfg) {
    check_cfg(cfg);
    check_pair(y, x, cfg);
    const Tensor& yh = t.val(y_hat);
    require_same_shape(yh, y, "soft_disentangled_loss");

    AnalysisParts parts = analysis_parts(x, y.h(), y.w(), cfg);
    Tensor y_plane = cfg.per_channel ? y : luma(y);

    // hard ground-truth branch, computed eagerly
    Tensor dgt(y_plane.dims);
    for (std::size_t i = 0; i < y_plane.size(); ++i) {
        const double pg = static_cast<double>(y_plane.v[i] - parts.x_up_plane.v[i]) * parts.rlp.v[i];
        dgt.v[i] = std::abs(pg) <= cfg.flat_threshold ? 0.0f : (pg > 0 ? 1.0f : -1.0f);
    }

    nn::Var h_plane = y_hat;
    if (!cfg.per_channel && yh.c() == 3) {
        Tensor lw({1, 3, 1, 1});
        lw.v = {0.299f, 0.587f, 0.114f};
        nn::Var w = t.leaf(std::move(lw), false);
        nn::Var b = t.leaf(Tensor({1}), false);
        h_plane = t.conv2d(y_hat, w, b);
    } else if (!cfg.per_channel && yh.c() != 1) {
        throw std::invalid_argument("soft_disentangled_loss: luma mode expects 1 or 3 channels");
    }

    nn::Var x_up_c = t.constant(parts.x_up_plane);
    nn::Var rlp_c = t.constant(parts.rlp);
    nn::Var dgt_c = t.constant(dgt);
    nn::Var ry_hat = t.sub(h_plane, x_up_c);
    nn::Var prod = t.mul(ry_hat, rlp_c);
    nn::Var soft = t.tanh_(t.scale(prod, cfg.surrogate_k));
    nn::Var diff = t.sub(dgt_c, soft);
    if (cfg.p == 1) return t.mean_abs(diff);
    const float inv_sqrt_n = 1.0f / std::sqrt(static_cast<float>(y_plane.size()));
    return t.scale(t.sqrt_s(t.mean_sq(diff)), inv_sqrt_n);
}

}  // namespace mixedrc::texture
