#pragma once

#include <cstdint>
#include <vector>

#include "mixedrc/nn.hpp"
#include "mixedrc/tensor.hpp"

namespace mixedrc::texture {

// Pixel-wise classification of high-frequency deviation: +1 artifact
// (smoothing moves the pixel toward ground truth), -1 texture, 0 flat.
struct SignMap {
    int c = 0, h = 0, w = 0;
    std::vector<int8_t> v;

    SignMap() = default;
    SignMap(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0) {}
    int8_t& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
    int8_t at(int ci, int y, int x) const { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
    std::size_t size() const { return v.size(); }
};

struct LossConfig {
    int p = 1;                  // norm order, 1 or 2
    float lambda_distan = 0.1f; // weight of the disentangled term next to l1
    float surrogate_k = 20.0f;  // sharpness of the smooth sign on the prediction branch
    float flat_threshold = 1e-6f;
    int scale = 2;              // spatial ratio between y and x
    double lp_sigma = 1.5;
    int lp_ksize = 5;
    bool per_channel = false;   // default: luma-only analysis
};

// BT.601 luma for 3-channel frames; identity for single-channel.
Tensor luma(const Tensor& frame);

// D from precomputed residuals: sgn(ry * rlp) with |product| <= eps -> 0.
SignMap sign_map(const Tensor& ry, const Tensor& rlp, float eps);

// Full analysis: x_up = bicubic(x, r); rlp = lowpass(x_up) - x_up;
// ry = y - x_up; D = sgn(ry * rlp).
SignMap analysis_map(const Tensor& y, const Tensor& x, const LossConfig& cfg);

// ||D(y,x) - D(y_hat,x)||_p averaged over pixel count.
double disentangled_loss(const Tensor& x, const Tensor& y_hat, const Tensor& y, const LossConfig& cfg);

// Differentiable surrogate: the prediction branch uses tanh(k * product),
// the ground-truth branch keeps the hard sign. Converges to the hard loss
// as k grows.
double soft_disentangled_loss(const Tensor& x, const Tensor& y_hat, const Tensor& y, const LossConfig& cfg);

// Tape version for training; gradient flows into y_hat only.
nn::Var soft_disentangled_loss_tape(nn::Tape& t, const Tensor& x, nn::Var y_hat, const Tensor& y,
                                    const LossConfig& cfg);

}  // namespace mixedrc::texture
