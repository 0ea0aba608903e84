#pragma once

#include <utility>
#include <vector>

#include "mixedrc/tensor.hpp"

namespace mixedrc::imgops {

// Rearranges each r x r spatial block into r^2 channels. Output channel
// c*r^2 + dy*r + dx at (i,j) equals input channel c at (i*r+dy, j*r+dx).
// Bijective; requires H and W divisible by r (pad_to_multiple first).
Tensor down_shuffle(const Tensor& x, int r);

// Exact inverse of down_shuffle. Requires C divisible by r^2.
Tensor up_shuffle(const Tensor& x, int r);

// Separable cubic-convolution resampling, a = -0.5, replicate borders.
// Output dims are round(H*scale) x round(W*scale). Clamps to [0,1] unless
// clamp_output is false (linearity tests operate pre-clamp).
Tensor bicubic_resize(const Tensor& x, double scale, bool clamp_output = true);
Tensor bicubic_resize_to(const Tensor& x, int out_h, int out_w, bool clamp_output = true);

// Cubic convolution kernel weight at distance t, a = -0.5.
double cubic_weight(double t);

// Depthwise convolution with a normalized Gaussian, replicate borders.
Tensor gaussian_lowpass(const Tensor& x, double sigma, int ksize);

// Normalized 1-D kernel; the 2-D kernel is the outer product, which equals
// the directly normalized 2-D table on a square window.
std::vector<double> gaussian_kernel_1d(double sigma, int ksize);

struct CropRecord {
    int orig_h = 0;
    int orig_w = 0;
    bool padded() const { return orig_h != 0 || orig_w != 0; }
};

// Replicate-pads right/bottom so H and W are divisible by r. The record
// restores the original size exactly via crop_to.
std::pair<Tensor, CropRecord> pad_to_multiple(const Tensor& x, int r);
Tensor crop_to(const Tensor& x, const CropRecord& rec);

Clip bicubic_resize(const Clip& c, double scale, bool clamp_output = true);

}  // namespace mixedrc::imgops
