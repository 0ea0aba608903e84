#pragma once

#include <string>
#include <vector>

#include "mixedrc/nn.hpp"
#include "mixedrc/tensor.hpp"

namespace mixedrc::align {

enum class Attention { Spatial, Channel, None };

// Refined: one offset generator, n residual offset refiners, one deformable
// sampling at the end. Stacked: n sequential deformable layers, each with
// its own generator (the ablation baseline).
enum class AlignMode { Refined, Stacked };

struct AlignConfig {
    int n_refiners = 3;
    int kernel_size = 3;
    std::vector<int> dilation_rates{1, 2, 5};
    float offset_clamp = 16.0f;  // <= 0 disables clamping
    Attention attention = Attention::Spatial;
    AlignMode mode = AlignMode::Refined;
    int hdc_blocks = 2;  // Incep-HDC blocks per refiner / per stacked-layer generator
};

// Gate in (0,1)^(1,h,w) from channel-pooled mean/max maps.
nn::Var spatial_attention(nn::Tape& t, const std::string& prefix, nn::Var feat);

// Per-channel gate in (0,1)^(C,1,1) from global average pooling.
nn::Var channel_attention(nn::Tape& t, const std::string& prefix, nn::Var feat);

// Multi-branch dilated block: a cascade of 3x3 convolutions at the
// configured rates, tapped after every stage, concatenated, 1x1 fused,
// attention-gated, plus identity skip. Channels must divide by the branch
// count. The deepest tap spans 2*(sum of rates)+1 pixels.
nn::Var incep_hdc(nn::Tape& t, const std::string& prefix, nn::Var feat, const AlignConfig& cfg);

// O^1 = G(concat(f_ref, f_lq)); the final projection is zero-initialized so
// a fresh generator emits zero offsets.
nn::Var offset_generator(nn::Tape& t, const std::string& prefix, nn::Var f_ref, nn::Var f_lq,
                         const AlignConfig& cfg);

// O^r = R(O^{r-1}, f_ref, f_lq) + O^{r-1}; a fresh refiner is the identity.
nn::Var offset_refine(nn::Tape& t, const std::string& prefix, nn::Var o_prev, nn::Var f_ref, nn::Var f_lq,
                      const AlignConfig& cfg);

// Full alignment: returns f_ref warped toward f_lq.
nn::Var align(nn::Tape& t, const std::string& prefix, nn::Var f_ref, nn::Var f_lq, const AlignConfig& cfg);

// Eager deformable sampling; weights (OC,IC,K,K), offsets (2K^2,h,w),
// optional bias. Zero offsets reduce to a plain replicate-padded conv.
Tensor deform_sample(const Tensor& feat, const Tensor& offsets, const Tensor& weights);
Tensor deform_sample(const Tensor& feat, const Tensor& offsets, const Tensor& weights, const Tensor& bias);

// Eager full alignment against a parameter store (creates params on first use).
Tensor align_eager(nn::ParamStore& store, const std::string& prefix, const Tensor& f_ref, const Tensor& f_lq,
                   const AlignConfig& cfg);

Attention attention_from_string(const std::string& s);
std::string to_string(Attention a);
AlignMode mode_from_string(const std::string& s);
std::string to_string(AlignMode m);

}  // namespace mixedrc::align
