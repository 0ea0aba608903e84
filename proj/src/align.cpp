#include "mixedrc/align.hpp"

#include <stdexcept>

namespace mixedrc::align {

using nn::Tape;
using nn::Var;

nn::Var spatial_attention(Tape& t, const std::string& prefix, Var feat) {
    Var pooled = t.concat_ch({t.channel_mean(feat), t.channel_max(feat)});
    Var a = t.leaky_relu(nn::conv_layer(t, prefix + ".conv1", pooled, 8, 3));
    Var gate = nn::conv_layer(t, prefix + ".conv2", a, 1, 3);
    return t.sigmoid(gate);
}

nn::Var channel_attention(Tape& t, const std::string& prefix, Var feat) {
    const int c = t.val(feat).c();
    const int mid = std::max(1, c / 4);
    Var p = t.global_avg_pool(feat);
    Var a = t.relu(nn::conv_layer(t, prefix + ".down", p, mid, 1));
    Var gate = nn::conv_layer(t, prefix + ".up", a, c, 1);
    return t.sigmoid(gate);
}

nn::Var incep_hdc(Tape& t, const std::string& prefix, Var feat, const AlignConfig& cfg) {
    if (cfg.dilation_rates.empty()) throw std::invalid_argument("incep_hdc: dilation_rates must be non-empty");
    const int c = t.val(feat).c();
    const int branches = static_cast<int>(cfg.dilation_rates.size());
    if (c % branches != 0)
        throw std::invalid_argument("incep_hdc: channels " + std::to_string(c) + " not divisible by branch count " +
                                    std::to_string(branches));
    const int cb = c / branches;

    Var cur = feat;
    std::vector<Var> taps;
    for (int i = 0; i < branches; ++i) {
        const int rate = cfg.dilation_rates[i];
        if (rate < 1) throw std::invalid_argument("incep_hdc: dilation rate must be >= 1");
        cur = t.leaky_relu(nn::conv_layer(t, prefix + ".hdc" + std::to_string(i), cur, cb, 3, rate));
        taps.push_back(cur);
    }
    Var fused = nn::conv_layer(t, prefix + ".fuse", t.concat_ch(taps), c, 1);
    switch (cfg.attention) {
        case Attention::Spatial:
            fused = t.mul_gate_spatial(fused, spatial_attention(t, prefix + ".att", fused));
            break;
        case Attention::Channel:
            fused = t.mul_gate_channel(fused, channel_attention(t, prefix + ".att", fused));
            break;
        case Attention::None:
            break;
    }
    return t.add(feat, fused);
}

namespace {

void check_pair_dims(Tape& t, Var f_ref, Var f_lq, const char* what) {
    const Tensor& a = t.val(f_ref);
    const Tensor& b = t.val(f_lq);
    if (a.h() != b.h() || a.w() != b.w() || a.c() != b.c())
        throw std::invalid_argument(std::string(what) + ": feature shapes differ, " + a.shape_str() + " vs " +
                                    b.shape_str());
}

}  // namespace

nn::Var offset_generator(Tape& t, const std::string& prefix, Var f_ref, Var f_lq, const AlignConfig& cfg) {
    check_pair_dims(t, f_ref, f_lq, "offset_generator");
    const int c = t.val(f_ref).c();
    const int k = cfg.kernel_size;
    Var cat = t.concat_ch({f_ref, f_lq});
    Var g = t.leaky_relu(nn::conv_layer(t, prefix + ".conv1", cat, c, 3));
    g = t.leaky_relu(nn::conv_layer(t, prefix + ".conv2", g, c, 3));
    return nn::conv_layer(t, prefix + ".proj", g, 2 * k * k, 3, 1, nn::Init::Zero);
}

nn::Var offset_refine(Tape& t, const std::string& prefix, Var o_prev, Var f_ref, Var f_lq,
                      const AlignConfig& cfg) {
    check_pair_dims(t, f_ref, f_lq, "offset_refine");
    const int c = t.val(f_ref).c();
    const int k = cfg.kernel_size;
    const Tensor& o = t.val(o_prev);
    if (o.c() != 2 * k * k || o.h() != t.val(f_ref).h() || o.w() != t.val(f_ref).w())
        throw std::invalid_argument("offset_refine: offset field " + o.shape_str() + " inconsistent with K=" +
                                    std::to_string(k) + " features " + t.val(f_ref).shape_str());
    Var cat = t.concat_ch({o_prev, f_ref, f_lq});
    Var h = t.leaky_relu(nn::conv_layer(t, prefix + ".embed", cat, c, 1));
    for (int i = 0; i < cfg.hdc_blocks; ++i) h = incep_hdc(t, prefix + ".hdc" + std::to_string(i), h, cfg);
    Var delta = nn::conv_layer(t, prefix + ".proj", h, 2 * k * k, 3, 1, nn::Init::Zero);
    return t.add(o_prev, delta);
}

namespace {

Var deform_layer(Tape& t, const std::string& prefix, Var feat, Var offsets, int k) {
    const int c = t.val(feat).c();
    Var w = t.param(prefix + ".w", {c, c, k, k}, nn::Init::HeNormal);
    Var b = t.param(prefix + ".b", {c}, nn::Init::Zero);
    return t.deform_conv(feat, offsets, w, b);
}

}  // namespace

nn::Var align(Tape& t, const std::string& prefix, Var f_ref, Var f_lq, const AlignConfig& cfg) {
    check_pair_dims(t, f_ref, f_lq, "align");
    if (cfg.n_refiners < 0) throw std::invalid_argument("align: n_refiners must be >= 0");

    if (cfg.mode == AlignMode::Refined) {
        Var off = offset_generator(t, prefix + ".gen", f_ref, f_lq, cfg);
        for (int r = 0; r < cfg.n_refiners; ++r)
            off = offset_refine(t, prefix + ".ref" + std::to_string(r), off, f_ref, f_lq, cfg);
        if (cfg.offset_clamp > 0.0f) off = t.clamp(off, -cfg.offset_clamp, cfg.offset_clamp);
        return deform_layer(t, prefix + ".dcn", f_ref, off, cfg.kernel_size);
    }

    // stacked baseline: each layer re-estimates offsets from the current
    // features and resamples them
    const int layers = std::max(1, cfg.n_refiners);
    Var cur = f_ref;
    for (int i = 0; i < layers; ++i) {
        const std::string lp = prefix + ".stack" + std::to_string(i);
        const int c = t.val(cur).c();
        const int k = cfg.kernel_size;
        Var cat = t.concat_ch({cur, f_lq});
        Var h = t.leaky_relu(nn::conv_layer(t, lp + ".embed", cat, c, 1));
        for (int j = 0; j < cfg.hdc_blocks; ++j) h = incep_hdc(t, lp + ".hdc" + std::to_string(j), h, cfg);
        Var off = nn::conv_layer(t, lp + ".proj", h, 2 * k * k, 3, 1, nn::Init::Zero);
        if (cfg.offset_clamp > 0.0f) off = t.clamp(off, -cfg.offset_clamp, cfg.offset_clamp);
        cur = deform_layer(t, lp + ".dcn", cur, off, k);
        if (i + 1 < layers) cur = t.leaky_relu(cur);
    }
    return cur;
}

Tensor deform_sample(const Tensor& feat, const Tensor& offsets, const Tensor& weights, const Tensor& bias) {
    Tape t;
    Var x = t.leaf(feat);
    Var o = t.leaf(offsets);
    Var w = t.leaf(weights);
    Var b = t.leaf(bias);
    return t.val(t.deform_conv(x, o, w, b));
}

Tensor deform_sample(const Tensor& feat, const Tensor& offsets, const Tensor& weights) {
    return deform_sample(feat, offsets, weights, Tensor({weights.dims.at(0)}));
}

Tensor align_eager(nn::ParamStore& store, const std::string& prefix, const Tensor& f_ref, const Tensor& f_lq,
                   const AlignConfig& cfg) {
    Tape t(&store);
    Var a = t.leaf(f_ref);
    Var b = t.leaf(f_lq);
    return t.val(align(t, prefix, a, b, cfg));
}

Attention attention_from_string(const std::string& s) {
    if (s == "spatial") return Attention::Spatial;
    if (s == "channel") return Attention::Channel;
    if (s == "none") return Attention::None;
    throw std::invalid_argument("unknown attention mode '" + s + "'");
}

std::string to_string(Attention a) {
    switch (a) {
        case Attention::Spatial: return "spatial";
        case Attention::Channel: return "channel";
        default: return "none";
    }
}

AlignMode mode_from_string(const std::string& s) {
    if (s == "refined") return AlignMode::Refined;
    if (s == "stacked") return AlignMode::Stacked;
    throw std::invalid_argument("unknown alignment mode '" + s + "'");
}

std::string to_string(AlignMode m) { return m == AlignMode::Refined ? "refined" : "stacked"; }

}  // namespace mixedrc::align
