#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mixedrc/align.hpp"
#include "mixedrc/imgops.hpp"
#include "test_support.hpp"

using namespace mixedrc;
using namespace mixedrc::align;
using nn::Tape;
using nn::Var;

namespace {

Tensor randn_t(Rng& rng, std::vector<int> dims, double s = 1.0) {
    Tensor t(std::move(dims));
    for (float& v : t.v) v = static_cast<float>(rng.normal() * s);
    return t;
}

// plain replicate-padded convolution oracle, written directly
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int oc_n = w.dims[0], ic_n = w.dims[1], k = w.dims[2], half = k / 2;
    Tensor out = Tensor::chw(oc_n, x.h(), x.w());
    for (int oc = 0; oc < oc_n; ++oc)
        for (int y = 0; y < x.h(); ++y)
            for (int j = 0; j < x.w(); ++j) {
                double acc = b.v[oc];
                for (int ic = 0; ic < ic_n; ++ic)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc += w.v[((static_cast<std::size_t>(oc) * ic_n + ic) * k + ky) * k + kx] *
                                   x.at(ic, std::clamp(y + ky - half, 0, x.h() - 1),
                                        std::clamp(j + kx - half, 0, x.w() - 1));
                out.at(oc, y, j) = static_cast<float>(acc);
            }
    return out;
}

// convolution of the replicate extension shifted by an integer offset:
// taps read x at clamp(pos + offset)
Tensor shifted_conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int dy, int dx) {
    const int oc_n = w.dims[0], ic_n = w.dims[1], k = w.dims[2], half = k / 2;
    Tensor out = Tensor::chw(oc_n, x.h(), x.w());
    for (int oc = 0; oc < oc_n; ++oc)
        for (int y = 0; y < x.h(); ++y)
            for (int j = 0; j < x.w(); ++j) {
                double acc = b.v[oc];
                for (int ic = 0; ic < ic_n; ++ic)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc += w.v[((static_cast<std::size_t>(oc) * ic_n + ic) * k + ky) * k + kx] *
                                   x.at(ic, std::clamp(y + ky - half + dy, 0, x.h() - 1),
                                        std::clamp(j + kx - half + dx, 0, x.w() - 1));
                out.at(oc, y, j) = static_cast<float>(acc);
            }
    return out;
}

Tensor uniform_offsets(int k, int h, int w, float dy, float dx) {
    Tensor off = Tensor::chw(2 * k * k, h, w);
    for (int tap = 0; tap < k * k; ++tap) {
        std::fill(off.plane(2 * tap), off.plane(2 * tap) + h * w, dy);
        std::fill(off.plane(2 * tap + 1), off.plane(2 * tap + 1) + h * w, dx);
    }
    return off;
}

// smooth multi-channel features with exact integer shift between views
std::pair<Tensor, Tensor> shifted_feature_pair(Rng& rng, int c, int h, int w, int shift_x) {
    Tensor big = test::random_frame(rng, c, h, w + shift_x);
    big = imgops::gaussian_lowpass(big, 2.0, 9);
    Tensor f_ref = Tensor::chw(c, h, w), f_lq = Tensor::chw(c, h, w);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                f_ref.at(ci, y, x) = big.at(ci, y, x);
                f_lq.at(ci, y, x) = big.at(ci, y, x + shift_x);
            }
    return {f_ref, f_lq};
}

// short Adam optimization of the alignment parameters toward f_lq;
// returns (initial, final) mean-abs alignment error
std::pair<double, double> optimize_alignment(const AlignConfig& cfg, const Tensor& f_ref, const Tensor& f_lq,
                                             int steps, double lr, uint64_t seed) {
    nn::ParamStore store(seed);
    double first = 0.0, last = 0.0;
    nn::AdamConfig adam;
    adam.lr = lr;
    for (int step = 0; step < steps; ++step) {
        store.zero_grad();
        Tape t(&store);
        Var out = mixedrc::align::align(t, "a", t.leaf(f_ref), t.leaf(f_lq), cfg);
        Var loss = t.mean_abs(t.sub(out, t.constant(f_lq)));
        if (step == 0) first = t.scalar(loss);
        last = t.scalar(loss);
        t.backward(loss);
        nn::adam_step(store, adam, step + 1);
    }
    return {first, last};
}

}  // namespace

TEST_CASE("deform_sample with zero offsets equals plain convolution") {
    Rng rng(51);
    for (int iter = 0; iter < 20; ++iter) {
        const int c = rng.uniform_int(1, 3);
        const int oc = rng.uniform_int(1, 3);
        const int h = rng.uniform_int(4, 10), w = rng.uniform_int(4, 10);
        Tensor x = randn_t(rng, {c, h, w});
        Tensor wt = randn_t(rng, {oc, c, 3, 3});
        Tensor b = randn_t(rng, {oc});
        Tensor off = Tensor::chw(18, h, w);
        Tensor got = deform_sample(x, off, wt, b);
        Tensor want = conv_oracle(x, wt, b);
        CHECK(test::max_abs_diff(got, want) < 1e-6);
    }
}

TEST_CASE("deform_sample integer offsets equal the shift oracle") {
    Rng rng(52);
    for (int dy : {-2, 0, 1}) {
        for (int dx : {-1, 0, 1, 3}) {
            Tensor x = randn_t(rng, {2, 8, 9});
            Tensor wt = randn_t(rng, {2, 2, 3, 3});
            Tensor b = randn_t(rng, {2});
            Tensor off = uniform_offsets(3, 8, 9, static_cast<float>(dy), static_cast<float>(dx));
            Tensor got = deform_sample(x, off, wt, b);
            Tensor want = shifted_conv_oracle(x, wt, b, dy, dx);
            CHECK(test::max_abs_diff(got, want) < 1e-6);
        }
    }
}

TEST_CASE("deform_sample half-pixel offset on a ramp matches closed-form bilinear") {
    const int h = 6, w = 12;
    const float a = 0.07f, b0 = 0.2f;
    Tensor x = Tensor::chw(1, h, w);
    for (int y = 0; y < h; ++y)
        for (int j = 0; j < w; ++j) x.at(0, y, j) = a * j + b0;
    Tensor wt = Tensor({1, 1, 3, 3});
    Rng rng(53);
    for (float& v : wt.v) v = static_cast<float>(rng.normal());
    Tensor bias({1});
    Tensor off = uniform_offsets(3, h, w, 0.0f, 0.5f);
    Tensor got = deform_sample(x, off, wt, bias);

    // bilinear on a horizontal ramp: value at fractional p is a*clamp(p)+b
    for (int y = 1; y + 1 < h; ++y)
        for (int j = 0; j < w; ++j) {
            double want = 0.0;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double p = std::clamp(j + kx - 1 + 0.5, 0.0, w - 1.0);
                    want += wt.v[ky * 3 + kx] * (a * p + b0);
                }
            CHECK(got.at(0, y, j) == doctest::Approx(want).epsilon(1e-5));
        }
}

TEST_CASE("offset generator: zero at init, right shape, deterministic") {
    Rng rng(54);
    Tensor f_ref = randn_t(rng, {8, 6, 6});
    Tensor f_lq = randn_t(rng, {8, 6, 6});
    AlignConfig cfg;

    nn::ParamStore store(7);
    Tape t(&store);
    Var off = offset_generator(t, "gen", t.leaf(f_ref), t.leaf(f_lq), cfg);
    CHECK(t.val(off).dims == std::vector<int>{18, 6, 6});
    for (float v : t.val(off).v) CHECK(v == 0.0f);

    nn::ParamStore store2(7);
    Tape t2(&store2);
    // perturb the stack so outputs are nonzero, then check determinism
    store2.ensure("gen.proj.w", {18, 8, 3, 3}, nn::Init::Zero).value.v[0] = 0.5f;
    Var o1 = offset_generator(t2, "gen", t2.leaf(f_ref), t2.leaf(f_lq), cfg);
    Tape t3(&store2);
    Var o2 = offset_generator(t3, "gen", t3.leaf(f_ref), t3.leaf(f_lq), cfg);
    CHECK(t2.val(o1).v == t3.val(o2).v);
}

TEST_CASE("fresh offset refiners are exact identities and additive in the residual") {
    Rng rng(55);
    Tensor f_ref = randn_t(rng, {6, 5, 5});
    Tensor f_lq = randn_t(rng, {6, 5, 5});
    Tensor o_prev = randn_t(rng, {18, 5, 5});
    AlignConfig cfg;

    nn::ParamStore store(8);
    Tape t(&store);
    Var out = offset_refine(t, "r0", t.leaf(o_prev), t.leaf(f_ref), t.leaf(f_lq), cfg);
    CHECK(t.val(out).v == o_prev.v);  // exact identity

    // chain of fresh refiners stays the identity
    Tape t2(&store);
    Var o = t2.leaf(o_prev);
    Var fr = t2.leaf(f_ref), fl = t2.leaf(f_lq);
    for (int i = 0; i < 3; ++i) o = offset_refine(t2, "chain" + std::to_string(i), o, fr, fl, cfg);
    CHECK(t2.val(o).v == o_prev.v);

    // bias delta on the zeroed projection shifts the output by exactly delta
    const float delta = 0.375f;
    nn::ParamStore store3(8);
    Tape warm(&store3);
    offset_refine(warm, "r0", warm.leaf(o_prev), warm.leaf(f_ref), warm.leaf(f_lq), cfg);
    for (float& v : store3.at("r0.proj.b").value.v) v = delta;
    Tape t3(&store3);
    Var out3 = offset_refine(t3, "r0", t3.leaf(o_prev), t3.leaf(f_ref), t3.leaf(f_lq), cfg);
    for (std::size_t i = 0; i < o_prev.size(); ++i)
        CHECK(t3.val(out3).v[i] == o_prev.v[i] + delta);
}

TEST_CASE("incep_hdc preserves shape, gates in (0,1)") {
    Rng rng(56);
    Tensor x = randn_t(rng, {18, 12, 12});
    AlignConfig cfg;
    nn::ParamStore store(9);
    Tape t(&store);
    Var out = incep_hdc(t, "h", t.leaf(x), cfg);
    CHECK(t.val(out).dims == x.dims);

    Var gate = spatial_attention(t, "att", t.leaf(x));
    const Tensor& g = t.val(gate);
    CHECK(g.dims == std::vector<int>{1, 12, 12});
    for (float v : g.v) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }

    Tensor cst = Tensor::chw(18, 9, 9, 0.3f);
    Var cgate = spatial_attention(t, "att2", t.leaf(cst));
    const Tensor& cg = t.val(cgate);
    float mn = 1.0f, mx = 0.0f;
    for (float v : cg.v) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    CHECK(mx - mn < 1e-6f);

    Tensor bad = randn_t(rng, {17, 8, 8});
    CHECK_THROWS_AS(incep_hdc(t, "h2", t.leaf(bad), cfg), std::invalid_argument);
}

TEST_CASE("incep_hdc composed receptive field spans at least 17 pixels") {
    AlignConfig cfg;  // rates {1,2,5}: cascade reach 2*(1+2+5)+1 = 17
    const int size = 41, c = 6;
    nn::ParamStore store(10);
    {
        Tape warm(&store);
        incep_hdc(warm, "h", warm.leaf(Tensor::chw(c, size, size)), cfg);
    }
    for (auto& [name, e] : store.entries())
        for (float& v : e.value.v) v = name.ends_with(".b") ? 0.0f : 1.0f;

    auto run = [&](const Tensor& in) {
        Tape t(&store);
        return t.val(incep_hdc(t, "h", t.leaf(in), cfg));
    };
    Tensor zero = Tensor::chw(c, size, size);
    Tensor impulse = zero;
    impulse.at(0, size / 2, size / 2) = 1.0f;
    Tensor base = run(zero);
    Tensor resp = run(impulse);

    int row_min = size, row_max = -1, col_min = size, col_max = -1;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            bool hit = false;
            for (int ci = 0; ci < c; ++ci)
                if (std::abs(resp.at(ci, y, x) - base.at(ci, y, x)) > 1e-6f) hit = true;
            if (hit) {
                row_min = std::min(row_min, y);
                row_max = std::max(row_max, y);
                col_min = std::min(col_min, x);
                col_max = std::max(col_max, x);
            }
        }
    CHECK(row_max - row_min + 1 >= 17);
    CHECK(col_max - col_min + 1 >= 17);
}

TEST_CASE("align on a translated pair improves over the unaligned baseline") {
    Rng rng(57);
    auto [f_ref, f_lq] = shifted_feature_pair(rng, 6, 20, 24, 3);

    double unaligned = 0.0;
    for (std::size_t i = 0; i < f_ref.size(); ++i) unaligned += std::abs(f_ref.v[i] - f_lq.v[i]);
    unaligned /= static_cast<double>(f_ref.size());

    AlignConfig cfg;
    cfg.n_refiners = 2;
    auto [first, last] = optimize_alignment(cfg, f_ref, f_lq, 140, 2e-2, 77);
    CHECK(last < 0.5 * unaligned);
    CHECK(last < first);
}

TEST_CASE("refiners help on long-range translation: n=3 beats n=0") {
    Rng rng(58);
    auto [f_ref, f_lq] = shifted_feature_pair(rng, 6, 20, 28, 9);

    AlignConfig none;
    none.n_refiners = 0;
    AlignConfig three;
    three.n_refiners = 3;
    auto [f0, err_none] = optimize_alignment(none, f_ref, f_lq, 160, 2e-2, 78);
    auto [f1, err_three] = optimize_alignment(three, f_ref, f_lq, 160, 2e-2, 78);
    (void)f0;
    (void)f1;
    CHECK(err_three < err_none);
}

TEST_CASE("trained alignment of identical features approaches the identity") {
    Rng rng(59);
    Tensor f = imgops::gaussian_lowpass(test::random_frame(rng, 6, 16, 16), 2.0, 9);
    AlignConfig cfg;
    cfg.n_refiners = 1;
    auto [first, last] = optimize_alignment(cfg, f, f, 150, 2e-2, 79);
    CHECK(last < 0.2 * first);
}
