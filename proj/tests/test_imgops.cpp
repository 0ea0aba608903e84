#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mixedrc/imgops.hpp"
#include "test_support.hpp"

using namespace mixedrc;
using namespace mixedrc::imgops;

TEST_CASE("down_shuffle shape and value layout") {
    Tensor x = Tensor::chw(1, 4, 4);
    Tensor out = down_shuffle(x, 2);
    CHECK(out.dims == std::vector<int>{4, 2, 2});

    Tensor tiny = Tensor::chw(1, 2, 2);
    tiny.v = {1, 2, 3, 4};
    Tensor d = down_shuffle(tiny, 2);
    CHECK(d.dims == std::vector<int>{4, 1, 1});
    // ordered (dy,dx) = (0,0),(0,1),(1,0),(1,1)
    CHECK(d.v[0] == 1);
    CHECK(d.v[1] == 2);
    CHECK(d.v[2] == 3);
    CHECK(d.v[3] == 4);

    Tensor up = up_shuffle(d, 2);
    CHECK(up.dims == tiny.dims);
    CHECK(up.v == tiny.v);
}

TEST_CASE("down_shuffle constant frame stays constant") {
    Tensor x = Tensor::chw(2, 6, 6, 0.37f);
    Tensor d = down_shuffle(x, 3);
    for (float v : d.v) CHECK(v == 0.37f);
}

TEST_CASE("shuffle round trip is bitwise identity and preserves the value multiset") {
    Rng rng(11);
    for (int iter = 0; iter < 50; ++iter) {
        const int r = rng.uniform_int(1, 4);
        const int c = rng.uniform_int(1, 3);
        const int h = r * rng.uniform_int(1, 6);
        const int w = r * rng.uniform_int(1, 6);
        Tensor x = test::random_frame(rng, c, h, w);
        Tensor d = down_shuffle(x, r);
        Tensor u = up_shuffle(d, r);
        CHECK(u.dims == x.dims);
        CHECK(u.v == x.v);

        double sx = 0.0, sd = 0.0;
        for (float v : x.v) sx += v;
        for (float v : d.v) sd += v;
        CHECK(sx == doctest::Approx(sd).epsilon(0.0));

        std::vector<float> mx = x.v, md = d.v;
        std::sort(mx.begin(), mx.end());
        std::sort(md.begin(), md.end());
        CHECK(mx == md);
    }
}

TEST_CASE("shuffle errors") {
    Tensor x = Tensor::chw(1, 5, 4);
    CHECK_THROWS_WITH_AS(down_shuffle(x, 2), doctest::Contains("height 5"), std::invalid_argument);
    Tensor y = Tensor::chw(1, 4, 5);
    CHECK_THROWS_WITH_AS(down_shuffle(y, 2), doctest::Contains("width 5"), std::invalid_argument);
    CHECK_THROWS_AS(down_shuffle(x, 0), std::invalid_argument);
    Tensor z = Tensor::chw(3, 2, 2);
    CHECK_THROWS_AS(up_shuffle(z, 2), std::invalid_argument);
}

TEST_CASE("bicubic constant frame and identity scale") {
    Rng rng(3);
    Tensor x = Tensor::chw(1, 7, 9, 0.42f);
    Tensor up = bicubic_resize(x, 1.7);
    for (float v : up.v) CHECK(v == doctest::Approx(0.42f).epsilon(1e-6));

    Tensor r = test::random_frame(rng, 2, 8, 8);
    Tensor same = bicubic_resize(r, 1.0);
    CHECK(test::max_abs_diff(r, same) < 1e-6);
}

TEST_CASE("bicubic 1-D ramp matches direct kernel evaluation") {
    // oracle: evaluate the cubic-convolution interpolation formula directly
    const int n = 16;
    Tensor x = Tensor::chw(1, 1, n);
    for (int i = 0; i < n; ++i) x.v[i] = static_cast<float>(i) / (n - 1) * 0.8f + 0.1f;

    Tensor up = bicubic_resize_to(x, 1, 2 * n, /*clamp_output=*/false);
    for (int o = 0; o < 2 * n; ++o) {
        const double src = (o + 0.5) / 2.0 - 0.5;
        double expect = 0.0;
        const int base = static_cast<int>(std::floor(src));
        for (int tap = base - 1; tap <= base + 2; ++tap) {
            const int idx = std::clamp(tap, 0, n - 1);
            expect += cubic_weight(src - tap) * x.v[idx];
        }
        CHECK(up.v[o] == doctest::Approx(expect).epsilon(1e-5));
    }
}

TEST_CASE("bicubic and lowpass are linear pre-clamp") {
    Rng rng(5);
    Tensor a = test::random_frame(rng, 1, 12, 10);
    Tensor b = test::random_frame(rng, 1, 12, 10);
    const float alpha = 0.7f, beta = -0.4f;
    Tensor mix = Tensor::chw(1, 12, 10);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.v[i] = alpha * a.v[i] + beta * b.v[i];

    Tensor ra = bicubic_resize(a, 1.5, false);
    Tensor rb = bicubic_resize(b, 1.5, false);
    Tensor rmix = bicubic_resize(mix, 1.5, false);
    for (std::size_t i = 0; i < rmix.size(); ++i)
        CHECK(rmix.v[i] == doctest::Approx(alpha * ra.v[i] + beta * rb.v[i]).epsilon(1e-5));

    Tensor ga = gaussian_lowpass(a, 1.5, 5);
    Tensor gb = gaussian_lowpass(b, 1.5, 5);
    Tensor gmix = gaussian_lowpass(mix, 1.5, 5);
    for (std::size_t i = 0; i < gmix.size(); ++i)
        CHECK(gmix.v[i] == doctest::Approx(alpha * ga.v[i] + beta * gb.v[i]).epsilon(1e-5));
}

TEST_CASE("gaussian lowpass kernel matches the tabulated form") {
    const double sigma = 1.5;
    const int k = 5;
    const auto k1 = gaussian_kernel_1d(sigma, k);

    // direct 2-D tabulation oracle
    double z = 0.0;
    std::vector<double> table(k * k);
    for (int i = -2; i <= 2; ++i)
        for (int j = -2; j <= 2; ++j) {
            table[(i + 2) * k + j + 2] = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
            z += table[(i + 2) * k + j + 2];
        }
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            CHECK(k1[i] * k1[j] == doctest::Approx(table[i * k + j] / z).epsilon(1e-12));

    // impulse response reproduces the kernel; total mass 1
    Tensor imp = Tensor::chw(1, 15, 15);
    imp.at(0, 7, 7) = 1.0f;
    Tensor out = gaussian_lowpass(imp, sigma, k);
    double sum = 0.0;
    for (float v : out.v) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            CHECK(out.at(0, 5 + i, 5 + j) == doctest::Approx(table[i * k + j] / z).epsilon(1e-6));
}

TEST_CASE("gaussian lowpass keeps constants and the max norm") {
    Rng rng(9);
    Tensor c = Tensor::chw(1, 9, 9, 0.5f);
    Tensor out = gaussian_lowpass(c, 1.5, 5);
    CHECK(test::max_abs_diff(c, out) < 1e-6);

    Tensor x = test::random_frame(rng, 1, 14, 11);
    float x_max = 0.0f;
    for (float v : x.v) x_max = std::max(x_max, v);
    Tensor g = gaussian_lowpass(x, 2.0, 7);
    for (float v : g.v) CHECK(v <= x_max + 1e-6f);

    CHECK_THROWS_AS(gaussian_lowpass(x, 1.5, 4), std::invalid_argument);
}

TEST_CASE("pad_to_multiple round trip") {
    Rng rng(13);
    Tensor x = test::random_frame(rng, 1, 5, 5);
    auto [padded, rec] = pad_to_multiple(x, 2);
    CHECK(padded.dims == std::vector<int>{1, 6, 6});
    CHECK(rec.padded());
    Tensor back = crop_to(padded, rec);
    CHECK(back.v == x.v);

    Tensor even = test::random_frame(rng, 1, 6, 6);
    auto [same, rec2] = pad_to_multiple(even, 2);
    CHECK(same.v == even.v);
    CHECK(!rec2.padded());

    for (int iter = 0; iter < 10; ++iter) {
        const int h = rng.uniform_int(1, 12), w = rng.uniform_int(1, 12), r = rng.uniform_int(1, 5);
        Tensor f = test::random_frame(rng, 1, h, w);
        auto [p, pr] = pad_to_multiple(f, r);
        CHECK(p.h() % r == 0);
        CHECK(p.w() % r == 0);
        Tensor c = crop_to(p, pr);
        CHECK(c.v == f.v);
    }
}
