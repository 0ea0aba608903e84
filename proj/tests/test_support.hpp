#pragma once

#include <cmath>

#include "mixedrc/rng.hpp"
#include "mixedrc/tensor.hpp"

namespace mixedrc::test {

inline Tensor random_frame(Rng& rng, int c, int h, int w, float lo = 0.0f, float hi = 1.0f) {
    Tensor t = Tensor::chw(c, h, w);
    for (float& v : t.v) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.v[i]) - b.v[i]));
    return m;
}

inline double rel_err(double a, double b) {
    const double denom = std::max(std::max(std::abs(a), std::abs(b)), 1e-6);
    return std::abs(a - b) / denom;
}

}  // namespace mixedrc::test
