#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixedrc {

// Dense row-major float32 tensor. Frames and feature maps are 3-D (C,H,W),
// convolution weights 4-D (OC,IC,KH,KW), biases 1-D. Values of frames live
// in [0,1] by convention; feature maps are unconstrained.
struct Tensor {
    std::vector<int> dims;
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) : dims(std::move(d)), v(count(dims), 0.0f) {}
    Tensor(std::vector<int> d, float fill) : dims(std::move(d)), v(count(dims), fill) {}

    static Tensor chw(int c, int h, int w, float fill = 0.0f) {
        return Tensor({c, h, w}, fill);
    }

    static std::size_t count(const std::vector<int>& d) {
        std::size_t n = 1;
        for (int x : d) {
            if (x <= 0) throw std::invalid_argument("tensor dimension must be positive, got " + std::to_string(x));
            n *= static_cast<std::size_t>(x);
        }
        return n;
    }

    int ndim() const { return static_cast<int>(dims.size()); }
    std::size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }

    // 3-D accessors
    int c() const { return dims.at(0); }
    int h() const { return dims.at(ndim() == 3 ? 1 : ndim() - 2); }
    int w() const { return dims.at(ndim() == 3 ? 2 : ndim() - 1); }

    float& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * dims[1] + y) * dims[2] + x]; }
    float at(int ci, int y, int x) const { return v[(static_cast<std::size_t>(ci) * dims[1] + y) * dims[2] + x]; }

    float* plane(int ci) { return v.data() + static_cast<std::size_t>(ci) * dims[1] * dims[2]; }
    const float* plane(int ci) const { return v.data() + static_cast<std::size_t>(ci) * dims[1] * dims[2]; }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims[i]);
        }
        return s + ")";
    }
};

inline void require_frame(const Tensor& t, const char* what) {
    if (t.ndim() != 3)
        throw std::invalid_argument(std::string(what) + ": expected 3-D (C,H,W) tensor, got " + t.shape_str());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// Ordered frame sequence, shape-homogeneous, with a rational frame rate.
struct Clip {
    std::vector<Tensor> frames;
    int fps_num = 30;
    int fps_den = 1;

    Clip() = default;
    explicit Clip(std::vector<Tensor> f, int num = 30, int den = 1)
        : frames(std::move(f)), fps_num(num), fps_den(den) {}

    int frame_count() const { return static_cast<int>(frames.size()); }
    bool empty() const { return frames.empty(); }
    double fps() const { return static_cast<double>(fps_num) / fps_den; }

    void validate() const {
        if (frames.empty()) throw std::invalid_argument("clip: empty");
        for (const auto& f : frames) {
            require_frame(f, "clip frame");
            if (!f.same_shape(frames.front()))
                throw std::invalid_argument("clip: frames not shape-homogeneous, " + f.shape_str() + " vs " +
                                            frames.front().shape_str());
        }
    }
};

}  // namespace mixedrc
