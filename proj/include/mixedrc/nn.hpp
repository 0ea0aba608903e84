#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mixedrc/rng.hpp"
#include "mixedrc/tensor.hpp"

namespace mixedrc::nn {

enum class Init { Zero, HeNormal };

// Named parameter tensors plus their gradient and Adam moment buffers.
// Initialization is seeded per tensor name, so adding a parameter never
// shifts the values of existing ones.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        Tensor adam_m;
        Tensor adam_v;
    };

    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    Entry& ensure(const std::string& name, const std::vector<int>& dims, Init init);
    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    Entry& at(const std::string& name);
    const Entry& at(const std::string& name) const;

    void zero_grad();
    std::size_t param_count() const;
    uint64_t seed() const { return seed_; }
    void set_seed(uint64_t s) { seed_ = s; }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

private:
    uint64_t seed_;
    std::map<std::string, Entry> entries_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update over every parameter with a populated gradient.
// t is the 1-based step counter used for bias correction.
void adam_step(ParamStore& store, const AdamConfig& cfg, int64_t t);

struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

// Reverse-mode tape over Tensor values. Forward values are computed when an
// op is recorded; backward() sweeps the tape in reverse. Gradients of
// parameters accumulate into their ParamStore entries.
class Tape {
public:
    explicit Tape(ParamStore* store = nullptr) : store_(store) {}

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(const Tensor& value) { return leaf(value, false); }
    Var param(const std::string& name, const std::vector<int>& dims, Init init);

    // conv with stride 1, odd kernel, replicate padding, optional dilation
    Var conv2d(Var x, Var w, Var b, int dilation = 1);
    // deformable K x K sampling; offsets (2*K*K, h, w), layout [tap*2+0]=dy,
    // [tap*2+1]=dx in pixels of the feature grid. Bilinear, replicate border.
    Var deform_conv(Var x, Var offsets, Var w, Var b);

    Var relu(Var x);
    Var leaky_relu(Var x, float alpha = 0.1f);
    Var sigmoid(Var x);
    Var tanh_(Var x);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, float s);
    Var concat_ch(const std::vector<Var>& xs);
    Var channel_mean(Var x);               // (C,h,w) -> (1,h,w)
    Var channel_max(Var x);                // (C,h,w) -> (1,h,w)
    Var global_avg_pool(Var x);            // (C,h,w) -> (C,1,1)
    Var mul_gate_spatial(Var x, Var gate); // gate (1,h,w)
    Var mul_gate_channel(Var x, Var gate); // gate (C,1,1)
    Var pixel_shuffle(Var x, int r);
    Var pixel_unshuffle(Var x, int r);
    Var clamp(Var x, float lo, float hi);
    Var mean_abs(Var x);   // -> scalar (1)
    Var mean_sq(Var x);    // -> scalar (1)
    Var sqrt_s(Var x);     // scalar sqrt

    void backward(Var loss);

    const Tensor& val(Var v) const { return nodes_[v.i]->val; }
    const Tensor& grad_of(Var v) const { return nodes_[v.i]->grad; }
    float scalar(Var v) const { return nodes_[v.i]->val.v.at(0); }

    ParamStore* store() { return store_; }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves
        std::string bound_param;          // non-empty for store-bound leaves
    };

    int push(Tensor val, bool rg, std::function<void(Tape&)> back);
    Tensor& grad_buf(int i);
    bool rg(Var v) const { return nodes_[v.i]->requires_grad; }

    ParamStore* store_;
    std::vector<std::unique_ptr<Node>> nodes_;
};

// Convolution helper layers used by the model builders. Parameters are
// created on first use under `name` and reused afterwards.
Var conv_layer(Tape& t, const std::string& name, Var x, int out_ch, int k, int dilation = 1,
               Init init = Init::HeNormal);

}  // namespace mixedrc::nn
