#include "mixedrc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mixedrc/imgops.hpp"

namespace mixedrc::nn {

ParamStore::Entry& ParamStore::ensure(const std::string& name, const std::vector<int>& dims, Init init) {
    auto it = entries_.find(name);
    if (it != entries_.end()) {
        if (it->second.value.dims != dims)
            throw std::invalid_argument("param '" + name + "' re-declared with different shape");
        return it->second;
    }
    Entry e;
    e.value = Tensor(dims);
    if (init == Init::HeNormal) {
        std::size_t fan_in = 1;
        for (std::size_t i = 1; i < dims.size(); ++i) fan_in *= static_cast<std::size_t>(dims[i]);
        if (fan_in == 0) fan_in = 1;
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        Rng rng(derive_seed(seed_, name));
        for (float& v : e.value.v) v = static_cast<float>(rng.normal() * std_dev);
    }
    return entries_.emplace(name, std::move(e)).first->second;
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown param '" + name + "'");
    return it->second;
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown param '" + name + "'");
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, e] : entries_) e.grad = Tensor();
}

std::size_t ParamStore::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
}

void adam_step(ParamStore& store, const AdamConfig& cfg, int64_t t) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (auto& [name, e] : store.entries()) {
        if (e.grad.empty()) continue;
        if (e.adam_m.empty()) {
            e.adam_m = Tensor(e.value.dims);
            e.adam_v = Tensor(e.value.dims);
        }
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad.v[i];
            const double m = cfg.beta1 * e.adam_m.v[i] + (1.0 - cfg.beta1) * g;
            const double v = cfg.beta2 * e.adam_v.v[i] + (1.0 - cfg.beta2) * g * g;
            e.adam_m.v[i] = static_cast<float>(m);
            e.adam_v.v[i] = static_cast<float>(v);
            e.value.v[i] -= static_cast<float>(cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
        }
    }
}

int Tape::push(Tensor val, bool requires_grad, std::function<void(Tape&)> back) {
    auto n = std::make_unique<Node>();
    n->val = std::move(val);
    n->requires_grad = requires_grad;
    n->back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(int i) {
    Node& n = *nodes_[i];
    if (n.grad.empty()) n.grad = Tensor(n.val.dims);
    return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    return Var{push(std::move(value), requires_grad, nullptr)};
}

Var Tape::param(const std::string& name, const std::vector<int>& dims, Init init) {
    if (!store_) throw std::logic_error("tape has no parameter store");
    ParamStore::Entry& e = store_->ensure(name, dims, init);
    const int idx = push(e.value, true, nullptr);
    nodes_[idx]->bound_param = name;
    nodes_[idx]->back = [idx, name](Tape& t) {
        ParamStore::Entry& pe = t.store_->at(name);
        const Tensor& g = t.nodes_[idx]->grad;
        if (pe.grad.empty()) pe.grad = Tensor(pe.value.dims);
        for (std::size_t i = 0; i < g.size(); ++i) pe.grad.v[i] += g.v[i];
    };
    return Var{idx};
}

namespace {

// out(OC,n) = W(OC,k) * col(k,n) + bias
void gemm_axpy(const float* wm, const float* col, const float* bias, float* out, int oc_n, int k_n, int n) {
    for (int oc = 0; oc < oc_n; ++oc) {
        float* o = out + static_cast<std::size_t>(oc) * n;
        const float bv = bias ? bias[oc] : 0.0f;
        for (int j = 0; j < n; ++j) o[j] = bv;
        const float* wrow = wm + static_cast<std::size_t>(oc) * k_n;
        for (int kk = 0; kk < k_n; ++kk) {
            const float wv = wrow[kk];
            if (wv == 0.0f) continue;
            const float* c = col + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) o[j] += wv * c[j];
        }
    }
}

// dcol(k,n) += W^T(k,OC) * dout(OC,n)
void gemm_t_axpy(const float* wm, const float* dout, float* dcol, int oc_n, int k_n, int n) {
    for (int oc = 0; oc < oc_n; ++oc) {
        const float* d = dout + static_cast<std::size_t>(oc) * n;
        const float* wrow = wm + static_cast<std::size_t>(oc) * k_n;
        for (int kk = 0; kk < k_n; ++kk) {
            const float wv = wrow[kk];
            if (wv == 0.0f) continue;
            float* c = dcol + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) c[j] += wv * d[j];
        }
    }
}

// dw(OC,k) += dout(OC,n) * col^T(n,k)
void gemm_dw(const float* dout, const float* col, float* dw, int oc_n, int k_n, int n) {
    for (int oc = 0; oc < oc_n; ++oc) {
        const float* d = dout + static_cast<std::size_t>(oc) * n;
        float* wrow = dw + static_cast<std::size_t>(oc) * k_n;
        for (int kk = 0; kk < k_n; ++kk) {
            const float* c = col + static_cast<std::size_t>(kk) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += static_cast<double>(d[j]) * c[j];
            wrow[kk] += static_cast<float>(acc);
        }
    }
}

void im2col_replicate(const Tensor& x, int k, int dilation, std::vector<float>& col) {
    const int ic_n = x.c(), h = x.h(), w = x.w();
    const int half = k / 2;
    const int n = h * w;
    col.assign(static_cast<std::size_t>(ic_n) * k * k * n, 0.0f);
    for (int ic = 0; ic < ic_n; ++ic) {
        const float* plane = x.plane(ic);
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                float* dst = col.data() + (static_cast<std::size_t>(ic) * k * k + ky * k + kx) * n;
                const int oy = (ky - half) * dilation;
                const int ox = (kx - half) * dilation;
                for (int y = 0; y < h; ++y) {
                    const int sy = std::clamp(y + oy, 0, h - 1);
                    const float* row = plane + static_cast<std::size_t>(sy) * w;
                    float* drow = dst + static_cast<std::size_t>(y) * w;
                    for (int j = 0; j < w; ++j) drow[j] = row[std::clamp(j + ox, 0, w - 1)];
                }
            }
    }
}

void col2im_replicate(const std::vector<float>& dcol, int ic_n, int h, int w, int k, int dilation, Tensor& dx) {
    const int half = k / 2;
    const int n = h * w;
    for (int ic = 0; ic < ic_n; ++ic) {
        float* plane = dx.plane(ic);
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const float* src = dcol.data() + (static_cast<std::size_t>(ic) * k * k + ky * k + kx) * n;
                const int oy = (ky - half) * dilation;
                const int ox = (kx - half) * dilation;
                for (int y = 0; y < h; ++y) {
                    const int sy = std::clamp(y + oy, 0, h - 1);
                    float* row = plane + static_cast<std::size_t>(sy) * w;
                    const float* srow = src + static_cast<std::size_t>(y) * w;
                    for (int j = 0; j < w; ++j) row[std::clamp(j + ox, 0, w - 1)] += srow[j];
                }
            }
    }
}

struct BilinearSample {
    int iy0, iy1, ix0, ix1;
    float fy, fx;
};

inline BilinearSample bilinear_locate(float py, float px, int h, int w) {
    const float fy0 = std::floor(py);
    const float fx0 = std::floor(px);
    BilinearSample s;
    s.fy = py - fy0;
    s.fx = px - fx0;
    const int y0 = static_cast<int>(fy0);
    const int x0 = static_cast<int>(fx0);
    s.iy0 = std::clamp(y0, 0, h - 1);
    s.iy1 = std::clamp(y0 + 1, 0, h - 1);
    s.ix0 = std::clamp(x0, 0, w - 1);
    s.ix1 = std::clamp(x0 + 1, 0, w - 1);
    return s;
}

}  // namespace

Var Tape::conv2d(Var xv, Var wv, Var bv, int dilation) {
    const Tensor& x = val(xv);
    const Tensor& w = val(wv);
    const Tensor& b = val(bv);
    require_frame(x, "conv2d input");
    if (w.ndim() != 4) throw std::invalid_argument("conv2d: weight must be 4-D, got " + w.shape_str());
    if (b.ndim() != 1 || b.dims[0] != w.dims[0])
        throw std::invalid_argument("conv2d: bias shape mismatch " + b.shape_str());
    if (w.dims[1] != x.c())
        throw std::invalid_argument("conv2d: input channels " + std::to_string(x.c()) + " != weight in-channels " +
                                    std::to_string(w.dims[1]));
    if (w.dims[2] != w.dims[3] || w.dims[2] % 2 == 0)
        throw std::invalid_argument("conv2d: kernel must be odd square, got " + w.shape_str());
    if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be >= 1");

    const int oc_n = w.dims[0], ic_n = x.c(), k = w.dims[2];
    const int h = x.h(), wdt = x.w(), n = h * wdt;
    const int k_n = ic_n * k * k;

    Tensor out = Tensor::chw(oc_n, h, wdt);
    if (k == 1 && dilation == 1) {
        gemm_axpy(w.v.data(), x.v.data(), b.v.data(), out.v.data(), oc_n, k_n, n);
    } else {
        std::vector<float> col;
        im2col_replicate(x, k, dilation, col);
        gemm_axpy(w.v.data(), col.data(), b.v.data(), out.v.data(), oc_n, k_n, n);
    }

    const bool needs = rg(xv) || rg(wv) || rg(bv);
    const int xi = xv.i, wi = wv.i, bi = bv.i;
    const int self = push(std::move(out), needs, nullptr);
    nodes_[self]->back = [self, xi, wi, bi, dilation, oc_n, ic_n, k, h, wdt, n, k_n](Tape& t) {
        const Tensor& g = t.nodes_[self]->grad;
        const Tensor& x = t.nodes_[xi]->val;
        const Tensor& w = t.nodes_[wi]->val;
        const bool need_x = t.nodes_[xi]->requires_grad;
        const bool need_w = t.nodes_[wi]->requires_grad;
        const bool need_b = t.nodes_[bi]->requires_grad;

        if (need_b) {
            Tensor& db = t.grad_buf(bi);
            for (int oc = 0; oc < oc_n; ++oc) {
                double acc = 0.0;
                const float* gp = g.v.data() + static_cast<std::size_t>(oc) * n;
                for (int j = 0; j < n; ++j) acc += gp[j];
                db.v[oc] += static_cast<float>(acc);
            }
        }
        if (k == 1 && dilation == 1) {
            if (need_w) gemm_dw(g.v.data(), x.v.data(), t.grad_buf(wi).v.data(), oc_n, k_n, n);
            if (need_x) gemm_t_axpy(w.v.data(), g.v.data(), t.grad_buf(xi).v.data(), oc_n, k_n, n);
            return;
        }
        std::vector<float> col;
        if (need_w) {
            im2col_replicate(x, k, dilation, col);
            gemm_dw(g.v.data(), col.data(), t.grad_buf(wi).v.data(), oc_n, k_n, n);
        }
        if (need_x) {
            std::vector<float> dcol(static_cast<std::size_t>(k_n) * n, 0.0f);
            gemm_t_axpy(w.v.data(), g.v.data(), dcol.data(), oc_n, k_n, n);
            col2im_replicate(dcol, ic_n, h, wdt, k, dilation, t.grad_buf(xi));
        }
    };
    return Var{self};
}

Var Tape::deform_conv(Var xv, Var ov, Var wv, Var bv) {
    const Tensor& x = val(xv);
    const Tensor& off = val(ov);
    const Tensor& w = val(wv);
    const Tensor& b = val(bv);
    require_frame(x, "deform_conv input");
    if (w.ndim() != 4 || w.dims[2] != w.dims[3] || w.dims[2] % 2 == 0)
        throw std::invalid_argument("deform_conv: weight must be 4-D odd square, got " + w.shape_str());
    const int k = w.dims[2];
    if (off.ndim() != 3 || off.c() != 2 * k * k)
        throw std::invalid_argument("deform_conv: offsets must have 2*K^2=" + std::to_string(2 * k * k) +
                                    " channels, got " + off.shape_str());
    if (off.h() != x.h() || off.w() != x.w())
        throw std::invalid_argument("deform_conv: offsets spatial dims " + off.shape_str() +
                                    " do not match features " + x.shape_str());
    if (w.dims[1] != x.c())
        throw std::invalid_argument("deform_conv: input channels mismatch");
    if (b.ndim() != 1 || b.dims[0] != w.dims[0])
        throw std::invalid_argument("deform_conv: bias shape mismatch");

    const int oc_n = w.dims[0], ic_n = x.c();
    const int h = x.h(), wdt = x.w(), n = h * wdt;
    const int taps = k * k, k_n = ic_n * taps, half = k / 2;

    // sampled patch matrix S(ic*taps+tap, n)
    std::vector<float> smat(static_cast<std::size_t>(k_n) * n, 0.0f);
    for (int tap = 0; tap < taps; ++tap) {
        const int ky = tap / k, kx = tap % k;
        const float* ody = off.plane(2 * tap);
        const float* odx = off.plane(2 * tap + 1);
        for (int y = 0; y < h; ++y)
            for (int j = 0; j < wdt; ++j) {
                const int p = y * wdt + j;
                const float py = static_cast<float>(y + ky - half) + ody[p];
                const float px = static_cast<float>(j + kx - half) + odx[p];
                const BilinearSample s = bilinear_locate(py, px, h, wdt);
                for (int ic = 0; ic < ic_n; ++ic) {
                    const float* pl = x.plane(ic);
                    const float v00 = pl[s.iy0 * wdt + s.ix0], v01 = pl[s.iy0 * wdt + s.ix1];
                    const float v10 = pl[s.iy1 * wdt + s.ix0], v11 = pl[s.iy1 * wdt + s.ix1];
                    smat[(static_cast<std::size_t>(ic) * taps + tap) * n + p] =
                        (1.0f - s.fy) * ((1.0f - s.fx) * v00 + s.fx * v01) + s.fy * ((1.0f - s.fx) * v10 + s.fx * v11);
                }
            }
    }

    Tensor out = Tensor::chw(oc_n, h, wdt);
    gemm_axpy(w.v.data(), smat.data(), b.v.data(), out.v.data(), oc_n, k_n, n);

    const bool needs = rg(xv) || rg(ov) || rg(wv) || rg(bv);
    const int xi = xv.i, oi = ov.i, wi = wv.i, bi = bv.i;
    const int self = push(std::move(out), needs, nullptr);
    auto smat_keep = std::make_shared<std::vector<float>>(std::move(smat));
    nodes_[self]->back = [self, xi, oi, wi, bi, oc_n, ic_n, k, h, wdt, n, k_n, taps, half, smat_keep](Tape& t) {
        const Tensor& g = t.nodes_[self]->grad;
        const Tensor& x = t.nodes_[xi]->val;
        const Tensor& off = t.nodes_[oi]->val;
        const Tensor& w = t.nodes_[wi]->val;
        const bool need_x = t.nodes_[xi]->requires_grad;
        const bool need_o = t.nodes_[oi]->requires_grad;
        const bool need_w = t.nodes_[wi]->requires_grad;
        const bool need_b = t.nodes_[bi]->requires_grad;

        if (need_b) {
            Tensor& db = t.grad_buf(bi);
            for (int oc = 0; oc < oc_n; ++oc) {
                double acc = 0.0;
                const float* gp = g.v.data() + static_cast<std::size_t>(oc) * n;
                for (int j = 0; j < n; ++j) acc += gp[j];
                db.v[oc] += static_cast<float>(acc);
            }
        }
        if (need_w) gemm_dw(g.v.data(), smat_keep->data(), t.grad_buf(wi).v.data(), oc_n, k_n, n);
        if (!need_x && !need_o) return;

        std::vector<float> dsmat(static_cast<std::size_t>(k_n) * n, 0.0f);
        gemm_t_axpy(w.v.data(), g.v.data(), dsmat.data(), oc_n, k_n, n);

        Tensor* dx = need_x ? &t.grad_buf(xi) : nullptr;
        Tensor* doff = need_o ? &t.grad_buf(oi) : nullptr;
        for (int tap = 0; tap < taps; ++tap) {
            const int ky = tap / k, kx = tap % k;
            const float* ody = off.plane(2 * tap);
            const float* odx = off.plane(2 * tap + 1);
            for (int y = 0; y < h; ++y)
                for (int j = 0; j < wdt; ++j) {
                    const int p = y * wdt + j;
                    const float py = static_cast<float>(y + ky - half) + ody[p];
                    const float px = static_cast<float>(j + kx - half) + odx[p];
                    const BilinearSample s = bilinear_locate(py, px, h, wdt);
                    double gdy = 0.0, gdx = 0.0;
                    for (int ic = 0; ic < ic_n; ++ic) {
                        const float ds = dsmat[(static_cast<std::size_t>(ic) * taps + tap) * n + p];
                        if (ds == 0.0f) continue;
                        const float* pl = x.plane(ic);
                        const float v00 = pl[s.iy0 * wdt + s.ix0], v01 = pl[s.iy0 * wdt + s.ix1];
                        const float v10 = pl[s.iy1 * wdt + s.ix0], v11 = pl[s.iy1 * wdt + s.ix1];
                        if (dx) {
                            float* dpl = dx->plane(ic);
                            dpl[s.iy0 * wdt + s.ix0] += ds * (1.0f - s.fy) * (1.0f - s.fx);
                            dpl[s.iy0 * wdt + s.ix1] += ds * (1.0f - s.fy) * s.fx;
                            dpl[s.iy1 * wdt + s.ix0] += ds * s.fy * (1.0f - s.fx);
                            dpl[s.iy1 * wdt + s.ix1] += ds * s.fy * s.fx;
                        }
                        if (doff) {
                            gdy += static_cast<double>(ds) *
                                   ((1.0f - s.fx) * (v10 - v00) + s.fx * (v11 - v01));
                            gdx += static_cast<double>(ds) *
                                   ((1.0f - s.fy) * (v01 - v00) + s.fy * (v11 - v10));
                        }
                    }
                    if (doff) {
                        doff->plane(2 * tap)[p] += static_cast<float>(gdy);
                        doff->plane(2 * tap + 1)[p] += static_cast<float>(gdx);
                    }
                }
        }
    };
    return Var{self};
}

namespace {

template <typename F, typename DF>
Var unary_op(Tape& t, Var xv, F f, DF df);

}  // namespace

#define MIXEDRC_UNARY(namefn, fwd, bwd)                                                        \
    Var Tape::namefn(Var xv) {                                                                 \
        const Tensor& x = val(xv);                                                             \
        Tensor out(x.dims);                                                                    \
        for (std::size_t i = 0; i < x.size(); ++i) {                                           \
            const float v = x.v[i];                                                            \
            out.v[i] = (fwd);                                                                  \
        }                                                                                      \
        const int xi = xv.i;                                                                   \
        const int self = push(std::move(out), rg(xv), nullptr);                                \
        nodes_[self]->back = [self, xi](Tape& t) {                                             \
            if (!t.nodes_[xi]->requires_grad) return;                                          \
            const Tensor& g = t.nodes_[self]->grad;                                            \
            const Tensor& x = t.nodes_[xi]->val;                                               \
            const Tensor& y = t.nodes_[self]->val;                                             \
            (void)x;                                                                           \
            (void)y;                                                                           \
            Tensor& dx = t.grad_buf(xi);                                                       \
            for (std::size_t i = 0; i < g.size(); ++i) {                                       \
                const float v = x.v[i];                                                        \
                const float o = y.v[i];                                                        \
                (void)v;                                                                       \
                (void)o;                                                                       \
                dx.v[i] += g.v[i] * (bwd);                                                     \
            }                                                                                  \
        };                                                                                     \
        return Var{self};                                                                      \
    }

MIXEDRC_UNARY(relu, v > 0.0f ? v : 0.0f, v > 0.0f ? 1.0f : 0.0f)
MIXEDRC_UNARY(sigmoid, 1.0f / (1.0f + std::exp(-v)), o*(1.0f - o))
MIXEDRC_UNARY(tanh_, std::tanh(v), 1.0f - o * o)

#undef MIXEDRC_UNARY

Var Tape::leaky_relu(Var xv, float alpha) {
    const Tensor& x = val(xv);
    Tensor out(x.dims);
    for (std::size_t i = 0; i < x.size(); ++i) out.v[i] = x.v[i] > 0.0f ? x.v[i] : alpha * x.v[i];
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi, alpha](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        const Tensor& g = t.nodes_[self]->grad;
        const Tensor& x = t.nodes_[xi]->val;
        Tensor& dx = t.grad_buf(xi);
        for (std::size_t i = 0; i < g.size(); ++i) dx.v[i] += g.v[i] * (x.v[i] > 0.0f ? 1.0f : alpha);
    };
    return Var{self};
}

Var Tape::clamp(Var xv, float lo, float hi) {
    const Tensor& x = val(xv);
    Tensor out(x.dims);
    for (std::size_t i = 0; i < x.size(); ++i) out.v[i] = std::clamp(x.v[i], lo, hi);
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi, lo, hi](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        const Tensor& g = t.nodes_[self]->grad;
        const Tensor& x = t.nodes_[xi]->val;
        Tensor& dx = t.grad_buf(xi);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x.v[i] > lo && x.v[i] < hi) dx.v[i] += g.v[i];
    };
    return Var{self};
}

Var Tape::add(Var av, Var bv) {
    const Tensor& a = val(av);
    const Tensor& b = val(bv);
    require_same_shape(a, b, "add");
    Tensor out(a.dims);
    for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + b.v[i];
    const int ai = av.i, bi = bv.i;
    const int self = push(std::move(out), rg(av) || rg(bv), nullptr);
    nodes_[self]->back = [self, ai, bi](Tape& t) {
        const Tensor& g = t.nodes_[self]->grad;
        if (t.nodes_[ai]->requires_grad) {
            Tensor& da = t.grad_buf(ai);
            for (std::size_t i = 0; i < g.size(); ++i) da.v[i] += g.v[i];
        }
        if (t.nodes_[bi]->requires_grad) {
            Tensor& db = t.grad_buf(bi);
            for (std::size_t i = 0; i < g.size(); ++i) db.v[i] += g.v[i];
        }
    };
    return Var{self};
}

Var Tape::sub(Var av, Var bv) {
    const Tensor& a = val(av);
    const Tensor& b = val(bv);
    require_same_shape(a, b, "sub");
    Tensor out(a.dims);
    for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] - b.v[i];
    const int ai = av.i, bi = bv.i;
    const int self = push(std::move(out), rg(av) || rg(bv), nullptr);
    nodes_[self]->back = [self, ai, bi](Tape& t) {
        const Tensor& g = t.nodes_[self]->grad;
        if (t.nodes_[ai]->requires_grad) {
            Tensor& da = t.grad_buf(ai);
            for (std::size_t i = 0; i < g.size(); ++i) da.v[i] += g.v[i];
        }
        if (t.nodes_[bi]->requires_grad) {
            Tensor& db = t.grad_buf(bi);
            for (std::size_t i = 0; i < g.size(); ++i) db.v[i] -= g.v[i];
        }
    };
    return Var{self};
}

Var Tape::mul(Var av, Var bv) {
    const Tensor& a = val(av);
    const Tensor& b = val(bv);
    require_same_shape(a, b, "mul");
    Tensor out(a.dims);
    for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    const int ai = av.i, bi = bv.i;
    const int self = push(std::move(out), rg(av) || rg(bv), nullptr);
    nodes_[self]->back = [self, ai, bi](Tape& t) {
        const Tensor& g = t.nodes_[self]->grad;
        const Tensor& a = t.nodes_[ai]->val;
        const Tensor& b = t.nodes_[bi]->val;
        if (t.nodes_[ai]->requires_grad) {
            Tensor& da = t.grad_buf(ai);
            for (std::size_t i = 0; i < g.size(); ++i) da.v[i] += g.v[i] * b.v[i];
        }
        if (t.nodes_[bi]->requires_grad) {
            Tensor& db = t.grad_buf(bi);
            for (std::size_t i = 0; i < g.size(); ++i) db.v[i] += g.v[i] * a.v[i];
        }
    };
    return Var{self};
}

Var Tape::scale(Var av, float s) {
    const Tensor& a = val(av);
    Tensor out(a.dims);
    for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * s;
    const int ai = av.i;
    const int self = push(std::move(out), rg(av), nullptr);
    nodes_[self]->back = [self, ai, s](Tape& t) {
        if (!t.nodes_[ai]->requires_grad) return;
        const Tensor& g = t.nodes_[self]->grad;
        Tensor& da = t.grad_buf(ai);
        for (std::size_t i = 0; i < g.size(); ++i) da.v[i] += g.v[i] * s;
    };
    return Var{self};
}

Var Tape::concat_ch(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_ch: no inputs");
    int c_total = 0;
    const Tensor& first = val(xs[0]);
    require_frame(first, "concat_ch");
    for (Var v : xs) {
        const Tensor& x = val(v);
        if (x.h() != first.h() || x.w() != first.w())
            throw std::invalid_argument("concat_ch: spatial dims mismatch");
        c_total += x.c();
    }
    Tensor out = Tensor::chw(c_total, first.h(), first.w());
    std::size_t offset = 0;
    bool needs = false;
    std::vector<int> idx;
    for (Var v : xs) {
        const Tensor& x = val(v);
        std::copy(x.v.begin(), x.v.end(), out.v.begin() + offset);
        offset += x.size();
        needs = needs || rg(v);
        idx.push_back(v.i);
    }
    const int self = push(std::move(out), needs, nullptr);
    nodes_[self]->back = [self, idx](Tape& t) {
        const Tensor& g = t.nodes_[self]->grad;
        std::size_t offset = 0;
        for (int i : idx) {
            const std::size_t sz = t.nodes_[i]->val.size();
            if (t.nodes_[i]->requires_grad) {
                Tensor& d = t.grad_buf(i);
                for (std::size_t j = 0; j < sz; ++j) d.v[j] += g.v[offset + j];
            }
            offset += sz;
        }
    };
    return Var{self};
}

Var Tape::channel_mean(Var xv) {
    const Tensor& x = val(xv);
    require_frame(x, "channel_mean");
    const int c = x.c(), n = x.h() * x.w();
    Tensor out = Tensor::chw(1, x.h(), x.w());
    for (int p = 0; p < n; ++p) {
        double acc = 0.0;
        for (int ci = 0; ci < c; ++ci) acc += x.v[static_cast<std::size_t>(ci) * n + p];
        out.v[p] = static_cast<float>(acc / c);
    }
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi, c, n](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        const Tensor& g = t.nodes_[self]->grad;
        Tensor& dx = t.grad_buf(xi);
        const float inv = 1.0f / static_cast<float>(c);
        for (int ci = 0; ci < c; ++ci)
            for (int p = 0; p < n; ++p) dx.v[static_cast<std::size_t>(ci) * n + p] += g.v[p] * inv;
    };
    return Var{self};
}

Var Tape::channel_max(Var xv) {
    const Tensor& x = val(xv);
    require_frame(x, "channel_max");
    const int c = x.c(), n = x.h() * x.w();
    Tensor out = Tensor::chw(1, x.h(), x.w());
    auto argmax = std::make_shared<std::vector<int>>(n, 0);
    for (int p = 0; p < n; ++p) {
        float best = x.v[p];
        int bi = 0;
        for (int ci = 1; ci < c; ++ci) {
            const float v = x.v[static_cast<std::size_t>(ci) * n + p];
            if (v > best) {
                best = v;
                bi = ci;
            }
        }
        out.v[p] = best;
        (*argmax)[p] = bi;
    }
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi, n, argmax](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        const Tensor& g = t.nodes_[self]->grad;
        Tensor& dx = t.grad_buf(xi);
        for (int p = 0; p < n; ++p) dx.v[static_cast<std::size_t>((*argmax)[p]) * n + p] += g.v[p];
    };
    return Var{self};
}

Var Tape::global_avg_pool(Var xv) {
    const Tensor& x = val(xv);
    require_frame(x, "global_avg_pool");
    const int c = x.c(), n = x.h() * x.w();
    Tensor out = Tensor::chw(c, 1, 1);
    for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        const float* pl = x.plane(ci);
        for (int p = 0; p < n; ++p) acc += pl[p];
        out.v[ci] = static_cast<float>(acc / n);
    }
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi, c, n](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        const Tensor& g = t.nodes_[self]->grad;
        Tensor& dx = t.grad_buf(xi);
        const float inv = 1.0f / static_cast<float>(n);
        for (int ci = 0; ci < c; ++ci) {
            float* pl = dx.plane(ci);
            const float gv = g.v[ci] * inv;
            for (int p = 0; p < n; ++p) pl[p] += gv;
        }
    };
    return Var{self};
}

Var Tape::mul_gate_spatial(Var xv, Var gv) {
    const Tensor& x = val(xv);
    const Tensor& gate = val(gv);
    require_frame(x, "mul_gate_spatial");
    if (gate.c() != 1 || gate.h() != x.h() || gate.w() != x.w())
        throw std::invalid_argument("mul_gate_spatial: gate must be (1,h,w) matching features");
    const int c = x.c(), n = x.h() * x.w();
    Tensor out(x.dims);
    for (int ci = 0; ci < c; ++ci)
        for (int p = 0; p < n; ++p)
            out.v[static_cast<std::size_t>(ci) * n + p] = x.v[static_cast<std::size_t>(ci) * n + p] * gate.v[p];
    const int xi = xv.i, gi = gv.i;
    const int self = push(std::move(out), rg(xv) || rg(gv), nullptr);
    nodes_[self]->back = [self, xi, gi, c, n](Tape& t) {
        const Tensor& g = t.nodes_[self]->grad;
        const Tensor& x = t.nodes_[xi]->val;
        const Tensor& gate = t.nodes_[gi]->val;
        if (t.nodes_[xi]->requires_grad) {
            Tensor& dx = t.grad_buf(xi);
            for (int ci = 0; ci < c; ++ci)
                for (int p = 0; p < n; ++p)
                    dx.v[static_cast<std::size_t>(ci) * n + p] += g.v[static_cast<std::size_t>(ci) * n + p] * gate.v[p];
        }
        if (t.nodes_[gi]->requires_grad) {
            Tensor& dg = t.grad_buf(gi);
            for (int p = 0; p < n; ++p) {
                double acc = 0.0;
                for (int ci = 0; ci < c; ++ci)
                    acc += static_cast<double>(g.v[static_cast<std::size_t>(ci) * n + p]) *
                           x.v[static_cast<std::size_t>(ci) * n + p];
                dg.v[p] += static_cast<float>(acc);
            }
        }
    };
    return Var{self};
}

Var Tape::mul_gate_channel(Var xv, Var gv) {
    const Tensor& x = val(xv);
    const Tensor& gate = val(gv);
    require_frame(x, "mul_gate_channel");
    if (gate.c() != x.c() || gate.h() != 1 || gate.w() != 1)
        throw std::invalid_argument("mul_gate_channel: gate must be (C,1,1)");
    const int c = x.c(), n = x.h() * x.w();
    Tensor out(x.dims);
    for (int ci = 0; ci < c; ++ci) {
        const float gvv = gate.v[ci];
        for (int p = 0; p < n; ++p)
            out.v[static_cast<std::size_t>(ci) * n + p] = x.v[static_cast<std::size_t>(ci) * n + p] * gvv;
    }
    const int xi = xv.i, gi = gv.i;
    const int self = push(std::move(out), rg(xv) || rg(gv), nullptr);
    nodes_[self]->back = [self, xi, gi, c, n](Tape& t) {
        const Tensor& g = t.nodes_[self]->grad;
        const Tensor& x = t.nodes_[xi]->val;
        const Tensor& gate = t.nodes_[gi]->val;
        if (t.nodes_[xi]->requires_grad) {
            Tensor& dx = t.grad_buf(xi);
            for (int ci = 0; ci < c; ++ci) {
                const float gvv = gate.v[ci];
                for (int p = 0; p < n; ++p)
                    dx.v[static_cast<std::size_t>(ci) * n + p] += g.v[static_cast<std::size_t>(ci) * n + p] * gvv;
            }
        }
        if (t.nodes_[gi]->requires_grad) {
            Tensor& dg = t.grad_buf(gi);
            for (int ci = 0; ci < c; ++ci) {
                double acc = 0.0;
                for (int p = 0; p < n; ++p)
                    acc += static_cast<double>(g.v[static_cast<std::size_t>(ci) * n + p]) *
                           x.v[static_cast<std::size_t>(ci) * n + p];
                dg.v[ci] += static_cast<float>(acc);
            }
        }
    };
    return Var{self};
}

Var Tape::pixel_shuffle(Var xv, int r) {
    Tensor out = imgops::up_shuffle(val(xv), r);
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi, r](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        Tensor gd = imgops::down_shuffle(t.nodes_[self]->grad, r);
        Tensor& dx = t.grad_buf(xi);
        for (std::size_t i = 0; i < gd.size(); ++i) dx.v[i] += gd.v[i];
    };
    return Var{self};
}

Var Tape::pixel_unshuffle(Var xv, int r) {
    Tensor out = imgops::down_shuffle(val(xv), r);
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi, r](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        Tensor gu = imgops::up_shuffle(t.nodes_[self]->grad, r);
        Tensor& dx = t.grad_buf(xi);
        for (std::size_t i = 0; i < gu.size(); ++i) dx.v[i] += gu.v[i];
    };
    return Var{self};
}

Var Tape::mean_abs(Var xv) {
    const Tensor& x = val(xv);
    double acc = 0.0;
    for (float v : x.v) acc += std::abs(static_cast<double>(v));
    Tensor out({1});
    out.v[0] = static_cast<float>(acc / x.size());
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        const float g = t.nodes_[self]->grad.v[0];
        const Tensor& x = t.nodes_[xi]->val;
        Tensor& dx = t.grad_buf(xi);
        const float inv = g / static_cast<float>(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            dx.v[i] += x.v[i] > 0.0f ? inv : (x.v[i] < 0.0f ? -inv : 0.0f);
    };
    return Var{self};
}

Var Tape::mean_sq(Var xv) {
    const Tensor& x = val(xv);
    double acc = 0.0;
    for (float v : x.v) acc += static_cast<double>(v) * v;
    Tensor out({1});
    out.v[0] = static_cast<float>(acc / x.size());
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        const float g = t.nodes_[self]->grad.v[0];
        const Tensor& x = t.nodes_[xi]->val;
        Tensor& dx = t.grad_buf(xi);
        const float inv = 2.0f * g / static_cast<float>(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) dx.v[i] += inv * x.v[i];
    };
    return Var{self};
}

Var Tape::sqrt_s(Var xv) {
    const Tensor& x = val(xv);
    if (x.size() != 1) throw std::invalid_argument("sqrt_s: scalar input expected");
    Tensor out({1});
    out.v[0] = std::sqrt(std::max(0.0f, x.v[0]));
    const int xi = xv.i;
    const int self = push(std::move(out), rg(xv), nullptr);
    nodes_[self]->back = [self, xi](Tape& t) {
        if (!t.nodes_[xi]->requires_grad) return;
        const float o = t.nodes_[self]->val.v[0];
        if (o <= 0.0f) return;
        t.grad_buf(xi).v[0] += t.nodes_[self]->grad.v[0] * 0.5f / o;
    };
    return Var{self};
}

void Tape::backward(Var loss) {
    if (!loss.valid() || loss.i >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("backward: invalid loss var");
    if (nodes_[loss.i]->val.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    grad_buf(loss.i).v[0] = 1.0f;
    for (int i = loss.i; i >= 0; --i) {
        Node& n = *nodes_[i];
        if (n.grad.empty() || !n.back) continue;
        if (!n.requires_grad) continue;
        n.back(*this);
    }
}

Var conv_layer(Tape& t, const std::string& name, Var x, int out_ch, int k, int dilation, Init init) {
    const int in_ch = t.val(x).c();
    Var w = t.param(name + ".w", {out_ch, in_ch, k, k}, init);
    Var b = t.param(name + ".b", {out_ch}, Init::Zero);
    return t.conv2d(x, w, b, dilation);
}

}  // namespace mixedrc::nn
