#pragma once

#include "lapose/common.hpp"
#include "lapose/tensor.hpp"

#include <string>

namespace lapose {
namespace nn {

// y = x W^T + b, W is [out, in].
struct Linear {
    Tensor w, b;

    static Linear create(ParameterRegistry& reg, const std::string& name, int in, int out,
                         Rng& rng) {
        Linear l;
        l.w = reg.create(name + ".w", out, in);
        l.b = reg.create(name + ".b", 1, out);
        // fan-in scaling keeps activations and gradients O(1) at any width
        init_gaussian(l.w, rng, 1.0f / std::sqrt(float(in)));
        return l;
    }

    Tensor forward(const Tensor& x) const {
        return ops::add_row_broadcast(ops::matmul_nt(x, w), b);
    }
};

struct LayerNorm {
    Tensor gamma, beta;

    static LayerNorm create(ParameterRegistry& reg, const std::string& name, int dim) {
        LayerNorm n;
        n.gamma = reg.create(name + ".g", 1, dim);
        n.beta = reg.create(name + ".b", 1, dim);
        for (auto& v : n.gamma.data()) v = 1.0f;
        return n;
    }

    Tensor forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }
};

// Two-layer MLP with GELU, hidden = ratio * dim.
struct Mlp {
    Linear fc1, fc2;

    static Mlp create(ParameterRegistry& reg, const std::string& name, int dim, int ratio,
                      Rng& rng) {
        Mlp m;
        m.fc1 = Linear::create(reg, name + ".fc1", dim, dim * ratio, rng);
        m.fc2 = Linear::create(reg, name + ".fc2", dim * ratio, dim, rng);
        return m;
    }

    Tensor forward(const Tensor& x) const { return fc2.forward(ops::gelu(fc1.forward(x))); }
};

// Multi-head attention over `batch` independent row groups (see
// ops::attention). Query and key/value streams may differ.
struct MultiHeadAttention {
    Linear wq, wk, wv, wo;
    int heads = 1;
    int dim = 0;

    static MultiHeadAttention create(ParameterRegistry& reg, const std::string& name, int dim,
                                     int heads, Rng& rng) {
        MultiHeadAttention a;
        a.heads = heads;
        a.dim = dim;
        a.wq = Linear::create(reg, name + ".wq", dim, dim, rng);
        a.wk = Linear::create(reg, name + ".wk", dim, dim, rng);
        a.wv = Linear::create(reg, name + ".wv", dim, dim, rng);
        a.wo = Linear::create(reg, name + ".wo", dim, dim, rng);
        return a;
    }

    Tensor forward(const Tensor& x_q, const Tensor& x_kv, int batch, const Tensor* mask) const {
        Tensor q = wq.forward(x_q);
        Tensor k = wk.forward(x_kv);
        Tensor v = wv.forward(x_kv);
        int dh = dim / heads;
        float scale = 1.0f / std::sqrt(float(dh));
        std::vector<Tensor> outs;
        outs.reserve(size_t(heads));
        for (int h = 0; h < heads; ++h) {
            Tensor qh = ops::slice_cols(q, h * dh, dh);
            Tensor kh = ops::slice_cols(k, h * dh, dh);
            Tensor vh = ops::slice_cols(v, h * dh, dh);
            outs.push_back(ops::attention(qh, kh, vh, batch, mask, scale));
        }
        return wo.forward(ops::concat_cols(outs));
    }
};

// Sinusoidal features of a real-valued timestamp in seconds, dimension `dim`.
inline std::vector<float> sinusoidal_features(double t_seconds, int dim) {
    std::vector<float> f(static_cast<size_t>(dim), 0.0f);
    for (int i = 0; i < dim / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * double(i) / double(dim));
        f[size_t(2 * i)] = float(std::sin(t_seconds * freq));
        f[size_t(2 * i) + 1] = float(std::cos(t_seconds * freq));
    }
    return f;
}

// Additive attention masks (0 allowed, -inf excluded), shared per batch group.
Tensor causal_mask(int n);                       // row i attends cols <= i
Tensor query_memory_mask(int t, int tokens_per_frame); // inverse-dynamics query mask

} // namespace nn
} // namespace lapose
