#include "lapose/model.hpp"

#include <stdexcept>

namespace lapose {

namespace {

std::vector<int> location_major_perm(int frames, int tpf) {
    std::vector<int> perm(size_t(frames) * tpf);
    for (int s = 0; s < tpf; ++s)
        for (int f = 0; f < frames; ++f) perm[size_t(s) * frames + f] = f * tpf + s;
    return perm;
}

std::vector<int> frame_major_perm(int frames, int tpf) {
    std::vector<int> perm(size_t(frames) * tpf);
    for (int f = 0; f < frames; ++f)
        for (int s = 0; s < tpf; ++s) perm[size_t(f) * tpf + s] = s * frames + f;
    return perm;
}

} // namespace

ForwardDynamics::ForwardDynamics(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng)
    : cfg_(cfg) {
    int d = cfg.dim;
    blocks_.reserve(size_t(cfg.fd_blocks));
    for (int i = 0; i < cfg.fd_blocks; ++i) {
        std::string base = "fd.block" + std::to_string(i);
        StBlock b;
        b.ln_spatial = nn::LayerNorm::create(reg, base + ".ln_s", d);
        b.attn_spatial = nn::MultiHeadAttention::create(reg, base + ".attn_s", d, cfg.heads, rng);
        b.ln_temporal = nn::LayerNorm::create(reg, base + ".ln_t", d);
        b.attn_temporal = nn::MultiHeadAttention::create(reg, base + ".attn_t", d, cfg.heads, rng);
        b.ln_mlp = nn::LayerNorm::create(reg, base + ".ln_m", d);
        b.mlp = nn::Mlp::create(reg, base + ".mlp", d, cfg.mlp_ratio, rng);
        blocks_.push_back(std::move(b));
    }
    head_blocks_.reserve(size_t(cfg.fd_head_blocks));
    for (int i = 0; i < cfg.fd_head_blocks; ++i) {
        std::string base = "fd.head" + std::to_string(i);
        HeadBlock h;
        h.ln1 = nn::LayerNorm::create(reg, base + ".ln1", d);
        h.attn = nn::MultiHeadAttention::create(reg, base + ".attn", d, cfg.heads, rng);
        h.ln2 = nn::LayerNorm::create(reg, base + ".ln2", d);
        h.mlp = nn::Mlp::create(reg, base + ".mlp", d, cfg.mlp_ratio, rng);
        head_blocks_.push_back(std::move(h));
    }
    final_ln_ = nn::LayerNorm::create(reg, "fd.final_ln", d);
    logits_ = nn::Linear::create(reg, "fd.logits", d, cfg.codebook_size, rng);
    // Zero head: predictions start exactly uniform, so the initial training
    // loss is the ln(K) baseline.
    std::fill(logits_.w.data().begin(), logits_.w.data().end(), 0.0f);
}

Tensor ForwardDynamics::predict_logits(const Tensor& grids, const Tensor& decompressed,
                                       int frames) const {
    int tpf = cfg_.tokens_per_frame();
    if (grids.rows() != frames * tpf)
        throw std::invalid_argument("forward dynamics: grid row count");
    if (decompressed.rows() != frames || decompressed.cols() != cfg_.dim)
        throw std::invalid_argument("forward dynamics: latent shape");

    // Additive conditioning: latent a_t joins every token of frame t.
    std::vector<int> expand(size_t(frames) * tpf);
    for (int f = 0; f < frames; ++f)
        for (int s = 0; s < tpf; ++s) expand[size_t(f) * tpf + s] = f;
    Tensor x = ops::add(grids, ops::gather_rows(decompressed, expand));

    auto to_loc = location_major_perm(frames, tpf);
    auto to_frame = frame_major_perm(frames, tpf);
    Tensor temporal_mask = nn::causal_mask(frames);

    for (const auto& b : blocks_) {
        Tensor xs = b.ln_spatial.forward(x);
        x = ops::add(x, b.attn_spatial.forward(xs, xs, frames, nullptr));
        Tensor xt = ops::gather_rows(b.ln_temporal.forward(x), to_loc);
        Tensor att = b.attn_temporal.forward(xt, xt, tpf, &temporal_mask);
        x = ops::add(x, ops::gather_rows(att, to_frame));
        x = ops::add(x, b.mlp.forward(b.ln_mlp.forward(x)));
    }
    for (const auto& h : head_blocks_) {
        Tensor xn = h.ln1.forward(x);
        x = ops::add(x, h.attn.forward(xn, xn, frames, nullptr));
        x = ops::add(x, h.mlp.forward(h.ln2.forward(x)));
    }
    return logits_.forward(final_ln_.forward(x));
}

} // namespace lapose
