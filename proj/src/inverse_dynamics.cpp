#include "lapose/model.hpp"

#include <stdexcept>

namespace lapose {

namespace {

// Frame-major row f*tpf+s -> location-major row s*T+f and back.
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

InverseDynamics::InverseDynamics(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng)
    : cfg_(cfg) {
    int d = cfg.dim;
    query_token_ = reg.create("inv.query_token", 1, d);
    init_gaussian(query_token_, rng);
    blocks_.reserve(size_t(cfg.inv_blocks));
    for (int i = 0; i < cfg.inv_blocks; ++i) {
        std::string base = "inv.block" + std::to_string(i);
        Block b;
        b.ln_spatial = nn::LayerNorm::create(reg, base + ".ln_s", d);
        b.attn_spatial = nn::MultiHeadAttention::create(reg, base + ".attn_s", d, cfg.heads, rng);
        b.ln_temporal = nn::LayerNorm::create(reg, base + ".ln_t", d);
        b.attn_temporal = nn::MultiHeadAttention::create(reg, base + ".attn_t", d, cfg.heads, rng);
        b.ln_frame_mlp = nn::LayerNorm::create(reg, base + ".ln_m", d);
        b.frame_mlp = nn::Mlp::create(reg, base + ".mlp", d, cfg.mlp_ratio, rng);
        b.ln_query = nn::LayerNorm::create(reg, base + ".ln_q", d);
        b.ln_memory = nn::LayerNorm::create(reg, base + ".ln_kv", d);
        b.attn_query = nn::MultiHeadAttention::create(reg, base + ".attn_q", d, cfg.heads, rng);
        b.ln_query_mlp = nn::LayerNorm::create(reg, base + ".ln_qm", d);
        b.query_mlp = nn::Mlp::create(reg, base + ".mlp_q", d, cfg.mlp_ratio, rng);
        blocks_.push_back(std::move(b));
    }
    final_ln_ = nn::LayerNorm::create(reg, "inv.final_ln", d);
}

InverseDynamics::Output InverseDynamics::forward(const TokenSequence& seq,
                                                 const Tensor& slot_embeds,
                                                 bool with_queries) const {
    int t = seq.frames;
    int tpf = seq.tokens_per_frame;
    if (t < 2) throw std::invalid_argument("inverse dynamics: need at least 2 frames");
    if (with_queries && (slot_embeds.rows() != t - 1 || slot_embeds.cols() != cfg_.dim))
        throw std::invalid_argument("inverse dynamics: slot embedding shape");

    auto to_loc = location_major_perm(t, tpf);
    auto to_frame = frame_major_perm(t, tpf);
    Tensor temporal_mask = nn::causal_mask(t);
    Tensor query_mask = nn::query_memory_mask(t, tpf);

    Tensor x = seq.tokens;
    Tensor q;
    if (with_queries) {
        // Shared query token broadcast to every slot plus its slot's temporal
        // embedding; slot i covers the transition into frame i+1.
        q = ops::add(ops::gather_rows(query_token_, std::vector<int>(size_t(t) - 1, 0)),
                     slot_embeds);
    }

    for (const auto& b : blocks_) {
        Tensor xs = b.ln_spatial.forward(x);
        x = ops::add(x, b.attn_spatial.forward(xs, xs, t, nullptr));

        Tensor xt = ops::gather_rows(b.ln_temporal.forward(x), to_loc);
        Tensor att = b.attn_temporal.forward(xt, xt, tpf, &temporal_mask);
        x = ops::add(x, ops::gather_rows(att, to_frame));

        x = ops::add(x, b.frame_mlp.forward(b.ln_frame_mlp.forward(x)));

        if (with_queries) {
            // Queries read the block's updated frame tokens and earlier
            // queries; frame tokens never see the query stream.
            Tensor mem = b.ln_memory.forward(ops::concat_rows({x, q}));
            q = ops::add(q, b.attn_query.forward(b.ln_query.forward(q), mem, 1, &query_mask));
            q = ops::add(q, b.query_mlp.forward(b.ln_query_mlp.forward(q)));
        }
    }

    Output out;
    out.frame_tokens = x;
    if (with_queries) out.latents = final_ln_.forward(q);
    return out;
}

Bottleneck::Bottleneck(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng) {
    int d = cfg.dim;
    int h = 2 * d;
    int k = cfg.latent_dim;
    c1_ = nn::Linear::create(reg, "bott.c1", d, h, rng);
    c2_ = nn::Linear::create(reg, "bott.c2", h, h, rng);
    c3_ = nn::Linear::create(reg, "bott.c3", h, k, rng);
    d1_ = nn::Linear::create(reg, "bott.d1", k, h, rng);
    d2_ = nn::Linear::create(reg, "bott.d2", h, h, rng);
    d3_ = nn::Linear::create(reg, "bott.d3", h, d, rng);
}

Tensor Bottleneck::compress(const Tensor& a) const {
    return c3_.forward(ops::relu(c2_.forward(ops::relu(c1_.forward(a)))));
}

Tensor Bottleneck::decompress(const Tensor& c) const {
    return d3_.forward(ops::relu(d2_.forward(ops::relu(d1_.forward(c)))));
}

} // namespace lapose
