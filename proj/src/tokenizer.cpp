#include "lapose/model.hpp"

#include <stdexcept>

namespace lapose {

Tokenizer::Tokenizer(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng) : cfg_(cfg) {
    int d = cfg.dim;
    int patch_dim = cfg.patch_size * cfg.patch_size * 3;
    patch_proj_ = nn::Linear::create(reg, "tok.patch_proj", patch_dim, d, rng);
    spatial_pos_ = reg.create("tok.spatial_pos", cfg.tokens_per_frame(), d);
    init_gaussian(spatial_pos_, rng);
    temb_fc1_ = nn::Linear::create(reg, "tok.temb.fc1", d, d, rng);
    temb_fc2_ = nn::Linear::create(reg, "tok.temb.fc2", d, d, rng);
    blocks_.reserve(size_t(cfg.tok_layers));
    for (int i = 0; i < cfg.tok_layers; ++i) {
        std::string base = "tok.block" + std::to_string(i);
        Block b;
        b.ln1 = nn::LayerNorm::create(reg, base + ".ln1", d);
        b.attn = nn::MultiHeadAttention::create(reg, base + ".attn", d, cfg.heads, rng);
        b.ln2 = nn::LayerNorm::create(reg, base + ".ln2", d);
        b.mlp = nn::Mlp::create(reg, base + ".mlp", d, cfg.mlp_ratio, rng);
        blocks_.push_back(std::move(b));
    }
    final_ln_ = nn::LayerNorm::create(reg, "tok.final_ln", d);
}

Tensor Tokenizer::patchify(const Image& frame) const {
    if (frame.width != cfg_.img_width || frame.height != cfg_.img_height)
        throw std::invalid_argument("patchify: frame dims do not match the model config");
    auto patches = extract_patches(frame, cfg_.patch_size);
    int n = int(patches.size());
    int pd = int(patches[0].size());
    Tensor raw(n, pd, false);
    for (int r = 0; r < n; ++r)
        std::copy(patches[size_t(r)].begin(), patches[size_t(r)].end(),
                  raw.data().begin() + size_t(r) * pd);
    return patch_proj_.forward(raw);
}

Tensor Tokenizer::temporal_embed(double t_seconds) const {
    if (t_seconds < 0.0) throw std::invalid_argument("temporal_embed: negative timestamp");
    Tensor feat = Tensor::from_data(1, cfg_.dim, nn::sinusoidal_features(t_seconds, cfg_.dim));
    return temb_fc2_.forward(ops::gelu(temb_fc1_.forward(feat)));
}

TokenSequence Tokenizer::encode_sequence(const std::vector<Image>& frames, double fps) const {
    if (fps <= 0.0) throw std::invalid_argument("encode_sequence: fps must be positive");
    std::vector<double> timestamps(frames.size());
    for (size_t i = 0; i < frames.size(); ++i) timestamps[i] = double(i) / fps;
    return encode_frames_at(frames, timestamps, fps);
}

TokenSequence Tokenizer::encode_frames_at(const std::vector<Image>& frames,
                                          const std::vector<double>& timestamps,
                                          double fps) const {
    if (frames.empty() || frames.size() != timestamps.size())
        throw std::invalid_argument("encode_frames_at: frames/timestamps mismatch");
    int t = int(frames.size());

    std::vector<Tensor> embedded;
    embedded.reserve(size_t(t));
    for (int f = 0; f < t; ++f) {
        Tensor x = ops::add(patchify(frames[size_t(f)]), spatial_pos_);
        x = ops::add_row_broadcast(x, temporal_embed(timestamps[size_t(f)]));
        embedded.push_back(x);
    }
    Tensor x = ops::concat_rows(embedded);

    // Per-frame encoder: every block attends within a frame only.
    for (const auto& b : blocks_) {
        Tensor xn = b.ln1.forward(x);
        x = ops::add(x, b.attn.forward(xn, xn, t, nullptr));
        x = ops::add(x, b.mlp.forward(b.ln2.forward(x)));
    }
    x = final_ln_.forward(x);

    TokenSequence seq;
    seq.tokens = x;
    seq.frames = t;
    seq.tokens_per_frame = cfg_.tokens_per_frame();
    seq.fps = fps;
    seq.timestamps = timestamps;
    return seq;
}

} // namespace lapose
