#include "lapose/model.hpp"

#include "lapose/common.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

namespace lapose {

std::string ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["dim"] = dim;
    j["heads"] = heads;
    j["mlp_ratio"] = mlp_ratio;
    j["tok_layers"] = tok_layers;
    j["inv_blocks"] = inv_blocks;
    j["fd_blocks"] = fd_blocks;
    j["fd_head_blocks"] = fd_head_blocks;
    j["pose_layers"] = pose_layers;
    j["latent_dim"] = latent_dim;
    j["patch_size"] = patch_size;
    j["codebook_size"] = codebook_size;
    j["img_width"] = img_width;
    j["img_height"] = img_height;
    j["frames"] = frames;
    j["init_seed"] = init_seed;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.dim = j.at("dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.tok_layers = j.at("tok_layers").get<int>();
    c.inv_blocks = j.at("inv_blocks").get<int>();
    c.fd_blocks = j.at("fd_blocks").get<int>();
    c.fd_head_blocks = j.at("fd_head_blocks").get<int>();
    c.pose_layers = j.at("pose_layers").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.codebook_size = j.at("codebook_size").get<int>();
    c.img_width = j.at("img_width").get<int>();
    c.img_height = j.at("img_height").get<int>();
    c.frames = j.at("frames").get<int>();
    c.init_seed = j.at("init_seed").get<uint64_t>();
    return c;
}

LaposeModel::LaposeModel(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.dim % cfg.heads != 0)
        throw std::invalid_argument("model: dim must be divisible by heads");
    if (cfg.img_width % cfg.patch_size != 0 || cfg.img_height % cfg.patch_size != 0)
        throw std::invalid_argument("model: image dims must be divisible by the patch size");
    Rng rng(cfg.init_seed);
    tokenizer_ = Tokenizer(cfg, params_, rng);
    inverse_ = InverseDynamics(cfg, params_, rng);
    bottleneck_ = Bottleneck(cfg, params_, rng);
    forward_ = ForwardDynamics(cfg, params_, rng);
    pose_head_ = PoseHead(cfg, params_, rng);
}

TokenSequence LaposeModel::encode(const std::vector<Image>& frames, double fps) const {
    if (int(frames.size()) != cfg_.frames)
        throw std::invalid_argument("model: clip frame count does not match config");
    return tokenizer_.encode_sequence(frames, fps);
}

InverseDynamics::Output LaposeModel::infer(const TokenSequence& seq, bool with_queries) const {
    Tensor slots;
    if (with_queries) {
        std::vector<Tensor> embeds;
        embeds.reserve(size_t(seq.frames) - 1);
        // Slot i carries the timestamp of the transition's arriving frame i+1.
        for (int i = 0; i + 1 < seq.frames; ++i)
            embeds.push_back(tokenizer_.temporal_embed(seq.timestamps[size_t(i) + 1]));
        slots = ops::concat_rows(embeds);
    }
    return inverse_.forward(seq, slots, with_queries);
}

LatentActions LaposeModel::latent_actions(const TokenSequence& seq) const {
    LatentActions acts;
    acts.uncompressed = infer(seq).latents;
    acts.compressed = bottleneck_.compress(acts.uncompressed);
    acts.decompressed = bottleneck_.decompress(acts.compressed);
    return acts;
}

Tensor LaposeModel::pretrain_logits(const TokenSequence& seq, const LatentActions& acts) const {
    int tpf = seq.tokens_per_frame;
    Tensor past = ops::slice_rows(seq.tokens, 0, (seq.frames - 1) * tpf);
    return forward_.predict_logits(past, acts.decompressed, seq.frames - 1);
}

PoseHead::RawOutput LaposeModel::pose_forward(const Tensor& latents) const {
    return pose_head_.forward(latents);
}

PosePrediction LaposeModel::predict(const std::vector<Image>& frames, double fps) const {
    NoGradGuard nograd;
    TokenSequence seq = encode(frames, fps);
    Tensor latents = infer(seq).latents;
    PoseHead::RawOutput raw = pose_head_.forward(latents);
    return decode_pose_raw(raw.step_raw.data(), raw.step_raw.rows(), raw.scale_raw.data()[0],
                           fps);
}

Tensor LaposeModel::detached_latents(const std::vector<Image>& frames, double fps) const {
    NoGradGuard nograd;
    TokenSequence seq = encode(frames, fps);
    Tensor latents = infer(seq).latents;
    return Tensor::from_data(latents.rows(), latents.cols(), latents.data());
}

void LaposeModel::set_backbone_trainable(bool trainable) {
    for (const auto& name : params_.names()) {
        if (name.rfind("pose.", 0) == 0) continue;
        params_.at(name).set_requires_grad(trainable);
    }
}

std::string LaposeModel::backbone_hash() const {
    std::vector<uint8_t> bytes;
    for (const auto& name : params_.names()) {
        if (name.rfind("pose.", 0) == 0) continue;
        const auto& t = params_.at(name);
        bytes.insert(bytes.end(), name.begin(), name.end());
        const uint8_t* p = reinterpret_cast<const uint8_t*>(t.data().data());
        bytes.insert(bytes.end(), p, p + t.data().size() * sizeof(float));
    }
    return hex_string(sha256(bytes.data(), bytes.size()));
}

} // namespace lapose
