#pragma once

#include "lapose/geometry.hpp"
#include "lapose/image.hpp"
#include "lapose/nn.hpp"
#include "lapose/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lapose {

// Architecture hyperparameters. Defaults are the toy-scale configuration; the
// per-run config file can shrink or grow any of them.
struct ModelConfig {
    int dim = 128;
    int heads = 4;
    int mlp_ratio = 4;
    int tok_layers = 4;
    int inv_blocks = 4;
    int fd_blocks = 4;
    int fd_head_blocks = 2;
    int pose_layers = 2;
    int latent_dim = 8;
    int patch_size = 8;
    int codebook_size = 256;
    int img_width = 64;
    int img_height = 32;
    int frames = 16;
    uint64_t init_seed = 42;

    int tokens_per_frame() const { return (img_width / patch_size) * (img_height / patch_size); }
    int code_grid_size() const { return tokens_per_frame(); }

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

// Per-frame token grids for a clip, flattened frame-major: row f*tpf + s is
// spatial slot s of frame f.
struct TokenSequence {
    Tensor tokens;
    int frames = 0;
    int tokens_per_frame = 0;
    double fps = 1.0;
    std::vector<double> timestamps;
};

// ---------------------------------------------------------------------------
// Image tokenizer: per-frame ViT encoder with learnable spatial position
// embeddings and an MLP over sinusoidal embeddings of the real-valued frame
// timestamp, so variable frame rates share one embedding space.
// ---------------------------------------------------------------------------
class Tokenizer {
public:
    Tokenizer() = default;
    Tokenizer(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng);

    // Flattened patches linearly projected to the model dim, no positional
    // information yet.
    Tensor patchify(const Image& frame) const;

    // [1, dim] embedding of a timestamp in seconds.
    Tensor temporal_embed(double t_seconds) const;

    TokenSequence encode_sequence(const std::vector<Image>& frames, double fps) const;
    TokenSequence encode_frames_at(const std::vector<Image>& frames,
                                   const std::vector<double>& timestamps, double fps) const;

private:
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::MultiHeadAttention attn;
        nn::Mlp mlp;
    };

    ModelConfig cfg_;
    nn::Linear patch_proj_;
    Tensor spatial_pos_;
    nn::Linear temb_fc1_, temb_fc2_;
    std::vector<Block> blocks_;
    nn::LayerNorm final_ln_;
};

// ---------------------------------------------------------------------------
// Inverse dynamics: ST-transformer over frame tokens with a broadcast learnable
// query per transition. Frame tokens interleave within-frame spatial attention
// and causal per-location temporal attention; query t cross-attends to frames
// 1..t+1 and to queries 1..t, and frame tokens never attend to queries.
// ---------------------------------------------------------------------------
struct LatentActions {
    Tensor uncompressed; // [T-1, dim]
    Tensor compressed;   // [T-1, latent_dim]
    Tensor decompressed; // [T-1, dim]
};

class InverseDynamics {
public:
    InverseDynamics() = default;
    InverseDynamics(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng);

    struct Output {
        Tensor latents;      // [T-1, dim], uncompressed
        Tensor frame_tokens; // [T*tpf, dim] after all frame sublayers
    };

    // `slot_embeds` is the temporal embedding of each query's slot, [T-1, dim].
    Output forward(const TokenSequence& seq, const Tensor& slot_embeds,
                   bool with_queries = true) const;

private:
    struct Block {
        nn::LayerNorm ln_spatial, ln_temporal, ln_frame_mlp;
        nn::MultiHeadAttention attn_spatial, attn_temporal;
        nn::Mlp frame_mlp;
        nn::LayerNorm ln_query, ln_memory, ln_query_mlp;
        nn::MultiHeadAttention attn_query;
        nn::Mlp query_mlp;
    };

    ModelConfig cfg_;
    Tensor query_token_;
    std::vector<Block> blocks_;
    nn::LayerNorm final_ln_;
};

// Three-layer MLPs compressing the latent action to `latent_dim` and back.
// ReLU keeps an exact identity construction available when latent_dim == dim.
class Bottleneck {
public:
    Bottleneck() = default;
    Bottleneck(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng);

    Tensor compress(const Tensor& a) const;
    Tensor decompress(const Tensor& c) const;

private:
    nn::Linear c1_, c2_, c3_;
    nn::Linear d1_, d2_, d3_;
};

// ---------------------------------------------------------------------------
// Forward dynamics: causal ST-transformer over frames 1..T-1 with the
// decompressed latent action added to every token of its frame, followed by
// lightweight per-frame head blocks and a linear projection to codebook
// logits. Row f*tpf+s of the output holds the logits for code slot s of frame
// f+1.
// ---------------------------------------------------------------------------
class ForwardDynamics {
public:
    ForwardDynamics() = default;
    ForwardDynamics(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng);

    Tensor predict_logits(const Tensor& grids, const Tensor& decompressed, int frames) const;

private:
    struct StBlock {
        nn::LayerNorm ln_spatial, ln_temporal, ln_mlp;
        nn::MultiHeadAttention attn_spatial, attn_temporal;
        nn::Mlp mlp;
    };
    struct HeadBlock {
        nn::LayerNorm ln1, ln2;
        nn::MultiHeadAttention attn;
        nn::Mlp mlp;
    };

    ModelConfig cfg_;
    std::vector<StBlock> blocks_;
    std::vector<HeadBlock> head_blocks_;
    nn::LayerNorm final_ln_;
    nn::Linear logits_;
};

// ---------------------------------------------------------------------------
// Pose estimation head: non-causal transformer over the T-1 uncompressed
// latents plus one learnable metric-scale token. Separate MLP heads emit 8 raw
// values per step (translation 3, quaternion 4, fov 1) and one raw scale that
// is exponentiated downstream.
// ---------------------------------------------------------------------------
class PoseHead {
public:
    PoseHead() = default;
    PoseHead(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng);

    struct RawOutput {
        Tensor step_raw;  // [T-1, 8]
        Tensor scale_raw; // [1, 1]
    };

    RawOutput forward(const Tensor& latents) const;

private:
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::MultiHeadAttention attn;
        nn::Mlp mlp;
    };

    ModelConfig cfg_;
    Tensor scale_token_;
    Tensor pos_embed_;
    std::vector<Block> blocks_;
    nn::LayerNorm final_ln_;
    nn::Linear step_fc1_, step_fc2_;
    nn::Linear scale_fc1_, scale_fc2_;
};

// Decoded feed-forward prediction for one clip.
struct PosePrediction {
    PoseSequence poses; // normalized translations, canonical rotations, per-step fov
    double scale = 1.0; // exp-activated metric scale, always > 0
};

PosePrediction decode_pose_raw(const std::vector<float>& step_raw, int n_steps,
                               float scale_raw, double fps);

struct PoseLossBreakdown {
    double translation = 0.0;
    double rotation = 0.0;
    double fov = 0.0;
    double scale = 0.0;
    double total = 0.0;
};

// Per-term weights; the defaults follow the equal-weight L1 objective.
struct PoseLossWeights {
    double translation = 1.0;
    double rotation = 1.0;
    double fov = 1.0;
    double scale = 1.0;
};

// Double-precision post-training loss over raw head outputs:
//   L1(t~) + L1(hemisphere-aligned normalized quaternion) + L1(sigmoid fov)
//   + |log s_hat - log max(s_gt, eps)|,  all weights 1.
// `raw` is the row-major [n_steps, 8] block followed by the raw scale.
// `grad` (same layout, may be null) receives the analytic gradient.
double pose_loss_eval(const double* raw, int n_steps, const PoseSequence& gt_normalized,
                      double gt_scale, double gt_fov, double epsilon, double* grad,
                      PoseLossBreakdown* breakdown,
                      const PoseLossWeights& weights = PoseLossWeights{});

// Autodiff bridge over pose_loss_eval. Rejects non-normalized ground truth.
Tensor pose_supervision_loss(const PoseHead::RawOutput& raw, const PoseSequence& gt_normalized,
                             const MetricScale& gt_scale, double gt_fov,
                             PoseLossBreakdown* breakdown = nullptr, double epsilon = 1.0,
                             const PoseLossWeights& weights = PoseLossWeights{});

// ---------------------------------------------------------------------------
// Full model: tokenizer + inverse dynamics + bottleneck + forward dynamics +
// pose head over one parameter registry.
// ---------------------------------------------------------------------------
class LaposeModel {
public:
    explicit LaposeModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ParameterRegistry& params() { return params_; }
    const ParameterRegistry& params() const { return params_; }

    TokenSequence encode(const std::vector<Image>& frames, double fps) const;
    InverseDynamics::Output infer(const TokenSequence& seq, bool with_queries = true) const;
    LatentActions latent_actions(const TokenSequence& seq) const;

    // Cross-entropy training objective for one clip: predict the codebook
    // indices of frames 2..T from frames 1..T-1 and the latent actions.
    Tensor pretrain_logits(const TokenSequence& seq, const LatentActions& acts) const;

    PoseHead::RawOutput pose_forward(const Tensor& latents) const;

    // Feed-forward pose prediction (no gradients).
    PosePrediction predict(const std::vector<Image>& frames, double fps) const;

    // Uncompressed latents with no graph attached (for frozen-backbone reuse).
    Tensor detached_latents(const std::vector<Image>& frames, double fps) const;

    // Pose-head parameters carry the "pose." prefix; everything else is the
    // backbone for the freeze/finetune switch.
    void set_backbone_trainable(bool trainable);
    std::string backbone_hash() const;

    const Tokenizer& tokenizer() const { return tokenizer_; }
    const Bottleneck& bottleneck() const { return bottleneck_; }

private:
    ModelConfig cfg_;
    ParameterRegistry params_;
    Tokenizer tokenizer_;
    InverseDynamics inverse_;
    Bottleneck bottleneck_;
    ForwardDynamics forward_;
    PoseHead pose_head_;
};

} // namespace lapose
