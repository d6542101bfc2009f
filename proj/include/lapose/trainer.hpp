#pragma once

#include "lapose/codebook.hpp"
#include "lapose/model.hpp"
#include "lapose/synthworld.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace lapose {

// Stage + optimization settings. Every field is settable from flat key=value
// config text (see parse_train_config); model.* keys address the nested
// ModelConfig.
struct TrainConfig {
    std::string stage = "pretrain"; // pretrain | posttrain
    int steps = 20000;
    int batch_size = 16;
    double peak_lr = 1e-4;
    double end_lr = 4.5e-5;
    int warmup_steps = 1500;
    uint64_t seed = 0;
    bool freeze_backbone = true;
    int fps_min = 1;
    int fps_max = 4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double grad_clip = 1.0;
    int checkpoint_interval = 0; // 0 = final checkpoint only
    int log_interval = 50;
    int codebook_fit_patches = 50000;
    int max_train_clips = 0; // 0 = use the whole split
    int jobs = 2;
    PoseLossWeights loss_weights; // post-training per-term weights
    ModelConfig model;

    void validate() const;
    std::string to_text() const;
};

// Toy-scale defaults per stage: pretrain 20k steps / batch 16 with the cosine
// schedule ending at 4.5e-5; posttrain 5k steps / batch 32 decaying to zero.
TrainConfig default_train_config(const std::string& stage);

// Flat `key = value` lines, '#' comments. Unknown keys are an error.
TrainConfig parse_train_config(const std::string& text, const std::string& stage_hint = "");
void apply_config_overrides(TrainConfig& cfg, const std::vector<std::string>& key_values);

// Linear warmup 0 -> peak over warmup_steps, then cosine peak -> end_lr,
// hitting end_lr exactly at `steps`.
double lr_at(int step, const TrainConfig& cfg);

// Decoupled-weight-decay adaptive-moment optimizer with global grad-norm clip.
// Decay applies to weight matrices (names ending in ".w") only.
class AdamW {
public:
    AdamW(ParameterRegistry& params, const TrainConfig& cfg);

    void zero_grad();
    // Applies one update from the accumulated grads scaled by 1/grad_scale.
    void step(double lr, double grad_scale);

private:
    struct Slot {
        Tensor* param;
        bool decay;
        std::vector<float> m, v;
    };
    std::vector<Slot> slots_;
    double beta1_, beta2_, weight_decay_, grad_clip_;
    int64_t t_ = 0;
};

// Checkpoint file: magic "LAPC", version, JSON header (model config, training
// config snapshot, step, tensor manifest with byte offsets), raw f32 payload,
// trailing SHA-256 of everything before it.
struct LoadedCheckpoint {
    std::unique_ptr<LaposeModel> model;
    ModelConfig config;
    int step = 0;
    std::string train_config_text;
};

void save_checkpoint(const std::filesystem::path& path, const LaposeModel& model,
                     const std::string& train_config_text, int step);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Clip metadata for a dataset split; training re-renders clips at the sampled
// frame rate from their stored generation parameters.
struct ClipDataset {
    std::vector<ClipSpec> specs;
    std::filesystem::path root;
    std::string split;

    static ClipDataset load(const std::filesystem::path& data_dir, const std::string& split);
    size_t size() const { return specs.size(); }
};

// One training example: a clip rendered at a jittered frame rate.
struct TrainItem {
    int clip_index = 0;
    double fps = 0.0;
    std::vector<Image> frames;
    PoseSequence gt_metric;
    double fov = 0.0;
    MotionKind kind = MotionKind::Straight;
    std::vector<int> target_codes; // codes of frames 2..T, flattened
};

// Deterministic batch composition for one step: clip indices plus frame rates
// drawn uniformly from the integer set [fps_min, fps_max].
struct BatchPlan {
    int clip_index = 0;
    int fps = 1;
};
std::vector<BatchPlan> plan_batch(size_t dataset_size, const TrainConfig& cfg, uint64_t step);

// Renders (and encodes, when a codebook is given) the planned batch.
std::vector<TrainItem> sample_batch(const ClipDataset& dataset, const TrainConfig& cfg,
                                    uint64_t step, const Codebook* codebook);

// Collects patches from stored frames round-robin across clips and fits the
// codebook, or loads it when the file already exists.
Codebook fit_or_load_codebook(const ClipDataset& dataset, const TrainConfig& cfg,
                              const std::filesystem::path& path);

struct TrainResult {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::filesystem::path checkpoint_path;
    std::filesystem::path curve_path;
    std::filesystem::path codebook_path; // pretrain only
};

// Stage 1: next-frame code prediction (cross-entropy) over tokenizer + inverse
// dynamics + bottleneck + forward dynamics. Aborts with a diagnostic when the
// loss stays above 10x the initial value for 500 consecutive steps.
TrainResult run_pretrain(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                         const std::filesystem::path& out_dir);

// Stage 2: pose-head supervision on frozen or finetuned backbone. `pretrained`
// empty runs the random-init baseline. With a frozen backbone, latents are
// cached per (clip, fps).
TrainResult run_posttrain(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                          const std::filesystem::path& out_dir,
                          const std::filesystem::path& pretrained);

} // namespace lapose
