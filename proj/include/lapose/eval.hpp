#pragma once

#include "lapose/metrics.hpp"
#include "lapose/model.hpp"
#include "lapose/trainer.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lapose {

struct ClipEvalRow {
    std::string clip_id;
    std::string motion_kind;
    double fps = 0.0;
    double auc5 = 0.0;
    size_t skipped_pairs = 0;
    bool filtered = false;            // excluded from the ATE-S aggregate
    std::string filter_reason;
    bool alignment_flagged = false;
    double ate_s = 0.0; // scale units, valid when !filtered
    double ate_m = 0.0; // meters
    int curvature_bin = 0;
    int accel_bin = 0;
};

struct BucketStat {
    size_t clips = 0;
    double mean_auc5 = 0.0;
};

struct EvalReport {
    int schema_version = 1;
    std::vector<ClipEvalRow> clips;
    double mean_auc5 = 0.0;
    double mean_ate_s = 0.0; // over unfiltered clips
    size_t ate_s_clips = 0;
    double mean_ate_m = 0.0;
    size_t filtered_clips = 0;
    size_t flagged_clips = 0;
    std::vector<size_t> auc5_histogram; // 10 bins of 10 percent
    std::map<std::string, BucketStat> curvature_buckets;
    std::map<std::string, BucketStat> accel_buckets;
    std::map<std::string, BucketStat> fps_table; // key: fps formatted

    std::string to_json() const;
    std::string to_csv() const;
};

struct EvalOptions {
    std::vector<double> fps_sweep; // e.g. {4, 2, 1.3, 1}; empty = stored fps only
    bool buckets = true;
    std::filesystem::path plot_dir; // empty = no plots
    int jobs = 2;
    int max_plots = 8;
};

// Runs the model over every clip of the split, computing AUC@5 / ATE-S / ATE-M
// against the exact ground truth, bucket statistics from the ground-truth
// metric trajectory, and (optionally) the fps-sweep table by re-rendering the
// same underlying paths at each rate. Throws on an empty dataset.
EvalReport evaluate_model(const LaposeModel& model, const ClipDataset& dataset,
                          const EvalOptions& opts);

struct ProbeResult {
    double accuracy = 0.0;
    int n_classes = 0;
    size_t train_clips = 0;
    size_t test_clips = 0;
};

// Linear probe from mean-pooled frozen latents to the motion label; fits on
// the train split, scores on the eval split. Optionally writes a 2-D PCA
// scatter of the held-out latents colored by label.
ProbeResult probe_latents(const LaposeModel& model, const ClipDataset& train,
                          const ClipDataset& test, const std::filesystem::path& plot_dir,
                          int jobs = 2);

} // namespace lapose
