#pragma once

#include "lapose/geometry.hpp"
#include "lapose/synthworld.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lapose {

// Stationarity threshold for scale-invariant metrics: clips whose ground-truth
// mean step translation is below this (meters) are filtered.
inline constexpr double kStationaryMeanStepMeters = 0.1;

struct PairwiseAuc {
    double auc = 0.0;      // percent in [0, 100]
    size_t valid_pairs = 0;
    size_t skipped_pairs = 0; // degenerate translation directions
};

// AUC@5: over all frame pairs i<j, the error is max(relative-rotation geodesic
// error, translation direction error) in degrees; each pair earns
// max(0, (5-e)/5) credit and the result is the mean credit in percent.
// Degenerate pairs are skipped and counted. Empty when every pair is
// degenerate (undefined metric).
std::optional<PairwiseAuc> auc5(const PoseSequence& pred, const PoseSequence& gt);

struct AteResult {
    bool filtered = false;          // near-stationary ground truth
    bool alignment_flagged = false; // rank-deficient alignment, identity used
    double rmse = 0.0;
};

// ATE-S: both trajectories scaled to unit mean step norm, rigid SE(3)
// alignment of pred onto gt, position RMSE in scale units. `gt` must be in
// meters for the stationarity filter to make sense.
AteResult ate_s(const Trajectory& pred, const Trajectory& gt);

// ATE-M: pred translations multiplied by the predicted metric scale, rigid
// alignment, RMSE in meters. No scale normalization, no stationarity filter.
AteResult ate_m(const PoseSequence& pred_normalized, double pred_scale, const Trajectory& gt);

struct CurvatureProfile {
    std::vector<double> kappa; // per step pair, signed, 1/m
    double median_abs = 0.0;
    int bin = 0; // 0 small (<0.01), 1 medium (0.01..0.1), 2 large (>0.1)
};

struct AccelerationProfile {
    std::vector<double> accel; // per step pair, signed, m/s^2
    double median_abs = 0.0;
    int bin = 0; // 0 small (<0.3), 1 medium (0.3..0.8), 2 large (>0.8)
};

// kappa_t = (psi_{t+1} - psi_t) / ds_t with the heading psi taken from step
// directions projected onto the ground (xz) plane; steps under 1e-6 m are
// skipped. Needs at least 3 positions.
CurvatureProfile curvature_profile(const Trajectory& traj);

AccelerationProfile acceleration_profile(const Trajectory& traj, double fps);

const char* curvature_bin_name(int bin);
const char* acceleration_bin_name(int bin);

// Multinomial logistic probe on frozen latent features; returns held-out
// accuracy. Throws when the training labels hold fewer than two classes.
double latent_probe_accuracy(const std::vector<std::vector<float>>& train_x,
                             const std::vector<int>& train_y,
                             const std::vector<std::vector<float>>& test_x,
                             const std::vector<int>& test_y, int n_classes,
                             int iterations = 400);

} // namespace lapose
