#include "lapose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lapose {

namespace {

double mean_step_norm(const Trajectory& traj) {
    if (traj.frame_count() < 2) throw std::invalid_argument("trajectory: need >= 2 positions");
    double sum = 0.0;
    for (size_t i = 0; i + 1 < traj.frame_count(); ++i)
        sum += (traj.positions[i + 1] - traj.positions[i]).norm();
    return sum / double(traj.frame_count() - 1);
}

Trajectory scaled_positions(const Trajectory& traj, double factor) {
    Trajectory out = traj;
    for (auto& p : out.positions) p = p * factor;
    return out;
}

AteResult aligned_rmse(const Trajectory& pred, const Trajectory& gt) {
    AteResult result;
    RigidTransform transform; // identity fallback
    auto fit = umeyama_se3(pred.positions, gt.positions);
    if (fit.has_value()) {
        transform = fit->transform;
        result.alignment_flagged = fit->rotation_ambiguous;
    } else {
        result.alignment_flagged = true;
    }
    double sq = 0.0;
    for (size_t i = 0; i < gt.frame_count(); ++i)
        sq += (transform.apply(pred.positions[i]) - gt.positions[i]).squared_norm();
    result.rmse = std::sqrt(sq / double(gt.frame_count()));
    return result;
}

double median_abs(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    std::vector<double> a(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) a[i] = std::abs(xs[i]);
    std::sort(a.begin(), a.end());
    size_t n = a.size();
    return n % 2 == 1 ? a[n / 2] : 0.5 * (a[n / 2 - 1] + a[n / 2]);
}

} // namespace

std::optional<PairwiseAuc> auc5(const PoseSequence& pred, const PoseSequence& gt) {
    if (pred.steps.size() != gt.steps.size())
        throw std::invalid_argument("auc5: sequence length mismatch");
    if (pred.steps.empty()) throw std::invalid_argument("auc5: empty sequences");

    Trajectory tp = compose_trajectory(pred);
    Trajectory tg = compose_trajectory(gt);
    size_t t = tp.frame_count();

    PairwiseAuc out;
    double credit = 0.0;
    for (size_t i = 0; i < t; ++i) {
        for (size_t j = i + 1; j < t; ++j) {
            RelativePose rp = relative_between(tp, i, j);
            RelativePose rg = relative_between(tg, i, j);
            auto trans_err = translation_angle_deg(rp.translation, rg.translation);
            if (!trans_err.has_value()) {
                ++out.skipped_pairs;
                continue;
            }
            double rot_err = quat_geodesic_deg(rp.rotation, rg.rotation);
            double e = std::max(rot_err, *trans_err);
            credit += std::max(0.0, (5.0 - e) / 5.0);
            ++out.valid_pairs;
        }
    }
    if (out.valid_pairs == 0) return std::nullopt;
    out.auc = 100.0 * credit / double(out.valid_pairs);
    return out;
}

AteResult ate_s(const Trajectory& pred, const Trajectory& gt) {
    if (pred.frame_count() != gt.frame_count())
        throw std::invalid_argument("ate_s: trajectory length mismatch");
    double gt_step = mean_step_norm(gt);
    if (gt_step < kStationaryMeanStepMeters) {
        AteResult r;
        r.filtered = true;
        return r;
    }
    double pred_step = mean_step_norm(pred);
    Trajectory p = scaled_positions(pred, 1.0 / std::max(pred_step, 1e-12));
    Trajectory g = scaled_positions(gt, 1.0 / gt_step);
    return aligned_rmse(p, g);
}

AteResult ate_m(const PoseSequence& pred_normalized, double pred_scale, const Trajectory& gt) {
    if (!pred_normalized.normalized)
        throw std::invalid_argument("ate_m: prediction must be a normalized sequence");
    if (!(pred_scale > 0.0)) throw std::invalid_argument("ate_m: scale must be positive");
    Trajectory pred = compose_trajectory(pred_normalized, MetricScale{pred_scale});
    if (pred.frame_count() != gt.frame_count())
        throw std::invalid_argument("ate_m: trajectory length mismatch");
    return aligned_rmse(pred, gt);
}

CurvatureProfile curvature_profile(const Trajectory& traj) {
    if (traj.frame_count() < 3) throw std::invalid_argument("curvature_profile: need >= 3 positions");
    struct StepInfo {
        double psi;
        double ds;
    };
    std::vector<StepInfo> steps;
    for (size_t i = 0; i + 1 < traj.frame_count(); ++i) {
        Vec3 d = traj.positions[i + 1] - traj.positions[i];
        double planar = std::sqrt(d.x * d.x + d.z * d.z);
        if (planar < 1e-6) continue; // too short for a heading
        steps.push_back({std::atan2(-d.x, d.z), planar});
    }

    CurvatureProfile out;
    for (size_t i = 0; i + 1 < steps.size(); ++i) {
        double dpsi = steps[i + 1].psi - steps[i].psi;
        while (dpsi > 3.14159265358979323846) dpsi -= 2.0 * 3.14159265358979323846;
        while (dpsi < -3.14159265358979323846) dpsi += 2.0 * 3.14159265358979323846;
        out.kappa.push_back(dpsi / steps[i].ds);
    }
    out.median_abs = median_abs(out.kappa);
    out.bin = out.median_abs < 0.01 ? 0 : (out.median_abs <= 0.1 ? 1 : 2);
    return out;
}

AccelerationProfile acceleration_profile(const Trajectory& traj, double fps) {
    if (traj.frame_count() < 3)
        throw std::invalid_argument("acceleration_profile: need >= 3 positions");
    if (fps <= 0.0) throw std::invalid_argument("acceleration_profile: fps must be positive");
    std::vector<double> speeds;
    for (size_t i = 0; i + 1 < traj.frame_count(); ++i)
        speeds.push_back((traj.positions[i + 1] - traj.positions[i]).norm() * fps);

    AccelerationProfile out;
    for (size_t i = 0; i + 1 < speeds.size(); ++i)
        out.accel.push_back((speeds[i + 1] - speeds[i]) * fps);
    out.median_abs = median_abs(out.accel);
    out.bin = out.median_abs < 0.3 ? 0 : (out.median_abs <= 0.8 ? 1 : 2);
    return out;
}

const char* curvature_bin_name(int bin) {
    switch (bin) {
        case 0: return "small";
        case 1: return "medium";
        default: return "large";
    }
}

const char* acceleration_bin_name(int bin) { return curvature_bin_name(bin); }

double latent_probe_accuracy(const std::vector<std::vector<float>>& train_x,
                             const std::vector<int>& train_y,
                             const std::vector<std::vector<float>>& test_x,
                             const std::vector<int>& test_y, int n_classes, int iterations) {
    if (train_x.empty() || train_x.size() != train_y.size() || test_x.size() != test_y.size())
        throw std::invalid_argument("latent_probe: input size mismatch");
    {
        std::vector<int> seen;
        for (int y : train_y)
            if (std::find(seen.begin(), seen.end(), y) == seen.end()) seen.push_back(y);
        if (seen.size() < 2) throw std::invalid_argument("latent_probe: needs >= 2 classes");
    }

    size_t n = train_x.size();
    size_t d = train_x[0].size();

    // Standardize from train statistics.
    std::vector<double> mean(d, 0.0), inv_std(d, 0.0);
    for (const auto& x : train_x)
        for (size_t j = 0; j < d; ++j) mean[j] += x[j];
    for (auto& m : mean) m /= double(n);
    for (const auto& x : train_x)
        for (size_t j = 0; j < d; ++j) inv_std[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
    for (size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(inv_std[j] / double(n) + 1e-8);

    auto featurize = [&](const std::vector<float>& x, std::vector<double>& out) {
        for (size_t j = 0; j < d; ++j) out[j] = (double(x[j]) - mean[j]) * inv_std[j];
        out[d] = 1.0; // bias
    };

    size_t dd = d + 1;
    std::vector<double> w(size_t(n_classes) * dd, 0.0);
    std::vector<double> feat(dd, 0.0);
    std::vector<double> logits(size_t(n_classes), 0.0);
    std::vector<double> probs(size_t(n_classes), 0.0);
    std::vector<double> grad(w.size());
    double lr = 0.5;
    double l2 = 1e-4;

    for (int it = 0; it < iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (size_t i = 0; i < n; ++i) {
            featurize(train_x[i], feat);
            double mx = -1e300;
            for (int c = 0; c < n_classes; ++c) {
                double z = 0.0;
                for (size_t j = 0; j < dd; ++j) z += w[size_t(c) * dd + j] * feat[j];
                logits[size_t(c)] = z;
                mx = std::max(mx, z);
            }
            double sum = 0.0;
            for (int c = 0; c < n_classes; ++c) {
                probs[size_t(c)] = std::exp(logits[size_t(c)] - mx);
                sum += probs[size_t(c)];
            }
            for (int c = 0; c < n_classes; ++c) {
                double delta = probs[size_t(c)] / sum - (train_y[i] == c ? 1.0 : 0.0);
                for (size_t j = 0; j < dd; ++j) grad[size_t(c) * dd + j] += delta * feat[j];
            }
        }
        for (size_t k = 0; k < w.size(); ++k) w[k] -= lr * (grad[k] / double(n) + l2 * w[k]);
    }

    if (test_x.empty()) return 0.0;
    size_t correct = 0;
    for (size_t i = 0; i < test_x.size(); ++i) {
        featurize(test_x[i], feat);
        int best = 0;
        double best_z = -1e300;
        for (int c = 0; c < n_classes; ++c) {
            double z = 0.0;
            for (size_t j = 0; j < dd; ++j) z += w[size_t(c) * dd + j] * feat[j];
            if (z > best_z) {
                best_z = z;
                best = c;
            }
        }
        if (best == test_y[i]) ++correct;
    }
    return double(correct) / double(test_x.size());
}

} // namespace lapose
