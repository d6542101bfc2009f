#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lapose/common.hpp"
#include "lapose/metrics.hpp"

#include "oracles.hpp"

#include <cmath>

using namespace lapose;

namespace {

constexpr double kPi = 3.14159265358979323846;

PoseSequence straight_steps(int n, double step_z, bool normalized = false) {
    PoseSequence seq;
    seq.fps = 2.0;
    seq.normalized = normalized;
    for (int i = 0; i < n; ++i) {
        RelativePose s;
        s.translation = {0, 0, step_z};
        seq.steps.push_back(s);
    }
    return seq;
}

PoseSequence random_steps(Rng& rng, int n, double rot_scale = 0.3, double t_scale = 1.0) {
    PoseSequence seq;
    seq.fps = 2.0;
    seq.normalized = true;
    for (int i = 0; i < n; ++i) {
        RelativePose s;
        s.translation = {rng.normal(0, t_scale), rng.normal(0, 0.2 * t_scale),
                         rng.normal(1.0, 0.3 * t_scale)};
        Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
        s.rotation = quat_canonicalize(Quat::from_axis_angle(axis, rng.normal(0, rot_scale)));
        seq.steps.push_back(s);
    }
    return seq;
}

// Discrete-chord trajectory with exact per-step curvature, like the generator.
Trajectory chord_arc(int frames, double ds, double kappa) {
    Trajectory traj;
    double psi = 0.0;
    Vec3 p{0, 0, 0};
    traj.positions.push_back(p);
    traj.orientations.push_back(Quat::identity());
    for (int k = 0; k + 1 < frames; ++k) {
        p = p + Vec3{-std::sin(psi), 0, std::cos(psi)} * ds;
        psi += kappa * ds;
        traj.positions.push_back(p);
        traj.orientations.push_back(Quat::from_axis_angle({0, -1, 0}, psi));
    }
    return traj;
}

} // namespace

TEST_CASE("auc5 equals 100 on perfect predictions") {
    Rng rng(1);
    PoseSequence gt = random_steps(rng, 8);
    auto r = auc5(gt, gt);
    REQUIRE(r.has_value());
    CHECK(r->auc == doctest::Approx(100.0));
    CHECK(r->skipped_pairs == 0);
}

TEST_CASE("auc5 analytic: constant pairwise error") {
    PoseSequence gt = straight_steps(15, 1.0, true);
    auto tilted = [&](double deg) {
        PoseSequence pred = gt;
        Quat rot = Quat::from_axis_angle({0, 1, 0}, deg * kPi / 180.0);
        for (auto& s : pred.steps) s.translation = rot.rotate(s.translation);
        return pred;
    };
    auto half = auc5(tilted(2.5), gt);
    REQUIRE(half.has_value());
    CHECK(std::abs(half->auc - 50.0) < 1e-9);

    auto zero = auc5(tilted(10.0), gt);
    REQUIRE(zero.has_value());
    CHECK(zero->auc == doctest::Approx(0.0));
}

TEST_CASE("auc5 skips degenerate pairs and reports undefined when all are") {
    PoseSequence gt = straight_steps(4, 1.0, true);
    gt.steps[1].translation = {0, 0, 0}; // one stationary step
    auto r = auc5(gt, gt);
    REQUIRE(r.has_value());
    CHECK(r->skipped_pairs == 1); // only the (1,2) pair collapses
    CHECK(r->valid_pairs == 9);

    PoseSequence zeros = straight_steps(3, 0.0, true);
    CHECK_FALSE(auc5(zeros, zeros).has_value());
}

TEST_CASE("auc5 invariant to a global rigid transform of the prediction") {
    Rng rng(2);
    PoseSequence gt = random_steps(rng, 7);
    PoseSequence pred = random_steps(rng, 7);
    auto base = auc5(pred, gt);
    REQUIRE(base.has_value());
    // A global rigid transform of a trajectory leaves every relative pose
    // unchanged, so rebuilding the sequence from the transformed trajectory
    // reproduces the same pairwise errors.
    Trajectory traj = compose_trajectory(pred);
    Quat g = quat_canonicalize({0.4, 0.3, -0.5, 0.2});
    Vec3 shift{3, -1, 2};
    Trajectory moved;
    for (size_t i = 0; i < traj.frame_count(); ++i) {
        moved.positions.push_back(g.rotate(traj.positions[i]) + shift);
        moved.orientations.push_back(quat_canonicalize(g * traj.orientations[i]));
    }
    PoseSequence rebuilt;
    rebuilt.normalized = true;
    for (size_t i = 0; i + 1 < moved.frame_count(); ++i)
        rebuilt.steps.push_back(relative_between(moved, i, i + 1));
    auto after = auc5(rebuilt, gt);
    REQUIRE(after.has_value());
    CHECK(after->auc == doctest::Approx(base->auc).epsilon(1e-9));
}

TEST_CASE("ate_s zero cases and stationary filter") {
    PoseSequence gt_seq = straight_steps(15, 1.0);
    Trajectory gt = compose_trajectory(gt_seq);
    AteResult same = ate_s(gt, gt);
    CHECK_FALSE(same.filtered);
    CHECK(same.rmse == doctest::Approx(0.0));

    // Rigidly transformed copy aligns back to zero.
    Quat g = quat_canonicalize({0.8, 0.1, 0.5, -0.2});
    Vec3 shift{5, 2, -3};
    Trajectory moved = gt;
    for (auto& p : moved.positions) p = g.rotate(p) + shift;
    AteResult aligned = ate_s(moved, gt);
    CHECK(aligned.rmse < 1e-8);

    // All steps 0.05 m: mean step below the 0.1 m threshold -> filtered.
    Trajectory tiny = compose_trajectory(straight_steps(15, 0.05));
    CHECK(ate_s(tiny, tiny).filtered);
}

TEST_CASE("ate_s invariant to uniform scaling of either trajectory") {
    Rng rng(3);
    PoseSequence a = random_steps(rng, 9, 0.2, 0.8);
    PoseSequence b = random_steps(rng, 9, 0.2, 0.8);
    a.normalized = b.normalized = false;
    for (auto& s : a.steps) s.translation = s.translation * 2.0; // keep above filter
    for (auto& s : b.steps) s.translation = s.translation * 2.0;
    Trajectory ta = compose_trajectory(a), tb = compose_trajectory(b);
    double base = ate_s(ta, tb).rmse;

    Trajectory ta4 = ta;
    for (auto& p : ta4.positions) p = p * 4.7;
    CHECK(ate_s(ta4, tb).rmse == doctest::Approx(base).epsilon(1e-9));
    Trajectory tb3 = tb;
    for (auto& p : tb3.positions) p = p * 3.1;
    CHECK(ate_s(ta, tb3).rmse == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("ate_m metric behavior on a straight path") {
    // gt: straight 15-step path, 1 m steps.
    PoseSequence gt_seq = straight_steps(15, 1.0);
    Trajectory gt = compose_trajectory(gt_seq);

    PoseSequence pred = straight_steps(15, 1.0, true); // normalized, s = 1
    AteResult perfect = ate_m(pred, 1.0, gt);
    CHECK(perfect.rmse == doctest::Approx(0.0).epsilon(1e-12));

    // Scale off by 2: pre-alignment error grows by (c-1) per step; the oracle
    // provides the aligned value.
    AteResult off = ate_m(pred, 2.0, gt);
    CHECK(off.rmse > 0.1);
    double oracle = lapose_oracle::ate_m_oracle(pred, 2.0, gt);
    CHECK(off.rmse == doctest::Approx(oracle).epsilon(1e-9));

    // Pre-alignment check of the (c-1) per-step growth.
    Trajectory scaled = compose_trajectory(pred, MetricScale{2.0});
    for (size_t k = 0; k < scaled.frame_count(); ++k)
        CHECK((scaled.positions[k] - gt.positions[k]).norm() ==
              doctest::Approx(double(k) * (2.0 - 1.0)).epsilon(1e-12));

    // Monotonicity: doubling the scale error strictly increases ATE-M.
    CHECK(ate_m(pred, 4.0, gt).rmse > off.rmse);
}

TEST_CASE("curvature_profile bins") {
    Trajectory straight = chord_arc(16, 2.0, 0.0);
    CurvatureProfile s = curvature_profile(straight);
    CHECK(s.median_abs == doctest::Approx(0.0));
    CHECK(s.bin == 0);

    CurvatureProfile large = curvature_profile(chord_arc(16, 2.0, 0.2)); // radius 5
    CHECK(large.median_abs == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(large.bin == 2);

    CurvatureProfile medium = curvature_profile(chord_arc(16, 2.0, 0.02)); // radius 50
    CHECK(medium.median_abs == doctest::Approx(0.02).epsilon(1e-9));
    CHECK(medium.bin == 1);
}

TEST_CASE("curvature_profile skips sub-micron steps") {
    Trajectory traj = chord_arc(8, 1.0, 0.1);
    // Insert a stationary frame by duplicating a position.
    traj.positions.insert(traj.positions.begin() + 3, traj.positions[3]);
    traj.orientations.insert(traj.orientations.begin() + 3, traj.orientations[3]);
    CurvatureProfile prof = curvature_profile(traj);
    for (double k : prof.kappa) CHECK(k == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("acceleration_profile bins") {
    double fps = 2.0;
    auto ramp = [&](double v0, double v1, int frames) {
        // Step k norm chosen so the measured speed ramps linearly v0 -> v1
        // over the 8-second clip: the per-step accel is (v1-v0)/8 everywhere.
        Trajectory traj;
        traj.positions.push_back({0, 0, 0});
        traj.orientations.push_back(Quat::identity());
        double a = (v1 - v0) / 8.0;
        for (int k = 0; k + 1 < frames; ++k) {
            double speed = v0 + a * double(k) / fps;
            traj.positions.push_back(traj.positions.back() + Vec3{0, 0, speed / fps});
            traj.orientations.push_back(Quat::identity());
        }
        return traj;
    };

    AccelerationProfile constant = acceleration_profile(chord_arc(16, 5.0, 0.0), fps);
    CHECK(constant.median_abs == doctest::Approx(0.0));
    CHECK(constant.bin == 0);

    AccelerationProfile medium = acceleration_profile(ramp(10, 14, 16), fps);
    CHECK(medium.median_abs == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(medium.bin == 1);

    AccelerationProfile large = acceleration_profile(ramp(10, 20, 16), fps);
    CHECK(large.median_abs == doctest::Approx(1.25).epsilon(1e-9));
    CHECK(large.bin == 2);
}

TEST_CASE("metric oracles agree with the implementation on random short clips") {
    Rng rng(7);
    for (int trial = 0; trial < 60; ++trial) {
        int steps = 2 + int(rng.below(4)); // T <= 6
        PoseSequence gt = random_steps(rng, steps);
        PoseSequence pred = random_steps(rng, steps);

        auto impl = auc5(pred, gt);
        auto oracle = lapose_oracle::auc5_oracle(pred, gt);
        if (impl.has_value()) {
            CHECK(std::abs(impl->auc - oracle.auc) < 1e-6);
            CHECK(impl->skipped_pairs == oracle.skipped);
            // Sweep integration of the cumulative curve is the same number.
            CHECK(std::abs(impl->auc -
                           lapose_oracle::auc5_from_cumulative_curve(oracle.pair_errors)) < 1e-6);
        }

        PoseSequence gt_m = gt;
        gt_m.normalized = false;
        for (auto& s : gt_m.steps) s.translation = s.translation * 3.0;
        PoseSequence pred_m = pred;
        Trajectory gt_traj = compose_trajectory(gt_m);
        AteResult s_impl = ate_s(compose_trajectory(pred_m), gt_traj);
        if (!s_impl.filtered && !s_impl.alignment_flagged) {
            double s_oracle = lapose_oracle::ate_s_oracle(pred_m, gt_m);
            CHECK(std::abs(s_impl.rmse - s_oracle) < 1e-6);
        }

        double scale = rng.uniform(0.5, 3.0);
        AteResult m_impl = ate_m(pred, scale, gt_traj);
        if (!m_impl.alignment_flagged) {
            double m_oracle = lapose_oracle::ate_m_oracle(pred, scale, gt_traj);
            CHECK(std::abs(m_impl.rmse - m_oracle) < 1e-6);
        }
    }
}

TEST_CASE("umeyama matches grid search within 1e-3") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Vec3> p, q;
        for (int i = 0; i < 6; ++i) {
            p.push_back({rng.normal(0, 2), rng.normal(0, 2), rng.normal(0, 2)});
            q.push_back({rng.normal(0, 2), rng.normal(0, 2), rng.normal(0, 2)});
        }
        auto fit = umeyama_se3(p, q);
        REQUIRE(fit.has_value());
        double sq = 0.0;
        for (size_t i = 0; i < p.size(); ++i)
            sq += (fit->transform.apply(p[i]) - q[i]).squared_norm();
        double impl_rmse = std::sqrt(sq / double(p.size()));
        double grid_rmse = lapose_oracle::grid_search_alignment_rmse(
            p, q, lapose_oracle::quat_to_mat3(fit->transform.rotation), 1e-3);
        // no grid candidate may beat the closed form beyond the resolution
        CHECK(grid_rmse <= impl_rmse + 1e-12);
        CHECK(std::abs(impl_rmse - grid_rmse) < 1e-3);
    }
}

TEST_CASE("latent probe: chance on shuffled labels, perfect on separated clusters") {
    Rng rng(11);
    int n = 400, d = 8, classes = 4;

    std::vector<std::vector<float>> x_train, x_test;
    std::vector<int> y_train, y_test;
    for (int i = 0; i < n; ++i) {
        int c = int(rng.below(classes));
        std::vector<float> f(size_t(d), 0.0f);
        for (auto& v : f) v = float(rng.normal(0, 1));
        f[size_t(c)] += 6.0f; // strong class signature
        if (i % 2 == 0) {
            x_train.push_back(f);
            y_train.push_back(c);
        } else {
            x_test.push_back(f);
            y_test.push_back(c);
        }
    }
    CHECK(latent_probe_accuracy(x_train, y_train, x_test, y_test, classes) ==
          doctest::Approx(1.0));

    // Labels independent of features: accuracy within 3 sigma of chance.
    std::vector<int> y_rand_train(y_train.size()), y_rand_test(y_test.size());
    for (auto& y : y_rand_train) y = int(rng.below(classes));
    for (auto& y : y_rand_test) y = int(rng.below(classes));
    double acc = latent_probe_accuracy(x_train, y_rand_train, x_test, y_rand_test, classes);
    double p = 1.0 / classes;
    double sigma = std::sqrt(p * (1 - p) / double(y_rand_test.size()));
    CHECK(std::abs(acc - p) < 3.0 * sigma + 0.05);

    std::vector<int> single(y_train.size(), 0);
    CHECK_THROWS_AS(latent_probe_accuracy(x_train, single, x_test, y_test, classes),
                    std::invalid_argument);
}
