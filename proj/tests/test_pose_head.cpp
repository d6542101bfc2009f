#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lapose/common.hpp"
#include "lapose/model.hpp"

#include <cmath>

using namespace lapose;

namespace {

constexpr double kPi = 3.14159265358979323846;

ModelConfig tiny_config() {
    ModelConfig c;
    c.dim = 32;
    c.heads = 4;
    c.tok_layers = 1;
    c.inv_blocks = 1;
    c.fd_blocks = 1;
    c.fd_head_blocks = 1;
    c.pose_layers = 2;
    c.latent_dim = 8;
    c.init_seed = 55;
    return c;
}

Tensor random_latents(Rng& rng, int rows, int cols) {
    Tensor t(rows, cols, false);
    for (auto& v : t.data()) v = float(rng.normal(0, 1));
    return t;
}

PoseSequence random_gt(Rng& rng, int steps, bool normalized = true) {
    PoseSequence seq;
    seq.fps = 2.0;
    seq.normalized = normalized;
    for (int i = 0; i < steps; ++i) {
        RelativePose s;
        s.translation = {rng.normal(0, 0.5), rng.normal(0, 0.1), rng.normal(1, 0.3)};
        Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
        s.rotation = quat_canonicalize(Quat::from_axis_angle(axis, rng.normal(0, 0.4)));
        s.fov = 1.0;
        seq.steps.push_back(s);
    }
    return seq;
}

} // namespace

TEST_CASE("raw output layout: (T-1) x 8 step values plus one scale") {
    LaposeModel model(tiny_config());
    NoGradGuard nograd;
    Rng rng(1);
    Tensor latents = random_latents(rng, 15, 32);
    PoseHead::RawOutput raw = model.pose_forward(latents);
    CHECK(raw.step_raw.rows() == 15);
    CHECK(raw.step_raw.cols() == 8);
    CHECK(raw.scale_raw.size() == 1);
    // 15*8 + 1 = 121 raw values for a 16-frame clip.
    CHECK(raw.step_raw.size() + raw.scale_raw.size() == 121);
}

TEST_CASE("exp activation: raw scale zero decodes to exactly 1.0 and stays positive") {
    PosePrediction zero = decode_pose_raw(std::vector<float>(15 * 8, 0.3f), 15, 0.0f, 2.0);
    CHECK(zero.scale == doctest::Approx(1.0));
    for (float raw : {-40.0f, -3.0f, 0.7f, 25.0f}) {
        PosePrediction p = decode_pose_raw(std::vector<float>(15 * 8, 0.1f), 15, raw, 2.0);
        CHECK(p.scale > 0.0);
    }
}

TEST_CASE("decoded poses are canonical, normalized, with fov in (0, pi)") {
    Rng rng(2);
    std::vector<float> raw(15 * 8, 0.0f);
    for (auto& v : raw) v = float(rng.normal(0, 2));
    PosePrediction p = decode_pose_raw(raw, 15, 0.5f, 2.0);
    CHECK(p.poses.normalized);
    for (const auto& s : p.poses.steps) {
        CHECK(std::abs(s.rotation.norm() - 1.0) < 1e-9);
        CHECK(s.rotation.w >= 0.0);
        CHECK(s.fov > 0.0);
        CHECK(s.fov < kPi);
    }
}

TEST_CASE("latent order sensitivity: temporal position embeddings are live") {
    LaposeModel model(tiny_config());
    NoGradGuard nograd;
    Rng rng(3);
    Tensor latents = random_latents(rng, 15, 32);
    Tensor shuffled(15, 32, false);
    for (int r = 0; r < 15; ++r)
        for (int c = 0; c < 32; ++c)
            shuffled.data()[size_t(r) * 32 + c] = latents.data()[size_t((r + 7) % 15) * 32 + c];

    PoseHead::RawOutput a = model.pose_forward(latents);
    PoseHead::RawOutput b = model.pose_forward(shuffled);
    bool differs = false;
    for (size_t i = 0; i < a.step_raw.size() && !differs; ++i)
        differs = a.step_raw.data()[i] != b.step_raw.data()[i];
    CHECK(differs);
}

TEST_CASE("loss is zero at the exact ground truth") {
    Rng rng(4);
    PoseSequence gt = random_gt(rng, 15);
    std::vector<double> raw(15 * 8 + 1);
    for (int i = 0; i < 15; ++i) {
        const auto& s = gt.steps[size_t(i)];
        raw[size_t(i) * 8 + 0] = s.translation.x;
        raw[size_t(i) * 8 + 1] = s.translation.y;
        raw[size_t(i) * 8 + 2] = s.translation.z;
        raw[size_t(i) * 8 + 3] = s.rotation.w;
        raw[size_t(i) * 8 + 4] = s.rotation.x;
        raw[size_t(i) * 8 + 5] = s.rotation.y;
        raw[size_t(i) * 8 + 6] = s.rotation.z;
        // invert the sigmoid*pi parameterization at the gt fov
        raw[size_t(i) * 8 + 7] = std::log(s.fov / (kPi - s.fov));
    }
    double gt_scale = 2.7;
    raw.back() = std::log(gt_scale);

    PoseLossBreakdown bd;
    double loss = pose_loss_eval(raw.data(), 15, gt, gt_scale, 1.0, 1.0, nullptr, &bd);
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(bd.translation == doctest::Approx(0.0));
    CHECK(bd.rotation == doctest::Approx(0.0));
    CHECK(bd.fov == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(bd.scale == doctest::Approx(0.0));
}

TEST_CASE("hemisphere alignment: predicting -q costs nothing") {
    Rng rng(5);
    PoseSequence gt = random_gt(rng, 4);
    std::vector<double> raw(4 * 8 + 1, 0.0);
    for (int i = 0; i < 4; ++i) {
        const auto& s = gt.steps[size_t(i)];
        raw[size_t(i) * 8 + 0] = s.translation.x;
        raw[size_t(i) * 8 + 1] = s.translation.y;
        raw[size_t(i) * 8 + 2] = s.translation.z;
        raw[size_t(i) * 8 + 3] = -s.rotation.w;
        raw[size_t(i) * 8 + 4] = -s.rotation.x;
        raw[size_t(i) * 8 + 5] = -s.rotation.y;
        raw[size_t(i) * 8 + 6] = -s.rotation.z;
        raw[size_t(i) * 8 + 7] = std::log(s.fov / (kPi - s.fov));
    }
    raw.back() = std::log(compute_metric_scale({{1, 0, 0}}).s + 0.0) * 0.0; // s_gt = 1 below
    PoseLossBreakdown bd;
    pose_loss_eval(raw.data(), 4, gt, 1.0, 1.0, 1.0, nullptr, &bd);
    CHECK(bd.rotation == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("scale term analytic value") {
    Rng rng(6);
    PoseSequence gt = random_gt(rng, 3);
    std::vector<double> raw(3 * 8 + 1, 0.1);
    raw.back() = std::log(2.0); // s_hat = 2
    PoseLossBreakdown bd;
    pose_loss_eval(raw.data(), 3, gt, 1.0, 1.0, 1.0, nullptr, &bd);
    CHECK(bd.scale == doctest::Approx(std::log(2.0)).epsilon(1e-12)); // |log 2 - log 1|

    // Near-stationary gt: epsilon keeps the log target finite.
    pose_loss_eval(raw.data(), 3, gt, 0.001, 1.0, 1.0, nullptr, &bd);
    CHECK(bd.scale == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences (100 configs)") {
    Rng rng(1234);
    int failures = 0;
    for (int config = 0; config < 100; ++config) {
        int steps = 2 + int(rng.below(6));
        PoseSequence gt = random_gt(rng, steps);
        double gt_scale = std::exp(rng.normal(0.5, 1.0));
        double gt_fov = rng.uniform(0.6, 2.2);

        int n = steps * 8 + 1;
        std::vector<double> raw(size_t(n), 0.0);
        std::vector<double> grad(size_t(n), 0.0);
        for (auto& v : raw) v = rng.normal(0, 1.2);

        pose_loss_eval(raw.data(), steps, gt, gt_scale, gt_fov, 1.0, grad.data(), nullptr);

        double h = 1e-4;
        for (int i = 0; i < n; ++i) {
            double orig = raw[size_t(i)];
            raw[size_t(i)] = orig + h;
            double fp = pose_loss_eval(raw.data(), steps, gt, gt_scale, gt_fov, 1.0, nullptr,
                                       nullptr);
            raw[size_t(i)] = orig - h;
            double fm = pose_loss_eval(raw.data(), steps, gt, gt_scale, gt_fov, 1.0, nullptr,
                                       nullptr);
            raw[size_t(i)] = orig;
            double fd = (fp - fm) / (2 * h);
            double an = grad[size_t(i)];
            double rel = std::abs(an - fd) / std::max({1e-6, std::abs(an), std::abs(fd)});
            if (rel >= 1e-4) {
                ++failures;
                MESSAGE("config ", config, " index ", i, " analytic ", an, " fd ", fd);
            }
        }
    }
    CHECK(failures == 0);
}

TEST_CASE("autodiff bridge matches the double-precision loss") {
    LaposeModel model(tiny_config());
    Rng rng(7);
    Tensor latents = random_latents(rng, 15, 32);
    PoseHead::RawOutput raw = model.pose_forward(latents);

    PoseSequence gt = random_gt(rng, 15);
    MetricScale scale{3.0};
    PoseLossBreakdown bd;
    Tensor loss = pose_supervision_loss(raw, gt, scale, 1.1, &bd);
    CHECK(double(loss.scalar()) == doctest::Approx(bd.total).epsilon(1e-6));
    loss.backward();
    CHECK(model.params().at("pose.step_head.fc2.w").grad().size() > 0);

    // Non-normalized ground truth is rejected.
    PoseSequence metric = gt;
    metric.normalized = false;
    CHECK_THROWS_AS(pose_supervision_loss(raw, metric, scale, 1.1), std::invalid_argument);
}

TEST_CASE("scale/direction disentanglement under dyadic scaling") {
    Rng rng(8);
    // Metric gt with s >= 1 before and after scaling by c = 2.
    PoseSequence metric;
    metric.fps = 2.0;
    for (int i = 0; i < 10; ++i) {
        RelativePose s;
        s.translation = {rng.normal(0, 0.5), rng.normal(0, 0.2), rng.normal(3.0, 0.5)};
        s.rotation = quat_canonicalize({1, rng.normal(0, 0.05), rng.normal(0, 0.05), 0});
        metric.steps.push_back(s);
    }
    PoseSequence doubled = metric;
    for (auto& s : doubled.steps) s.translation = s.translation * 2.0;

    auto [n1, s1] = normalize_translations(metric, 1.0);
    auto [n2, s2] = normalize_translations(doubled, 1.0);
    REQUIRE(s1.s >= 1.0);

    // Dyadic factor: normalized translation targets are bit-identical...
    for (size_t i = 0; i < n1.steps.size(); ++i) {
        CHECK(n1.steps[i].translation.x == n2.steps[i].translation.x);
        CHECK(n1.steps[i].translation.y == n2.steps[i].translation.y);
        CHECK(n1.steps[i].translation.z == n2.steps[i].translation.z);
    }
    // ...and the log-scale target moves by exactly log 2.
    CHECK(std::log(std::max(s2.s, 1.0)) - std::log(std::max(s1.s, 1.0)) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}
