#include "lapose/model.hpp"

#include <cmath>
#include <stdexcept>

namespace lapose {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

PoseHead::PoseHead(const ModelConfig& cfg, ParameterRegistry& reg, Rng& rng) : cfg_(cfg) {
    int d = cfg.dim;
    scale_token_ = reg.create("pose.scale_token", 1, d);
    init_gaussian(scale_token_, rng);
    pos_embed_ = reg.create("pose.pos_embed", cfg.frames - 1, d);
    init_gaussian(pos_embed_, rng);
    blocks_.reserve(size_t(cfg.pose_layers));
    for (int i = 0; i < cfg.pose_layers; ++i) {
        std::string base = "pose.block" + std::to_string(i);
        Block b;
        b.ln1 = nn::LayerNorm::create(reg, base + ".ln1", d);
        b.attn = nn::MultiHeadAttention::create(reg, base + ".attn", d, cfg.heads, rng);
        b.ln2 = nn::LayerNorm::create(reg, base + ".ln2", d);
        b.mlp = nn::Mlp::create(reg, base + ".mlp", d, cfg.mlp_ratio, rng);
        blocks_.push_back(std::move(b));
    }
    final_ln_ = nn::LayerNorm::create(reg, "pose.final_ln", d);
    step_fc1_ = nn::Linear::create(reg, "pose.step_head.fc1", d, d, rng);
    step_fc2_ = nn::Linear::create(reg, "pose.step_head.fc2", d, 8, rng);
    scale_fc1_ = nn::Linear::create(reg, "pose.scale_head.fc1", d, d, rng);
    scale_fc2_ = nn::Linear::create(reg, "pose.scale_head.fc2", d, 1, rng);
}

PoseHead::RawOutput PoseHead::forward(const Tensor& latents) const {
    int n = latents.rows();
    if (n != cfg_.frames - 1 || latents.cols() != cfg_.dim)
        throw std::invalid_argument("pose head: latent shape");

    Tensor x = ops::add(latents, pos_embed_);
    x = ops::concat_rows({x, scale_token_});
    // Non-causal: the scale token aggregates over the whole sequence.
    for (const auto& b : blocks_) {
        Tensor xn = b.ln1.forward(x);
        x = ops::add(x, b.attn.forward(xn, xn, 1, nullptr));
        x = ops::add(x, b.mlp.forward(b.ln2.forward(x)));
    }
    x = final_ln_.forward(x);

    RawOutput out;
    Tensor steps = ops::slice_rows(x, 0, n);
    out.step_raw = step_fc2_.forward(ops::gelu(step_fc1_.forward(steps)));
    Tensor scale = ops::slice_rows(x, n, 1);
    out.scale_raw = scale_fc2_.forward(ops::gelu(scale_fc1_.forward(scale)));
    return out;
}

PosePrediction decode_pose_raw(const std::vector<float>& step_raw, int n_steps, float scale_raw,
                               double fps) {
    if (int(step_raw.size()) != n_steps * 8)
        throw std::invalid_argument("decode_pose_raw: raw size mismatch");
    PosePrediction pred;
    pred.poses.fps = fps;
    pred.poses.normalized = true;
    pred.poses.steps.resize(size_t(n_steps));
    for (int i = 0; i < n_steps; ++i) {
        const float* r = step_raw.data() + size_t(i) * 8;
        RelativePose& s = pred.poses.steps[size_t(i)];
        s.translation = {double(r[0]), double(r[1]), double(r[2])};
        Quat q{double(r[3]), double(r[4]), double(r[5]), double(r[6])};
        s.rotation = q.norm() > 1e-12 ? quat_canonicalize(q) : Quat::identity();
        s.fov = kPi / (1.0 + std::exp(-double(r[7])));
    }
    pred.scale = std::exp(double(scale_raw));
    return pred;
}

double pose_loss_eval(const double* raw, int n_steps, const PoseSequence& gt_normalized,
                      double gt_scale, double gt_fov, double epsilon, double* grad,
                      PoseLossBreakdown* breakdown, const PoseLossWeights& weights) {
    if (int(gt_normalized.steps.size()) != n_steps)
        throw std::invalid_argument("pose_loss_eval: step count mismatch");
    int total_raw = n_steps * 8 + 1;
    if (grad) std::fill(grad, grad + total_raw, 0.0);

    double loss_t = 0.0, loss_q = 0.0, loss_f = 0.0;
    double inv_nt = weights.translation / double(3 * n_steps);
    double inv_nq = weights.rotation / double(4 * n_steps);
    double inv_nf = weights.fov / double(n_steps);

    for (int i = 0; i < n_steps; ++i) {
        const double* r = raw + size_t(i) * 8;
        double* g = grad ? grad + size_t(i) * 8 : nullptr;
        const RelativePose& gt = gt_normalized.steps[size_t(i)];

        const double gt_t[3] = {gt.translation.x, gt.translation.y, gt.translation.z};
        for (int c = 0; c < 3; ++c) {
            double d = r[c] - gt_t[c];
            loss_t += std::abs(d) * inv_nt;
            if (g) g[c] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv_nt;
        }

        // Quaternion: normalize the prediction, then pick the hemisphere that
        // minimizes the L1 distance to the canonical ground truth.
        const double v[4] = {r[3], r[4], r[5], r[6]};
        double nv = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
        const double gq[4] = {gt.rotation.w, gt.rotation.x, gt.rotation.y, gt.rotation.z};
        if (nv < 1e-20) {
            for (int c = 0; c < 4; ++c) loss_q += std::abs(gq[c]) * inv_nq;
        } else {
            double u[4];
            for (int c = 0; c < 4; ++c) u[c] = v[c] / nv;
            double lp = 0.0, lm = 0.0;
            for (int c = 0; c < 4; ++c) {
                lp += std::abs(u[c] - gq[c]);
                lm += std::abs(-u[c] - gq[c]);
            }
            double sign = lp <= lm ? 1.0 : -1.0;
            loss_q += std::min(lp, lm) * inv_nq;
            if (g) {
                double du[4];
                for (int c = 0; c < 4; ++c) {
                    double d = sign * u[c] - gq[c];
                    du[c] = sign * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv_nq;
                }
                // d(v/||v||)/dv = (I - u u^T) / ||v||
                double dot = du[0] * u[0] + du[1] * u[1] + du[2] * u[2] + du[3] * u[3];
                for (int c = 0; c < 4; ++c) g[3 + c] = (du[c] - dot * u[c]) / nv;
            }
        }

        double sig = 1.0 / (1.0 + std::exp(-r[7]));
        double fov = sig * kPi;
        double df = fov - gt_fov;
        loss_f += std::abs(df) * inv_nf;
        if (g) g[7] = (df > 0 ? 1.0 : (df < 0 ? -1.0 : 0.0)) * kPi * sig * (1.0 - sig) * inv_nf;
    }

    double raw_s = raw[size_t(n_steps) * 8];
    double s_hat = std::exp(raw_s);
    double target = std::log(std::max(gt_scale, epsilon));
    double ds = std::log(s_hat) - target;
    double loss_s = weights.scale * std::abs(ds);
    if (grad) {
        // through log(exp(raw)): d/draw = sign(ds) * (1/s_hat) * s_hat
        grad[size_t(n_steps) * 8] =
            weights.scale * (ds > 0 ? 1.0 : (ds < 0 ? -1.0 : 0.0)) * (1.0 / s_hat) * s_hat;
    }

    double total = loss_t + loss_q + loss_f + loss_s;
    if (breakdown) {
        breakdown->translation = loss_t;
        breakdown->rotation = loss_q;
        breakdown->fov = loss_f;
        breakdown->scale = loss_s;
        breakdown->total = total;
    }
    return total;
}

Tensor pose_supervision_loss(const PoseHead::RawOutput& raw, const PoseSequence& gt_normalized,
                             const MetricScale& gt_scale, double gt_fov,
                             PoseLossBreakdown* breakdown, double epsilon,
                             const PoseLossWeights& weights) {
    if (!gt_normalized.normalized)
        throw std::invalid_argument("pose_supervision_loss: ground truth must be normalized");
    int n = raw.step_raw.rows();
    if (raw.step_raw.cols() != 8 || raw.scale_raw.size() != 1)
        throw std::invalid_argument("pose_supervision_loss: raw output shape");

    std::vector<double> buf(size_t(n) * 8 + 1);
    for (size_t i = 0; i < size_t(n) * 8; ++i) buf[i] = double(raw.step_raw.data()[i]);
    buf.back() = double(raw.scale_raw.data()[0]);

    std::vector<double> grad(buf.size());
    double loss = pose_loss_eval(buf.data(), n, gt_normalized, gt_scale.s, gt_fov, epsilon,
                                 grad.data(), breakdown, weights);

    std::vector<float> g_steps(size_t(n) * 8);
    for (size_t i = 0; i < g_steps.size(); ++i) g_steps[i] = float(grad[i]);
    std::vector<float> g_scale{float(grad.back())};
    return ops::scalar_with_grads({raw.step_raw, raw.scale_raw}, float(loss),
                                  {std::move(g_steps), std::move(g_scale)});
}

} // namespace lapose
