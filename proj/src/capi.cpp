#include "lapose.h"

#include "lapose/eval.hpp"
#include "lapose/geometry.hpp"
#include "lapose/metrics.hpp"
#include "lapose/model.hpp"
#include "lapose/synthworld.hpp"
#include "lapose/trainer.hpp"

#include <cstring>
#include <sstream>
#include <string>

namespace {

thread_local std::string g_last_error;

lapose_status set_error(lapose_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

// Exceptions map onto the error-code surface here; std::invalid_argument and
// std::out_of_range are caller mistakes, everything else is a runtime failure.
template <typename Fn>
lapose_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        return set_error(LAPOSE_INVALID_ARGUMENT, e.what());
    } catch (const std::out_of_range& e) {
        return set_error(LAPOSE_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return set_error(LAPOSE_RUNTIME_ERROR, e.what());
    } catch (...) {
        return set_error(LAPOSE_RUNTIME_ERROR, "unknown error");
    }
}

lapose::PoseSequence steps_from_rows(const double* rows, size_t n, bool normalized) {
    lapose::PoseSequence seq;
    seq.normalized = normalized;
    seq.steps.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const double* r = rows + 7 * i;
        seq.steps[i].translation = {r[0], r[1], r[2]};
        seq.steps[i].rotation = lapose::quat_canonicalize({r[3], r[4], r[5], r[6]});
    }
    return seq;
}

lapose::Trajectory trajectory_from_rows(const double* xyz, size_t n) {
    lapose::Trajectory traj;
    traj.positions.resize(n);
    traj.orientations.assign(n, lapose::Quat::identity());
    for (size_t i = 0; i < n; ++i) traj.positions[i] = {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]};
    return traj;
}

} // namespace

struct lapose_model {
    std::unique_ptr<lapose::LaposeModel> impl;
};

extern "C" {

const char* lapose_version(void) { return "0.1.0"; }

const char* lapose_last_error(void) { return g_last_error.c_str(); }

lapose_status lapose_quat_canonicalize(double q[4]) {
    return guarded([&]() -> lapose_status {
        if (!q) throw std::invalid_argument("null quaternion");
        lapose::Quat c = lapose::quat_canonicalize({q[0], q[1], q[2], q[3]});
        q[0] = c.w;
        q[1] = c.x;
        q[2] = c.y;
        q[3] = c.z;
        return LAPOSE_OK;
    });
}

lapose_status lapose_quat_geodesic_deg(const double q1[4], const double q2[4], double* out_deg) {
    return guarded([&]() -> lapose_status {
        if (!q1 || !q2 || !out_deg) throw std::invalid_argument("null argument");
        *out_deg = lapose::quat_geodesic_deg({q1[0], q1[1], q1[2], q1[3]},
                                             {q2[0], q2[1], q2[2], q2[3]});
        return LAPOSE_OK;
    });
}

lapose_status lapose_translation_angle_deg(const double t1[3], const double t2[3],
                                           double* out_deg) {
    return guarded([&]() -> lapose_status {
        if (!t1 || !t2 || !out_deg) throw std::invalid_argument("null argument");
        auto angle = lapose::translation_angle_deg({t1[0], t1[1], t1[2]}, {t2[0], t2[1], t2[2]});
        if (!angle.has_value())
            return set_error(LAPOSE_DEGENERATE, "translation direction below 1e-3 norm");
        *out_deg = *angle;
        return LAPOSE_OK;
    });
}

lapose_status lapose_metric_scale(const double* translations, size_t n, double* out_scale) {
    return guarded([&]() -> lapose_status {
        if (!translations || !out_scale) throw std::invalid_argument("null argument");
        std::vector<lapose::Vec3> ts(n);
        for (size_t i = 0; i < n; ++i)
            ts[i] = {translations[3 * i], translations[3 * i + 1], translations[3 * i + 2]};
        *out_scale = lapose::compute_metric_scale(ts).s;
        return LAPOSE_OK;
    });
}

lapose_status lapose_umeyama_se3(const double* p_xyz, const double* q_xyz, size_t n,
                                 double out_q[4], double out_t[3]) {
    return guarded([&]() -> lapose_status {
        if (!p_xyz || !q_xyz || !out_q || !out_t) throw std::invalid_argument("null argument");
        std::vector<lapose::Vec3> p(n), q(n);
        for (size_t i = 0; i < n; ++i) {
            p[i] = {p_xyz[3 * i], p_xyz[3 * i + 1], p_xyz[3 * i + 2]};
            q[i] = {q_xyz[3 * i], q_xyz[3 * i + 1], q_xyz[3 * i + 2]};
        }
        auto fit = lapose::umeyama_se3(p, q);
        if (!fit.has_value())
            return set_error(LAPOSE_DEGENERATE, "alignment failed: rank-deficient points");
        out_q[0] = fit->transform.rotation.w;
        out_q[1] = fit->transform.rotation.x;
        out_q[2] = fit->transform.rotation.y;
        out_q[3] = fit->transform.rotation.z;
        out_t[0] = fit->transform.translation.x;
        out_t[1] = fit->transform.translation.y;
        out_t[2] = fit->transform.translation.z;
        return LAPOSE_OK;
    });
}

lapose_status lapose_auc5(const double* pred_steps, const double* gt_steps, size_t n_steps,
                          double* out_auc, size_t* out_skipped_pairs) {
    return guarded([&]() -> lapose_status {
        if (!pred_steps || !gt_steps || !out_auc) throw std::invalid_argument("null argument");
        auto pred = steps_from_rows(pred_steps, n_steps, true);
        auto gt = steps_from_rows(gt_steps, n_steps, true);
        auto result = lapose::auc5(pred, gt);
        if (!result.has_value())
            return set_error(LAPOSE_DEGENERATE, "auc5 undefined: all pairs degenerate");
        *out_auc = result->auc;
        if (out_skipped_pairs) *out_skipped_pairs = result->skipped_pairs;
        return LAPOSE_OK;
    });
}

lapose_status lapose_ate_s(const double* pred_xyz, const double* gt_xyz, size_t n,
                           double* out_rmse) {
    return guarded([&]() -> lapose_status {
        if (!pred_xyz || !gt_xyz || !out_rmse) throw std::invalid_argument("null argument");
        auto result = lapose::ate_s(trajectory_from_rows(pred_xyz, n),
                                    trajectory_from_rows(gt_xyz, n));
        if (result.filtered)
            return set_error(LAPOSE_DEGENERATE, "clip filtered: near-stationary ground truth");
        *out_rmse = result.rmse;
        return LAPOSE_OK;
    });
}

lapose_status lapose_ate_m(const double* pred_steps, size_t n_steps, double scale,
                           const double* gt_xyz, double* out_rmse) {
    return guarded([&]() -> lapose_status {
        if (!pred_steps || !gt_xyz || !out_rmse) throw std::invalid_argument("null argument");
        auto pred = steps_from_rows(pred_steps, n_steps, true);
        auto result = lapose::ate_m(pred, scale, trajectory_from_rows(gt_xyz, n_steps + 1));
        *out_rmse = result.rmse;
        return LAPOSE_OK;
    });
}

lapose_status lapose_generate_dataset(const lapose_generate_options* opts) {
    return guarded([&]() -> lapose_status {
        if (!opts || !opts->out_dir || !opts->split)
            throw std::invalid_argument("null generate options");
        lapose::DatasetOptions o;
        o.out_dir = opts->out_dir;
        o.split = opts->split;
        o.n_clips = int(opts->n_clips);
        o.seed = opts->seed;
        o.reverse_rate = opts->reverse_rate;
        o.jobs = opts->jobs > 0 ? opts->jobs : 1;
        if (opts->kinds_csv && *opts->kinds_csv) {
            std::stringstream ss(opts->kinds_csv);
            std::string kind;
            while (std::getline(ss, kind, ','))
                o.kinds.push_back(lapose::motion_kind_from_name(kind));
        }
        lapose::generate_dataset(o);
        return LAPOSE_OK;
    });
}

lapose_status lapose_pretrain(const char* config_text, const char* data_dir,
                              const char* out_dir) {
    return guarded([&]() -> lapose_status {
        if (!data_dir || !out_dir) throw std::invalid_argument("null directory");
        lapose::TrainConfig cfg =
            lapose::parse_train_config(config_text ? config_text : "", "pretrain");
        lapose::run_pretrain(cfg, data_dir, out_dir);
        return LAPOSE_OK;
    });
}

lapose_status lapose_posttrain(const char* config_text, const char* data_dir,
                               const char* out_dir, const char* pretrained_ckpt) {
    return guarded([&]() -> lapose_status {
        if (!data_dir || !out_dir) throw std::invalid_argument("null directory");
        lapose::TrainConfig cfg =
            lapose::parse_train_config(config_text ? config_text : "", "posttrain");
        std::filesystem::path pretrained =
            pretrained_ckpt ? std::filesystem::path(pretrained_ckpt) : std::filesystem::path();
        lapose::run_posttrain(cfg, data_dir, out_dir, pretrained);
        return LAPOSE_OK;
    });
}

lapose_status lapose_evaluate(const lapose_eval_options* opts, double* out_mean_auc5) {
    return guarded([&]() -> lapose_status {
        if (!opts || !opts->ckpt_path || !opts->data_dir || !opts->report_dir)
            throw std::invalid_argument("null eval options");
        auto loaded = lapose::load_checkpoint(opts->ckpt_path);
        auto dataset =
            lapose::ClipDataset::load(opts->data_dir, opts->split ? opts->split : "eval");

        lapose::EvalOptions eo;
        eo.buckets = opts->buckets != 0;
        eo.jobs = opts->jobs > 0 ? opts->jobs : 1;
        if (opts->plot_dir) eo.plot_dir = opts->plot_dir;
        if (opts->fps_sweep_csv && *opts->fps_sweep_csv) {
            std::stringstream ss(opts->fps_sweep_csv);
            std::string item;
            while (std::getline(ss, item, ',')) eo.fps_sweep.push_back(std::stod(item));
        }

        lapose::EvalReport report = lapose::evaluate_model(*loaded.model, dataset, eo);
        std::filesystem::create_directories(opts->report_dir);
        lapose::write_text_file(std::filesystem::path(opts->report_dir) / "report.json",
                                report.to_json());
        lapose::write_text_file(std::filesystem::path(opts->report_dir) / "report.csv",
                                report.to_csv());
        if (out_mean_auc5) *out_mean_auc5 = report.mean_auc5;
        return LAPOSE_OK;
    });
}

lapose_status lapose_probe(const char* ckpt_path, const char* data_dir, const char* plot_dir,
                           int jobs, double* out_accuracy) {
    return guarded([&]() -> lapose_status {
        if (!ckpt_path || !data_dir) throw std::invalid_argument("null argument");
        auto loaded = lapose::load_checkpoint(ckpt_path);
        auto train = lapose::ClipDataset::load(data_dir, "train");
        auto test = lapose::ClipDataset::load(data_dir, "eval");
        auto result = lapose::probe_latents(
            *loaded.model, train, test,
            plot_dir ? std::filesystem::path(plot_dir) : std::filesystem::path(),
            jobs > 0 ? jobs : 1);
        if (out_accuracy) *out_accuracy = result.accuracy;
        return LAPOSE_OK;
    });
}

lapose_status lapose_model_open(const char* ckpt_path, lapose_model** out_model) {
    return guarded([&]() -> lapose_status {
        if (!ckpt_path || !out_model) throw std::invalid_argument("null argument");
        auto loaded = lapose::load_checkpoint(ckpt_path);
        *out_model = new lapose_model{std::move(loaded.model)};
        return LAPOSE_OK;
    });
}

void lapose_model_close(lapose_model* model) { delete model; }

lapose_status lapose_model_frame_size(const lapose_model* model, uint32_t* out_width,
                                      uint32_t* out_height, uint32_t* out_frames) {
    return guarded([&]() -> lapose_status {
        if (!model) throw std::invalid_argument("null model");
        const auto& cfg = model->impl->config();
        if (out_width) *out_width = uint32_t(cfg.img_width);
        if (out_height) *out_height = uint32_t(cfg.img_height);
        if (out_frames) *out_frames = uint32_t(cfg.frames);
        return LAPOSE_OK;
    });
}

lapose_status lapose_model_predict(const lapose_model* model, const uint8_t* rgb,
                                   uint32_t frames, uint32_t width, uint32_t height, double fps,
                                   double* out_steps, double* out_scale) {
    return guarded([&]() -> lapose_status {
        if (!model || !rgb || !out_steps) throw std::invalid_argument("null argument");
        const auto& cfg = model->impl->config();
        if (int(frames) != cfg.frames || int(width) != cfg.img_width ||
            int(height) != cfg.img_height)
            throw std::invalid_argument("clip dims do not match the model config");

        std::vector<lapose::Image> images(frames);
        size_t stride = size_t(width) * height * 3;
        for (uint32_t f = 0; f < frames; ++f) {
            images[f] = lapose::Image(int(width), int(height));
            std::memcpy(images[f].rgb.data(), rgb + size_t(f) * stride, stride);
        }
        lapose::PosePrediction pred = model->impl->predict(images, fps);
        for (size_t i = 0; i < pred.poses.steps.size(); ++i) {
            const auto& s = pred.poses.steps[i];
            double* r = out_steps + 8 * i;
            r[0] = s.translation.x;
            r[1] = s.translation.y;
            r[2] = s.translation.z;
            r[3] = s.rotation.w;
            r[4] = s.rotation.x;
            r[5] = s.rotation.y;
            r[6] = s.rotation.z;
            r[7] = s.fov;
        }
        if (out_scale) *out_scale = pred.scale;
        return LAPOSE_OK;
    });
}

} // extern "C"
