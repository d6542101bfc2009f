#include "lapose/eval.hpp"

#include "lapose/common.hpp"
#include "lapose/plots.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace lapose {

namespace {

std::string fps_key(double fps) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%g", fps);
    return buf;
}

struct SweepCell {
    double sum = 0.0;
    size_t count = 0;
};

} // namespace

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["schema_version"] = schema_version;
    j["clip_count"] = clips.size();
    j["mean_auc5"] = mean_auc5;
    j["mean_ate_s"] = mean_ate_s;
    j["ate_s_clips"] = ate_s_clips;
    j["mean_ate_m"] = mean_ate_m;
    j["filtered_clips"] = filtered_clips;
    j["alignment_flagged_clips"] = flagged_clips;
    j["auc5_histogram"] = auc5_histogram;

    auto bucket_json = [](const std::map<std::string, BucketStat>& buckets) {
        nlohmann::ordered_json out;
        for (const auto& [name, stat] : buckets) {
            nlohmann::ordered_json b;
            b["clips"] = stat.clips;
            b["mean_auc5"] = stat.mean_auc5;
            out[name] = b;
        }
        return out;
    };
    j["curvature_buckets"] = bucket_json(curvature_buckets);
    j["accel_buckets"] = bucket_json(accel_buckets);
    j["fps_table"] = bucket_json(fps_table);

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& c : clips) {
        nlohmann::ordered_json r;
        r["clip_id"] = c.clip_id;
        r["motion_kind"] = c.motion_kind;
        r["fps"] = c.fps;
        r["auc5"] = c.auc5;
        r["skipped_pairs"] = c.skipped_pairs;
        r["filtered"] = c.filtered;
        r["filter_reason"] = c.filter_reason;
        r["alignment_flagged"] = c.alignment_flagged;
        r["ate_s"] = c.ate_s;
        r["ate_m"] = c.ate_m;
        r["curvature_bin"] = curvature_bin_name(c.curvature_bin);
        r["accel_bin"] = acceleration_bin_name(c.accel_bin);
        rows.push_back(r);
    }
    j["clips"] = rows;
    return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "clip_id,motion_kind,fps,auc5,skipped_pairs,filtered,filter_reason,"
           "alignment_flagged,ate_s,ate_m,curvature_bin,accel_bin\n";
    char line[512];
    for (const auto& c : clips) {
        std::snprintf(line, sizeof(line), "%s,%s,%g,%.8g,%zu,%d,%s,%d,%.8g,%.8g,%s,%s\n",
                      c.clip_id.c_str(), c.motion_kind.c_str(), c.fps, c.auc5, c.skipped_pairs,
                      c.filtered ? 1 : 0, c.filter_reason.c_str(), c.alignment_flagged ? 1 : 0,
                      c.ate_s, c.ate_m, curvature_bin_name(c.curvature_bin),
                      acceleration_bin_name(c.accel_bin));
        out << line;
    }
    return out.str();
}

EvalReport evaluate_model(const LaposeModel& model, const ClipDataset& dataset,
                          const EvalOptions& opts) {
    if (dataset.size() == 0) throw std::invalid_argument("evaluate_model: empty dataset");
    const ModelConfig& mc = model.config();

    EvalReport report;
    report.clips.resize(dataset.size());
    report.auc5_histogram.assign(10, 0);

    std::vector<std::map<std::string, SweepCell>> sweep_cells(dataset.size());
    std::mutex plot_mu;
    if (!opts.plot_dir.empty()) std::filesystem::create_directories(opts.plot_dir);

    parallel_for(int(dataset.size()), opts.jobs, [&](int i) {
        const ClipSpec& spec = dataset.specs[size_t(i)];
        Clip clip = make_clip(spec, 0.0, mc.img_width, mc.img_height);
        PosePrediction pred = model.predict(clip.frames, clip.gt_poses.fps);

        ClipEvalRow row;
        row.clip_id = spec.clip_id;
        row.motion_kind = motion_kind_name(spec.motion.kind);
        row.fps = clip.gt_poses.fps;

        auto [gt_norm, gt_scale] = normalize_translations(clip.gt_poses, 1.0);
        auto auc = auc5(pred.poses, gt_norm);
        if (auc.has_value()) {
            row.auc5 = auc->auc;
            row.skipped_pairs = auc->skipped_pairs;
        } else {
            row.filtered = true;
            row.filter_reason = "all-pairs-degenerate";
        }

        Trajectory pred_traj = compose_trajectory(pred.poses);
        AteResult s = ate_s(pred_traj, clip.gt_trajectory);
        if (s.filtered) {
            row.filtered = true;
            if (!row.filter_reason.empty()) row.filter_reason += ";";
            row.filter_reason += "near-stationary";
        } else {
            row.ate_s = s.rmse;
        }
        AteResult m = ate_m(pred.poses, pred.scale, clip.gt_trajectory);
        row.alignment_flagged = s.alignment_flagged || m.alignment_flagged;
        row.ate_m = m.rmse;

        if (opts.buckets) {
            row.curvature_bin = curvature_profile(clip.gt_trajectory).bin;
            row.accel_bin = acceleration_profile(clip.gt_trajectory, clip.gt_poses.fps).bin;
        }

        for (double fps : opts.fps_sweep) {
            Clip swept = make_clip(spec, fps, mc.img_width, mc.img_height);
            PosePrediction p = model.predict(swept.frames, fps);
            auto [g_norm, g_scale] = normalize_translations(swept.gt_poses, 1.0);
            auto a = auc5(p.poses, g_norm);
            if (a.has_value()) sweep_cells[size_t(i)][fps_key(fps)] = {a->auc, 1};
        }

        if (!opts.plot_dir.empty() && i < opts.max_plots) {
            // Metric-scale overlay: predicted trajectory aligned onto the gt.
            Trajectory pred_m = compose_trajectory(pred.poses, MetricScale{pred.scale});
            auto fit = umeyama_se3(pred_m.positions, clip.gt_trajectory.positions);
            if (fit.has_value()) {
                for (auto& p : pred_m.positions) p = fit->transform.apply(p);
                for (auto& q : pred_m.orientations)
                    q = quat_canonicalize(fit->transform.rotation * q);
            }
            std::lock_guard<std::mutex> lock(plot_mu);
            write_trajectory_svg(opts.plot_dir / (spec.clip_id + "_traj.svg"), clip.gt_trajectory,
                                 pred_m, {0, 5, 10, 15},
                                 spec.clip_id + " (" + row.motion_kind + ") xz");
        }
        report.clips[size_t(i)] = std::move(row);
    });

    // Aggregation is a plain reduction over the per-clip rows.
    double auc_sum = 0.0;
    size_t auc_count = 0;
    double ate_s_sum = 0.0, ate_m_sum = 0.0;
    std::map<std::string, SweepCell> curvature, accel, fps_cells;
    std::vector<double> auc_values;
    for (size_t i = 0; i < report.clips.size(); ++i) {
        const ClipEvalRow& row = report.clips[i];
        bool auc_defined = row.filter_reason.find("all-pairs-degenerate") == std::string::npos;
        if (auc_defined) {
            auc_sum += row.auc5;
            ++auc_count;
            auc_values.push_back(row.auc5);
            int b = std::clamp(int(row.auc5 / 10.0), 0, 9);
            report.auc5_histogram[size_t(b)]++;
            if (opts.buckets) {
                auto& cb = curvature[curvature_bin_name(row.curvature_bin)];
                cb.sum += row.auc5;
                cb.count++;
                auto& ab = accel[acceleration_bin_name(row.accel_bin)];
                ab.sum += row.auc5;
                ab.count++;
            }
        }
        if (row.filtered) {
            report.filtered_clips++;
        } else {
            ate_s_sum += row.ate_s;
            report.ate_s_clips++;
        }
        if (row.alignment_flagged) report.flagged_clips++;
        ate_m_sum += row.ate_m;
        for (const auto& [key, cell] : sweep_cells[i]) {
            fps_cells[key].sum += cell.sum;
            fps_cells[key].count += cell.count;
        }
    }
    if (auc_count > 0) report.mean_auc5 = auc_sum / double(auc_count);
    if (report.ate_s_clips > 0) report.mean_ate_s = ate_s_sum / double(report.ate_s_clips);
    report.mean_ate_m = ate_m_sum / double(report.clips.size());
    for (const auto& [name, cell] : curvature)
        report.curvature_buckets[name] = {cell.count, cell.sum / double(cell.count)};
    for (const auto& [name, cell] : accel)
        report.accel_buckets[name] = {cell.count, cell.sum / double(cell.count)};
    for (const auto& [name, cell] : fps_cells)
        report.fps_table[name] = {cell.count, cell.sum / double(cell.count)};

    if (!opts.plot_dir.empty())
        write_histogram_svg(opts.plot_dir / "auc5_histogram.svg", auc_values, 0.0, 100.0, 10,
                            "AUC@5 distribution across eval clips");
    return report;
}

ProbeResult probe_latents(const LaposeModel& model, const ClipDataset& train,
                          const ClipDataset& test, const std::filesystem::path& plot_dir,
                          int jobs) {
    const ModelConfig& mc = model.config();

    auto features = [&](const ClipDataset& ds) {
        std::vector<std::vector<float>> feats(ds.size());
        std::vector<int> kinds(ds.size());
        parallel_for(int(ds.size()), jobs, [&](int i) {
            const ClipSpec& spec = ds.specs[size_t(i)];
            Clip clip = make_clip(spec, 0.0, mc.img_width, mc.img_height);
            Tensor latents = model.detached_latents(clip.frames, clip.gt_poses.fps);
            std::vector<float> mean(size_t(latents.cols()), 0.0f);
            for (int r = 0; r < latents.rows(); ++r)
                for (int c = 0; c < latents.cols(); ++c)
                    mean[size_t(c)] += latents.data()[size_t(r) * latents.cols() + c];
            for (auto& v : mean) v /= float(latents.rows());
            feats[size_t(i)] = std::move(mean);
            kinds[size_t(i)] = int(spec.motion.kind);
        });
        return std::make_pair(feats, kinds);
    };

    auto [train_x, train_kinds] = features(train);
    auto [test_x, test_kinds] = features(test);

    // Consecutive class ids over the kinds present in the training split.
    std::vector<int> classes;
    for (int k : train_kinds)
        if (std::find(classes.begin(), classes.end(), k) == classes.end()) classes.push_back(k);
    std::sort(classes.begin(), classes.end());
    auto class_of = [&](int kind) {
        auto it = std::find(classes.begin(), classes.end(), kind);
        if (it == classes.end())
            throw std::invalid_argument("probe: eval split holds a motion kind absent from train");
        return int(it - classes.begin());
    };
    std::vector<int> train_y(train_kinds.size()), test_y(test_kinds.size());
    for (size_t i = 0; i < train_kinds.size(); ++i) train_y[i] = class_of(train_kinds[i]);
    for (size_t i = 0; i < test_kinds.size(); ++i) test_y[i] = class_of(test_kinds[i]);

    ProbeResult result;
    result.n_classes = int(classes.size());
    result.train_clips = train_x.size();
    result.test_clips = test_x.size();
    result.accuracy =
        latent_probe_accuracy(train_x, train_y, test_x, test_y, result.n_classes);

    if (!plot_dir.empty() && !test_x.empty()) {
        std::filesystem::create_directories(plot_dir);
        // PCA to 2-D for the scatter.
        size_t n = test_x.size(), d = test_x[0].size();
        Eigen::MatrixXd x(n, d);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < d; ++j) x(Eigen::Index(i), Eigen::Index(j)) = test_x[i][j];
        Eigen::RowVectorXd mu = x.colwise().mean();
        x.rowwise() -= mu;
        Eigen::MatrixXd cov = x.transpose() * x / double(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        Eigen::MatrixXd basis = eig.eigenvectors().rightCols(2);
        Eigen::MatrixXd proj = x * basis;

        std::vector<std::pair<double, double>> points(n);
        for (size_t i = 0; i < n; ++i)
            points[i] = {proj(Eigen::Index(i), 1), proj(Eigen::Index(i), 0)};
        std::vector<std::string> names;
        for (int k : classes) names.push_back(motion_kind_name(MotionKind(k)));
        write_scatter_svg(plot_dir / "latent_scatter.svg", points, test_y, names,
                          "Held-out latent features (2-D PCA) by motion kind");
    }
    return result;
}

} // namespace lapose
