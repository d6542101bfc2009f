// lapose command-line tool: dataset generation, two-stage training,
// evaluation, and the latent probe. Links the C API only.

#include "lapose.h"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

// Exit codes: 0 success, 1 validation error, 2 runtime failure.
constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

int exit_code_for(lapose_status status) {
    switch (status) {
        case LAPOSE_OK: return kExitOk;
        case LAPOSE_INVALID_ARGUMENT: return kExitValidation;
        default: return kExitRuntime;
    }
}

int fail_with(lapose_status status, const char* what) {
    std::fprintf(stderr, "lapose %s: %s\n", what, lapose_last_error());
    return exit_code_for(status);
}

uint64_t env_seed_fallback(uint64_t seed, bool seed_given) {
    if (seed_given) return seed;
    const char* env = std::getenv("LAPOSE_SEED");
    if (env && *env) return std::strtoull(env, nullptr, 10);
    return seed;
}

std::string read_file_or_die(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::fprintf(stderr, "lapose: cannot read %s\n", path.c_str());
        std::exit(kExitValidation);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': break;
            default: out += c;
        }
    }
    return out;
}

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm;
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

// One manifest per run; re-running with the recorded config and seed
// reproduces the outputs (timestamps aside).
void write_manifest(const std::string& dir, const std::string& command,
                    const std::string& config_snapshot, uint64_t seed,
                    const std::string& started, const std::vector<std::string>& outputs) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ostringstream j;
    j << "{\n";
    j << "  \"command\": \"" << json_escape(command) << "\",\n";
    j << "  \"config\": \"" << json_escape(config_snapshot) << "\",\n";
    j << "  \"config_hash\": \"" << std::hex << fnv1a(config_snapshot) << std::dec << "\",\n";
    j << "  \"seed\": " << seed << ",\n";
    j << "  \"lapose_version\": \"" << lapose_version() << "\",\n";
    j << "  \"started\": \"" << started << "\",\n";
    j << "  \"finished\": \"" << utc_now() << "\",\n";
    j << "  \"outputs\": [";
    for (size_t i = 0; i < outputs.size(); ++i)
        j << (i ? ", " : "") << "\"" << json_escape(outputs[i]) << "\"";
    j << "]\n}\n";
    std::ofstream out(std::filesystem::path(dir) / "manifest.json");
    out << j.str();
}

std::string build_config_text(const std::string& config_path, uint64_t seed, bool seed_given,
                              const std::vector<std::string>& sets) {
    std::string text;
    if (!config_path.empty()) text = read_file_or_die(config_path) + "\n";
    if (seed_given || std::getenv("LAPOSE_SEED"))
        text += "seed = " + std::to_string(env_seed_fallback(seed, seed_given)) + "\n";
    for (const auto& kv : sets) text += kv + "\n";
    return text;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-action pretraining and camera pose estimation on synthetic "
                 "driving video"};
    app.require_subcommand(1);

    // generate ---------------------------------------------------------------
    auto* gen = app.add_subcommand("generate", "render a synthetic clip dataset");
    std::string gen_out, gen_split = "train", gen_kinds;
    uint32_t gen_clips = 1;
    uint64_t gen_seed = 0;
    bool gen_seed_given = false;
    double gen_reverse = 0.02;
    int gen_jobs = 2;
    gen->add_option("--out", gen_out, "dataset root directory")->required();
    gen->add_option("--clips", gen_clips, "number of clips")->required();
    gen->add_option("--seed", gen_seed, "generation seed")
        ->each([&](const std::string&) { gen_seed_given = true; });
    gen->add_option("--split", gen_split, "train|eval|probe (eval stores 2 fps)");
    gen->add_option("--reverse-rate", gen_reverse, "reverse-motion clip rate (default 0.02)");
    gen->add_option("--kinds", gen_kinds, "restrict motion kinds, comma-separated");
    gen->add_option("--jobs", gen_jobs, "parallel clip workers");

    // pretrain / posttrain -----------------------------------------------------
    std::string tr_config, tr_data, tr_out, tr_from;
    uint64_t tr_seed = 0;
    bool tr_seed_given = false;
    std::vector<std::string> tr_sets;
    int tr_latent_dim = -1;
    std::string tr_freeze;

    auto add_train_options = [&](CLI::App* cmd, bool posttrain) {
        cmd->add_option("--config", tr_config, "key=value config file");
        cmd->add_option("--data", tr_data, "dataset root")->required();
        cmd->add_option("--out", tr_out, "run output directory")->required();
        cmd->add_option("--seed", tr_seed, "training seed (falls back to LAPOSE_SEED)")
            ->each([&](const std::string&) { tr_seed_given = true; });
        cmd->add_option("--set", tr_sets, "config override key=value (repeatable)");
        cmd->add_option("--latent-dim", tr_latent_dim, "bottleneck dimension d");
        if (posttrain) {
            cmd->add_option("--from", tr_from,
                            "pretrained checkpoint ('none' for the random-init baseline)");
            cmd->add_option("--freeze-backbone", tr_freeze, "true|false (default true)");
        }
    };
    auto* pre = app.add_subcommand("pretrain", "stage 1: latent action pretraining");
    add_train_options(pre, false);
    auto* post = app.add_subcommand("posttrain", "stage 2: pose head post-training");
    add_train_options(post, true);

    // eval ---------------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "trajectory evaluation report");
    std::string ev_ckpt, ev_data, ev_split = "eval", ev_report, ev_sweep, ev_buckets =
        "curvature,accel", ev_plots;
    int ev_jobs = 2;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "dataset root")->required();
    ev->add_option("--split", ev_split, "dataset split (default eval)");
    ev->add_option("--report-dir", ev_report, "report output directory")->required();
    ev->add_option("--fps-sweep", ev_sweep, "comma-separated frame rates, e.g. 4,2,1.3,1");
    ev->add_option("--buckets", ev_buckets, "bucket tables: curvature,accel or 'none'");
    ev->add_option("--plot-dir", ev_plots, "write xz trajectory + histogram SVGs here");
    ev->add_option("--jobs", ev_jobs, "parallel eval workers");

    // probe ----------------------------------------------------------------------
    auto* pr = app.add_subcommand("probe", "linear probe from frozen latents to motion kind");
    std::string pr_ckpt, pr_data, pr_plots, pr_out;
    double pr_min_acc = -1.0;
    int pr_jobs = 2;
    pr->add_option("--ckpt", pr_ckpt, "checkpoint path")->required();
    pr->add_option("--data", pr_data, "dataset root with train and eval splits")->required();
    pr->add_option("--out", pr_out, "run output directory (manifest + accuracy)");
    pr->add_option("--plot-dir", pr_plots, "write the 2-D latent scatter here");
    pr->add_option("--min-accuracy", pr_min_acc,
                   "exit nonzero when accuracy falls below this (CI gate)");
    pr->add_option("--jobs", pr_jobs, "parallel workers");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;
    }

    std::string started = utc_now();

    if (gen->parsed()) {
        uint64_t seed = env_seed_fallback(gen_seed, gen_seed_given);
        lapose_generate_options opts{};
        opts.out_dir = gen_out.c_str();
        opts.split = gen_split.c_str();
        opts.n_clips = gen_clips;
        opts.seed = seed;
        opts.reverse_rate = gen_reverse;
        opts.kinds_csv = gen_kinds.empty() ? nullptr : gen_kinds.c_str();
        opts.jobs = gen_jobs;
        lapose_status rc = lapose_generate_dataset(&opts);
        if (rc != LAPOSE_OK) return fail_with(rc, "generate");
        std::ostringstream cfg;
        cfg << "clips=" << gen_clips << " split=" << gen_split << " reverse_rate=" << gen_reverse
            << " kinds=" << (gen_kinds.empty() ? "default" : gen_kinds);
        write_manifest(gen_out, "generate", cfg.str(), seed, started, {gen_out + "/" + gen_split});
        std::printf("generated %u clips under %s/%s\n", gen_clips, gen_out.c_str(),
                    gen_split.c_str());
        return kExitOk;
    }

    if (pre->parsed() || post->parsed()) {
        bool posttrain = post->parsed();
        std::string config = build_config_text(tr_config, tr_seed, tr_seed_given, tr_sets);
        if (tr_latent_dim > 0)
            config += "model.latent_dim = " + std::to_string(tr_latent_dim) + "\n";
        if (!tr_freeze.empty()) config += "freeze_backbone = " + tr_freeze + "\n";

        lapose_status rc;
        if (posttrain) {
            const char* from = nullptr;
            if (!tr_from.empty() && tr_from != "none") {
                if (!std::filesystem::exists(tr_from)) {
                    std::fprintf(stderr, "lapose posttrain: checkpoint not found: %s\n",
                                 tr_from.c_str());
                    return kExitValidation;
                }
                from = tr_from.c_str();
            }
            rc = lapose_posttrain(config.c_str(), tr_data.c_str(), tr_out.c_str(), from);
        } else {
            rc = lapose_pretrain(config.c_str(), tr_data.c_str(), tr_out.c_str());
        }
        if (rc != LAPOSE_OK) return fail_with(rc, posttrain ? "posttrain" : "pretrain");
        uint64_t seed = env_seed_fallback(tr_seed, tr_seed_given);
        write_manifest(tr_out, posttrain ? "posttrain" : "pretrain", config, seed, started,
                       {tr_out + "/checkpoint_final.lapc", tr_out + "/curve.csv"});
        std::printf("%s finished: %s/checkpoint_final.lapc\n",
                    posttrain ? "posttrain" : "pretrain", tr_out.c_str());
        return kExitOk;
    }

    if (ev->parsed()) {
        if (!std::filesystem::exists(ev_ckpt)) {
            std::fprintf(stderr, "lapose eval: checkpoint not found: %s\n", ev_ckpt.c_str());
            return kExitValidation;
        }
        lapose_eval_options opts{};
        opts.ckpt_path = ev_ckpt.c_str();
        opts.data_dir = ev_data.c_str();
        opts.split = ev_split.c_str();
        opts.report_dir = ev_report.c_str();
        opts.fps_sweep_csv = ev_sweep.empty() ? nullptr : ev_sweep.c_str();
        opts.buckets = ev_buckets != "none";
        opts.plot_dir = ev_plots.empty() ? nullptr : ev_plots.c_str();
        opts.jobs = ev_jobs;
        double mean_auc = 0.0;
        lapose_status rc = lapose_evaluate(&opts, &mean_auc);
        if (rc != LAPOSE_OK) return fail_with(rc, "eval");
        write_manifest(ev_report, "eval", "ckpt=" + ev_ckpt + " split=" + ev_split, 0, started,
                       {ev_report + "/report.json", ev_report + "/report.csv"});
        std::printf("mean AUC@5: %.2f (report: %s/report.json)\n", mean_auc, ev_report.c_str());
        return kExitOk;
    }

    if (pr->parsed()) {
        if (!std::filesystem::exists(pr_ckpt)) {
            std::fprintf(stderr, "lapose probe: checkpoint not found: %s\n", pr_ckpt.c_str());
            return kExitValidation;
        }
        double accuracy = 0.0;
        lapose_status rc =
            lapose_probe(pr_ckpt.c_str(), pr_data.c_str(),
                         pr_plots.empty() ? nullptr : pr_plots.c_str(), pr_jobs, &accuracy);
        if (rc != LAPOSE_OK) return fail_with(rc, "probe");
        std::printf("probe accuracy: %.4f\n", accuracy);
        std::string manifest_dir = !pr_out.empty() ? pr_out : pr_plots;
        if (!manifest_dir.empty()) {
            if (!pr_out.empty()) {
                std::filesystem::create_directories(pr_out);
                std::ofstream acc(std::filesystem::path(pr_out) / "accuracy.txt");
                acc << accuracy << "\n";
            }
            std::vector<std::string> outputs;
            if (!pr_out.empty()) outputs.push_back(pr_out + "/accuracy.txt");
            if (!pr_plots.empty()) outputs.push_back(pr_plots + "/latent_scatter.svg");
            write_manifest(manifest_dir, "probe", "ckpt=" + pr_ckpt, 0, started, outputs);
        }
        if (pr_min_acc >= 0.0 && accuracy < pr_min_acc) {
            std::fprintf(stderr, "probe accuracy %.4f below threshold %.4f\n", accuracy,
                         pr_min_acc);
            return kExitValidation;
        }
        return kExitOk;
    }

    return kExitValidation;
}
