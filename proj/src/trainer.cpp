#include "lapose/trainer.hpp"

#include "lapose/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lapose {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad bool value: " + v);
}

void set_config_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };
    auto as_u64 = [&] { return uint64_t(std::stoull(value)); };

    if (key == "stage") cfg.stage = value;
    else if (key == "steps") cfg.steps = as_int();
    else if (key == "batch_size") cfg.batch_size = as_int();
    else if (key == "peak_lr") cfg.peak_lr = as_double();
    else if (key == "end_lr") cfg.end_lr = as_double();
    else if (key == "warmup_steps") cfg.warmup_steps = as_int();
    else if (key == "seed") cfg.seed = as_u64();
    else if (key == "freeze_backbone") cfg.freeze_backbone = parse_bool(value);
    else if (key == "fps_min") cfg.fps_min = as_int();
    else if (key == "fps_max") cfg.fps_max = as_int();
    else if (key == "weight_decay") cfg.weight_decay = as_double();
    else if (key == "beta1") cfg.beta1 = as_double();
    else if (key == "beta2") cfg.beta2 = as_double();
    else if (key == "grad_clip") cfg.grad_clip = as_double();
    else if (key == "checkpoint_interval") cfg.checkpoint_interval = as_int();
    else if (key == "log_interval") cfg.log_interval = as_int();
    else if (key == "codebook_fit_patches") cfg.codebook_fit_patches = as_int();
    else if (key == "max_train_clips") cfg.max_train_clips = as_int();
    else if (key == "jobs") cfg.jobs = as_int();
    else if (key == "loss.translation") cfg.loss_weights.translation = as_double();
    else if (key == "loss.rotation") cfg.loss_weights.rotation = as_double();
    else if (key == "loss.fov") cfg.loss_weights.fov = as_double();
    else if (key == "loss.scale") cfg.loss_weights.scale = as_double();
    else if (key == "model.dim") cfg.model.dim = as_int();
    else if (key == "model.heads") cfg.model.heads = as_int();
    else if (key == "model.mlp_ratio") cfg.model.mlp_ratio = as_int();
    else if (key == "model.tok_layers") cfg.model.tok_layers = as_int();
    else if (key == "model.inv_blocks") cfg.model.inv_blocks = as_int();
    else if (key == "model.fd_blocks") cfg.model.fd_blocks = as_int();
    else if (key == "model.fd_head_blocks") cfg.model.fd_head_blocks = as_int();
    else if (key == "model.pose_layers") cfg.model.pose_layers = as_int();
    else if (key == "model.latent_dim") cfg.model.latent_dim = as_int();
    else if (key == "model.patch_size") cfg.model.patch_size = as_int();
    else if (key == "model.codebook_size") cfg.model.codebook_size = as_int();
    else if (key == "model.img_width") cfg.model.img_width = as_int();
    else if (key == "model.img_height") cfg.model.img_height = as_int();
    else if (key == "model.frames") cfg.model.frames = as_int();
    else if (key == "model.init_seed") cfg.model.init_seed = as_u64();
    else throw std::invalid_argument("config: unknown key: " + key);
}

} // namespace

void TrainConfig::validate() const {
    if (stage != "pretrain" && stage != "posttrain")
        throw std::invalid_argument("config: stage must be pretrain or posttrain");
    if (steps < 1) throw std::invalid_argument("config: steps must be >= 1");
    if (warmup_steps >= steps) throw std::invalid_argument("config: warmup_steps must be < steps");
    if (!(peak_lr > 0.0)) throw std::invalid_argument("config: peak_lr must be > 0");
    if (end_lr < 0.0) throw std::invalid_argument("config: end_lr must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (fps_min < 1 || fps_max < fps_min)
        throw std::invalid_argument("config: need 1 <= fps_min <= fps_max");
}

std::string TrainConfig::to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "stage = " << stage << "\n";
    out << "steps = " << steps << "\n";
    out << "batch_size = " << batch_size << "\n";
    out << "peak_lr = " << peak_lr << "\n";
    out << "end_lr = " << end_lr << "\n";
    out << "warmup_steps = " << warmup_steps << "\n";
    out << "seed = " << seed << "\n";
    out << "freeze_backbone = " << (freeze_backbone ? "true" : "false") << "\n";
    out << "fps_min = " << fps_min << "\n";
    out << "fps_max = " << fps_max << "\n";
    out << "weight_decay = " << weight_decay << "\n";
    out << "beta1 = " << beta1 << "\n";
    out << "beta2 = " << beta2 << "\n";
    out << "grad_clip = " << grad_clip << "\n";
    out << "checkpoint_interval = " << checkpoint_interval << "\n";
    out << "log_interval = " << log_interval << "\n";
    out << "codebook_fit_patches = " << codebook_fit_patches << "\n";
    out << "max_train_clips = " << max_train_clips << "\n";
    out << "jobs = " << jobs << "\n";
    out << "loss.translation = " << loss_weights.translation << "\n";
    out << "loss.rotation = " << loss_weights.rotation << "\n";
    out << "loss.fov = " << loss_weights.fov << "\n";
    out << "loss.scale = " << loss_weights.scale << "\n";
    out << "model.dim = " << model.dim << "\n";
    out << "model.heads = " << model.heads << "\n";
    out << "model.mlp_ratio = " << model.mlp_ratio << "\n";
    out << "model.tok_layers = " << model.tok_layers << "\n";
    out << "model.inv_blocks = " << model.inv_blocks << "\n";
    out << "model.fd_blocks = " << model.fd_blocks << "\n";
    out << "model.fd_head_blocks = " << model.fd_head_blocks << "\n";
    out << "model.pose_layers = " << model.pose_layers << "\n";
    out << "model.latent_dim = " << model.latent_dim << "\n";
    out << "model.patch_size = " << model.patch_size << "\n";
    out << "model.codebook_size = " << model.codebook_size << "\n";
    out << "model.img_width = " << model.img_width << "\n";
    out << "model.img_height = " << model.img_height << "\n";
    out << "model.frames = " << model.frames << "\n";
    out << "model.init_seed = " << model.init_seed << "\n";
    return out.str();
}

TrainConfig default_train_config(const std::string& stage) {
    TrainConfig cfg;
    cfg.stage = stage;
    if (stage == "posttrain") {
        cfg.steps = 5000;
        cfg.batch_size = 32;
        cfg.end_lr = 0.0; // decayed to zero by the end
        cfg.warmup_steps = 200;
    }
    return cfg;
}

TrainConfig parse_train_config(const std::string& text, const std::string& stage_hint) {
    // Two passes so stage-dependent defaults apply before the overrides.
    std::string stage = stage_hint.empty() ? "pretrain" : stage_hint;
    std::istringstream pre(text);
    std::string line;
    while (std::getline(pre, line)) {
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        if (trim(line.substr(0, eq)) == "stage") stage = trim(line.substr(eq + 1));
    }

    TrainConfig cfg = default_train_config(stage);
    std::istringstream in(text);
    while (std::getline(in, line)) {
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value, got: " + t);
        set_config_key(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void apply_config_overrides(TrainConfig& cfg, const std::vector<std::string>& key_values) {
    for (const auto& kv : key_values) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config override: expected key=value, got: " + kv);
        set_config_key(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
}

double lr_at(int step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.steps) throw std::invalid_argument("lr_at: step out of range");
    if (step < cfg.warmup_steps) return cfg.peak_lr * double(step) / double(cfg.warmup_steps);
    double span = double(cfg.steps - cfg.warmup_steps);
    double t = span > 0.0 ? double(step - cfg.warmup_steps) / span : 1.0;
    return cfg.end_lr + (cfg.peak_lr - cfg.end_lr) * 0.5 * (1.0 + std::cos(kPi * t));
}

AdamW::AdamW(ParameterRegistry& params, const TrainConfig& cfg)
    : beta1_(cfg.beta1), beta2_(cfg.beta2), weight_decay_(cfg.weight_decay),
      grad_clip_(cfg.grad_clip) {
    for (const auto& name : params.names()) {
        Tensor& t = params.at(name);
        Slot s;
        s.param = &t;
        s.decay = name.size() >= 2 && name.rfind(".w") == name.size() - 2;
        s.m.assign(t.size(), 0.0f);
        s.v.assign(t.size(), 0.0f);
        slots_.push_back(std::move(s));
    }
}

void AdamW::zero_grad() {
    for (auto& s : slots_)
        if (!s.param->grad().empty()) std::fill(s.param->grad().begin(), s.param->grad().end(), 0.0f);
}

void AdamW::step(double lr, double grad_scale) {
    ++t_;
    double inv_scale = 1.0 / grad_scale;

    double sq_norm = 0.0;
    for (auto& s : slots_) {
        if (!s.param->requires_grad() || s.param->grad().empty()) continue;
        for (float g : s.param->grad()) {
            double gs = double(g) * inv_scale;
            sq_norm += gs * gs;
        }
    }
    double norm = std::sqrt(sq_norm);
    double clip = (grad_clip_ > 0.0 && norm > grad_clip_) ? grad_clip_ / norm : 1.0;

    double bc1 = 1.0 - std::pow(beta1_, double(t_));
    double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (auto& s : slots_) {
        if (!s.param->requires_grad() || s.param->grad().empty()) continue;
        auto& p = s.param->data();
        auto& g = s.param->grad();
        double wd = s.decay ? weight_decay_ : 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            double gi = double(g[i]) * inv_scale * clip;
            s.m[i] = float(beta1_ * s.m[i] + (1.0 - beta1_) * gi);
            s.v[i] = float(beta2_ * s.v[i] + (1.0 - beta2_) * gi * gi);
            double mhat = double(s.m[i]) / bc1;
            double vhat = double(s.v[i]) / bc2;
            p[i] = float(double(p[i]) - lr * (mhat / (std::sqrt(vhat) + 1e-8) + wd * double(p[i])));
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const LaposeModel& model,
                     const std::string& train_config_text, int step) {
    const auto& params = model.params();
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    uint64_t offset = 0;
    for (const auto& name : params.names()) {
        const Tensor& t = params.at(name);
        nlohmann::ordered_json entry;
        entry["name"] = name;
        entry["rows"] = t.rows();
        entry["cols"] = t.cols();
        entry["dtype"] = "f32";
        entry["offset"] = offset;
        manifest.push_back(entry);
        offset += t.size() * sizeof(float);
    }

    nlohmann::ordered_json header;
    header["format"] = "LAPC";
    header["version"] = 1;
    header["step"] = step;
    header["model_config"] = nlohmann::json::parse(model.config().to_json());
    header["train_config"] = train_config_text;
    header["tensors"] = manifest;
    std::string json = header.dump();

    std::vector<uint8_t> buf;
    buf.reserve(16 + json.size() + offset + 32);
    buf.insert(buf.end(), {'L', 'A', 'P', 'C'});
    append_le<uint32_t>(buf, 1);
    append_le<uint64_t>(buf, uint64_t(json.size()));
    buf.insert(buf.end(), json.begin(), json.end());
    for (const auto& name : params.names()) {
        const Tensor& t = params.at(name);
        const uint8_t* p = reinterpret_cast<const uint8_t*>(t.data().data());
        buf.insert(buf.end(), p, p + t.size() * sizeof(float));
    }
    auto hash = sha256(buf.data(), buf.size());
    buf.insert(buf.end(), hash.begin(), hash.end());
    write_file(path, buf.data(), buf.size());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    auto buf = read_file(path);
    if (buf.size() < 16 + 32 || std::memcmp(buf.data(), "LAPC", 4) != 0)
        throw std::runtime_error("checkpoint: bad file: " + path.string());
    auto hash = sha256(buf.data(), buf.size() - 32);
    if (std::memcmp(hash.data(), buf.data() + buf.size() - 32, 32) != 0)
        throw std::runtime_error("checkpoint: content hash mismatch");
    uint64_t json_len = read_le<uint64_t>(buf.data() + 8);
    std::string json(reinterpret_cast<const char*>(buf.data() + 16), json_len);
    auto header = nlohmann::json::parse(json);

    LoadedCheckpoint out;
    out.config = ModelConfig::from_json(header.at("model_config").dump());
    out.step = header.at("step").get<int>();
    out.train_config_text = header.at("train_config").get<std::string>();
    out.model = std::make_unique<LaposeModel>(out.config);

    const uint8_t* payload = buf.data() + 16 + json_len;
    size_t payload_len = buf.size() - 32 - 16 - json_len;
    for (const auto& entry : header.at("tensors")) {
        std::string name = entry.at("name").get<std::string>();
        int rows = entry.at("rows").get<int>();
        int cols = entry.at("cols").get<int>();
        uint64_t offset = entry.at("offset").get<uint64_t>();
        Tensor& t = out.model->params().at(name);
        if (t.rows() != rows || t.cols() != cols)
            throw std::runtime_error("checkpoint: tensor shape mismatch for " + name);
        size_t bytes = t.size() * sizeof(float);
        if (offset + bytes > payload_len) throw std::runtime_error("checkpoint: truncated payload");
        std::memcpy(t.data().data(), payload + offset, bytes);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Data plumbing
// ---------------------------------------------------------------------------

ClipDataset ClipDataset::load(const std::filesystem::path& data_dir, const std::string& split) {
    ClipDataset ds;
    ds.root = data_dir;
    ds.split = split;
    for (const auto& dir : list_clip_dirs(data_dir / split)) ds.specs.push_back(load_clip_spec(dir));
    if (ds.specs.empty())
        throw std::runtime_error("dataset: no clips under " + (data_dir / split).string());
    return ds;
}

std::vector<BatchPlan> plan_batch(size_t dataset_size, const TrainConfig& cfg, uint64_t step) {
    Rng rng = Rng::derive(cfg.seed ^ 0xba7c4ba7c4ULL, step);
    std::vector<BatchPlan> plan(size_t(cfg.batch_size));
    for (auto& p : plan) {
        p.clip_index = int(rng.below(dataset_size));
        p.fps = cfg.fps_min + int(rng.below(uint64_t(cfg.fps_max - cfg.fps_min + 1)));
    }
    return plan;
}

namespace {

TrainItem render_item(const ClipDataset& dataset, const TrainConfig& cfg, const BatchPlan& plan,
                      const Codebook* codebook) {
    const ClipSpec& spec = dataset.specs[size_t(plan.clip_index)];
    Clip clip = make_clip(spec, double(plan.fps), cfg.model.img_width, cfg.model.img_height);
    TrainItem item;
    item.clip_index = plan.clip_index;
    item.fps = double(plan.fps);
    item.gt_metric = clip.gt_poses;
    item.fov = clip.gt_fov;
    item.kind = clip.motion_label;
    if (codebook) {
        item.target_codes.reserve(size_t(cfg.model.frames - 1) * size_t(cfg.model.tokens_per_frame()));
        for (int f = 1; f < cfg.model.frames; ++f) {
            auto codes = codebook->encode_frame(clip.frames[size_t(f)], cfg.model.patch_size);
            item.target_codes.insert(item.target_codes.end(), codes.begin(), codes.end());
        }
    }
    item.frames = std::move(clip.frames);
    return item;
}

} // namespace

std::vector<TrainItem> sample_batch(const ClipDataset& dataset, const TrainConfig& cfg,
                                    uint64_t step, const Codebook* codebook) {
    auto plan = plan_batch(dataset.size(), cfg, step);
    std::vector<TrainItem> items(plan.size());
    parallel_for(int(plan.size()), cfg.jobs, [&](int i) {
        items[size_t(i)] = render_item(dataset, cfg, plan[size_t(i)], codebook);
    });
    return items;
}

Codebook fit_or_load_codebook(const ClipDataset& dataset, const TrainConfig& cfg,
                              const std::filesystem::path& path) {
    if (std::filesystem::exists(path)) {
        Codebook cb = Codebook::load(path);
        if (int(cb.size()) != cfg.model.codebook_size)
            throw std::runtime_error("codebook: size does not match the model config");
        return cb;
    }
    std::vector<std::vector<float>> patches;
    patches.reserve(size_t(cfg.codebook_fit_patches));
    for (const auto& dir : list_clip_dirs(dataset.root / dataset.split)) {
        for (int f = 0; f < cfg.model.frames && int(patches.size()) < cfg.codebook_fit_patches;
             ++f) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%03d.png", f);
            auto frame_patches = extract_patches(read_png(dir / name), cfg.model.patch_size);
            for (auto& p : frame_patches) {
                patches.push_back(std::move(p));
                if (int(patches.size()) >= cfg.codebook_fit_patches) break;
            }
        }
        if (int(patches.size()) >= cfg.codebook_fit_patches) break;
    }
    Codebook cb = Codebook::fit(patches, uint32_t(cfg.model.codebook_size), cfg.seed);
    cb.save(path);
    return cb;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

class CurveWriter {
public:
    CurveWriter(const std::filesystem::path& path) : out_(path) {
        out_ << "step,loss,lr\n";
    }
    void append(int step, double loss, double lr) {
        char line[96];
        std::snprintf(line, sizeof(line), "%d,%.8g,%.8g\n", step, loss, lr);
        out_ << line;
        out_.flush();
    }

private:
    std::ofstream out_;
};

class DivergenceMonitor {
public:
    void observe(int step, double loss) {
        if (step == 0) initial_ = loss;
        if (loss > 10.0 * initial_) {
            if (++consecutive_ >= 500)
                throw std::runtime_error(
                    "training diverged: loss " + std::to_string(loss) + " above 10x initial " +
                    std::to_string(initial_) + " for 500 consecutive steps (step " +
                    std::to_string(step) + ")");
        } else {
            consecutive_ = 0;
        }
    }
    double initial() const { return initial_; }

private:
    double initial_ = 0.0;
    int consecutive_ = 0;
};

ModelConfig effective_model_config(const TrainConfig& cfg) {
    ModelConfig mc = cfg.model;
    if (mc.init_seed == 0) mc.init_seed = cfg.seed + 1;
    return mc;
}

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
    ModelConfig x = a, y = b;
    x.init_seed = y.init_seed = 0;
    return x == y;
}

} // namespace

TrainResult run_pretrain(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                         const std::filesystem::path& out_dir) {
    cfg.validate();
    if (cfg.stage != "pretrain") throw std::invalid_argument("run_pretrain: wrong stage");
    std::filesystem::create_directories(out_dir);

    ClipDataset dataset = ClipDataset::load(data_dir, "train");
    if (cfg.max_train_clips > 0 && int(dataset.size()) > cfg.max_train_clips)
        dataset.specs.resize(size_t(cfg.max_train_clips));

    TrainResult result;
    result.codebook_path = out_dir / "codebook.lacb";
    Codebook codebook = fit_or_load_codebook(dataset, cfg, result.codebook_path);

    LaposeModel model(effective_model_config(cfg));
    AdamW opt(model.params(), cfg);
    result.curve_path = out_dir / "curve.csv";
    CurveWriter curve(result.curve_path);
    DivergenceMonitor monitor;

    auto fetch = [&](uint64_t step) { return sample_batch(dataset, cfg, step, &codebook); };
    std::future<std::vector<TrainItem>> prefetch =
        std::async(std::launch::async, fetch, uint64_t(0));

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<TrainItem> batch = prefetch.get();
        if (step + 1 < cfg.steps)
            prefetch = std::async(std::launch::async, fetch, uint64_t(step) + 1);

        opt.zero_grad();
        double loss_sum = 0.0;
        for (const auto& item : batch) {
            TokenSequence seq = model.encode(item.frames, item.fps);
            LatentActions acts = model.latent_actions(seq);
            Tensor logits = model.pretrain_logits(seq, acts);
            Tensor loss = ops::cross_entropy(logits, item.target_codes);
            loss.backward();
            loss_sum += double(loss.scalar());
        }
        double mean_loss = loss_sum / double(batch.size());
        double lr = lr_at(step, cfg);
        opt.step(lr, double(batch.size()));

        if (step == 0) result.initial_loss = mean_loss;
        result.final_loss = mean_loss;
        monitor.observe(step, mean_loss);
        if (step % std::max(1, cfg.log_interval) == 0 || step + 1 == cfg.steps)
            curve.append(step, mean_loss, lr);
        if (cfg.checkpoint_interval > 0 && step > 0 && step % cfg.checkpoint_interval == 0) {
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_%06d.lapc", step);
            save_checkpoint(out_dir / name, model, cfg.to_text(), step);
        }
    }

    result.checkpoint_path = out_dir / "checkpoint_final.lapc";
    save_checkpoint(result.checkpoint_path, model, cfg.to_text(), cfg.steps);
    return result;
}

TrainResult run_posttrain(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                          const std::filesystem::path& out_dir,
                          const std::filesystem::path& pretrained) {
    cfg.validate();
    if (cfg.stage != "posttrain") throw std::invalid_argument("run_posttrain: wrong stage");
    std::filesystem::create_directories(out_dir);

    ClipDataset dataset = ClipDataset::load(data_dir, "train");
    if (cfg.max_train_clips > 0 && int(dataset.size()) > cfg.max_train_clips)
        dataset.specs.resize(size_t(cfg.max_train_clips));

    std::unique_ptr<LaposeModel> model;
    if (!pretrained.empty()) {
        LoadedCheckpoint loaded = load_checkpoint(pretrained);
        if (!same_architecture(loaded.config, cfg.model))
            throw std::invalid_argument("posttrain: architecture mismatch between config and " +
                                        pretrained.string());
        model = std::move(loaded.model);
    } else {
        // Random-init backbone: the ablation baseline.
        model = std::make_unique<LaposeModel>(effective_model_config(cfg));
    }
    model->set_backbone_trainable(!cfg.freeze_backbone);

    AdamW opt(model->params(), cfg);
    TrainResult result;
    result.curve_path = out_dir / "curve.csv";
    CurveWriter curve(result.curve_path);
    DivergenceMonitor monitor;

    // With a frozen backbone the latents per (clip, fps) never change: compute
    // each variant once.
    std::map<std::pair<int, int>, std::vector<float>> latent_cache;
    std::mutex cache_mu;

    auto fetch = [&](uint64_t step) { return sample_batch(dataset, cfg, step, nullptr); };
    std::future<std::vector<TrainItem>> prefetch =
        std::async(std::launch::async, fetch, uint64_t(0));

    int latent_rows = cfg.model.frames - 1;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<TrainItem> batch = prefetch.get();
        if (step + 1 < cfg.steps)
            prefetch = std::async(std::launch::async, fetch, uint64_t(step) + 1);

        if (cfg.freeze_backbone) {
            parallel_for(int(batch.size()), cfg.jobs, [&](int i) {
                const TrainItem& item = batch[size_t(i)];
                std::pair<int, int> key{item.clip_index, int(item.fps)};
                {
                    std::lock_guard<std::mutex> lock(cache_mu);
                    if (latent_cache.count(key)) return;
                }
                Tensor latents = model->detached_latents(item.frames, item.fps);
                std::lock_guard<std::mutex> lock(cache_mu);
                latent_cache.emplace(key, latents.data());
            });
        }

        opt.zero_grad();
        double loss_sum = 0.0;
        for (const auto& item : batch) {
            Tensor latents;
            if (cfg.freeze_backbone) {
                const auto& data = latent_cache.at({item.clip_index, int(item.fps)});
                latents = Tensor::from_data(latent_rows, cfg.model.dim, data);
            } else {
                latents = model->infer(model->encode(item.frames, item.fps)).latents;
            }
            PoseHead::RawOutput raw = model->pose_forward(latents);
            auto [gt_norm, gt_scale] = normalize_translations(item.gt_metric, 1.0);
            Tensor loss =
                pose_supervision_loss(raw, gt_norm, gt_scale, item.fov, nullptr, 1.0,
                                      cfg.loss_weights);
            loss.backward();
            loss_sum += double(loss.scalar());
        }
        double mean_loss = loss_sum / double(batch.size());
        double lr = lr_at(step, cfg);
        opt.step(lr, double(batch.size()));

        if (step == 0) result.initial_loss = mean_loss;
        result.final_loss = mean_loss;
        monitor.observe(step, mean_loss);
        if (step % std::max(1, cfg.log_interval) == 0 || step + 1 == cfg.steps)
            curve.append(step, mean_loss, lr);
        if (cfg.checkpoint_interval > 0 && step > 0 && step % cfg.checkpoint_interval == 0) {
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_%06d.lapc", step);
            save_checkpoint(out_dir / name, *model, cfg.to_text(), step);
        }
    }

    result.checkpoint_path = out_dir / "checkpoint_final.lapc";
    save_checkpoint(result.checkpoint_path, *model, cfg.to_text(), cfg.steps);
    return result;
}

} // namespace lapose
