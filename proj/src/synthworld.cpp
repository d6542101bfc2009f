#include "lapose/synthworld.hpp"

#include "lapose/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lapose {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 heading_forward(double psi) { return {-std::sin(psi), 0.0, std::cos(psi)}; }
Vec3 heading_right(double psi) { return {std::cos(psi), 0.0, std::sin(psi)}; }

Quat heading_orientation(double psi) {
    // Rotation about the up axis (-y, since y points down) by psi maps the
    // camera forward (0,0,1) onto heading_forward(psi).
    return Quat::from_axis_angle({0.0, -1.0, 0.0}, psi);
}

// Per-clip segment switch points as step fractions, independent of the frame
// rate so re-rendering the clip at another fps keeps the same path shape.
struct SwitchPoints {
    double flip_frac;       // s-curve sign change
    double stop_start_frac; // stop-and-go window
    double stop_end_frac;
};

SwitchPoints draw_switch_points(uint64_t clip_seed) {
    Rng rng = Rng::derive(clip_seed, 0x73776974ULL);
    SwitchPoints sp;
    sp.flip_frac = rng.uniform(0.3, 0.7);
    sp.stop_start_frac = rng.uniform(0.2, 0.45);
    sp.stop_end_frac = sp.stop_start_frac + rng.uniform(0.2, 0.4);
    return sp;
}

double step_speed(const MotionSpec& spec, int k, int steps, const SwitchPoints& sp) {
    if (spec.kind != MotionKind::StopAndGo) return spec.speed_mps;
    double frac = (double(k) + 0.5) / double(steps);
    bool stopped = frac >= sp.stop_start_frac && frac < sp.stop_end_frac;
    return stopped ? 0.0 : spec.speed_mps;
}

double step_curvature(const MotionSpec& spec, int k, int steps, const SwitchPoints& sp) {
    if (spec.kind == MotionKind::SCurve &&
        (double(k) + 0.5) / double(steps) >= sp.flip_frac)
        return -spec.curvature;
    return spec.curvature;
}

uint64_t mix_cell(uint64_t seed, int64_t cx, int64_t cz) {
    uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * uint64_t(cx) + 0xbf58476d1ce4e5b9ULL * uint64_t(cz));
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double cell_value(uint64_t seed, int64_t cx, int64_t cz) {
    return double(mix_cell(seed, cx, cz) >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinear value noise over the ground plane.
double ground_value(uint64_t seed, double x, double z, double scale) {
    double fx = x / scale;
    double fz = z / scale;
    int64_t cx = int64_t(std::floor(fx));
    int64_t cz = int64_t(std::floor(fz));
    double tx = smoothstep(fx - double(cx));
    double tz = smoothstep(fz - double(cz));
    double v00 = cell_value(seed, cx, cz);
    double v10 = cell_value(seed, cx + 1, cz);
    double v01 = cell_value(seed, cx, cz + 1);
    double v11 = cell_value(seed, cx + 1, cz + 1);
    return (v00 * (1 - tx) + v10 * tx) * (1 - tz) + (v01 * (1 - tx) + v11 * tx) * tz;
}

void hsv_to_rgb(double h, double s, double v, uint8_t out[3]) {
    h = h - std::floor(h);
    double r = std::clamp(std::abs(h * 6.0 - 3.0) - 1.0, 0.0, 1.0);
    double g = std::clamp(2.0 - std::abs(h * 6.0 - 2.0), 0.0, 1.0);
    double b = std::clamp(2.0 - std::abs(h * 6.0 - 4.0), 0.0, 1.0);
    out[0] = uint8_t(std::lround(255.0 * v * (1.0 + s * (r - 1.0))));
    out[1] = uint8_t(std::lround(255.0 * v * (1.0 + s * (g - 1.0))));
    out[2] = uint8_t(std::lround(255.0 * v * (1.0 + s * (b - 1.0))));
}

struct RayHit {
    double t = -1.0;
    Vec3 normal;
    const Box* box = nullptr;
    bool ground = false;
};

bool intersect_box(const Box& box, const Vec3& o, const Vec3& d, double t_max, RayHit& hit) {
    double t_lo = 1e-4, t_hi = t_max;
    int entry_axis = -1;
    double entry_sign = 0.0;
    const double od[3] = {o.x, o.y, o.z};
    const double dd[3] = {d.x, d.y, d.z};
    const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dd[a]) < 1e-12) {
            if (od[a] < lo[a] || od[a] > hi[a]) return false;
            continue;
        }
        double inv = 1.0 / dd[a];
        double t0 = (lo[a] - od[a]) * inv;
        double t1 = (hi[a] - od[a]) * inv;
        double sign = -1.0;
        if (t0 > t1) {
            std::swap(t0, t1);
            sign = 1.0;
        }
        if (t0 > t_lo) {
            t_lo = t0;
            entry_axis = a;
            entry_sign = sign;
        }
        t_hi = std::min(t_hi, t1);
        if (t_lo > t_hi) return false;
    }
    if (entry_axis < 0) return false; // origin inside the box
    hit.t = t_lo;
    hit.normal = {0, 0, 0};
    if (entry_axis == 0) hit.normal.x = entry_sign;
    if (entry_axis == 1) hit.normal.y = entry_sign;
    if (entry_axis == 2) hit.normal.z = entry_sign;
    hit.box = &box;
    hit.ground = false;
    return true;
}

} // namespace

const char* motion_kind_name(MotionKind k) {
    switch (k) {
        case MotionKind::Straight: return "straight";
        case MotionKind::LeftTurn: return "left-turn";
        case MotionKind::RightTurn: return "right-turn";
        case MotionKind::SCurve: return "s-curve";
        case MotionKind::Reverse: return "reverse";
        case MotionKind::StopAndGo: return "stop-and-go";
    }
    return "straight";
}

MotionKind motion_kind_from_name(const std::string& name) {
    for (MotionKind k : {MotionKind::Straight, MotionKind::LeftTurn, MotionKind::RightTurn,
                         MotionKind::SCurve, MotionKind::Reverse, MotionKind::StopAndGo}) {
        if (name == motion_kind_name(k)) return k;
    }
    throw std::invalid_argument("unknown motion kind: " + name);
}

MotionSample sample_motion(const MotionSpec& spec, uint64_t clip_seed) {
    if (spec.frame_count < 2) throw std::invalid_argument("sample_motion: need at least 2 frames");
    if (spec.fps <= 0.0) throw std::invalid_argument("sample_motion: fps must be positive");
    int steps = spec.frame_count - 1;
    double dt = 1.0 / spec.fps;
    double sigma_yaw = spec.heading_jitter_deg * kPi / 180.0;
    double sigma_pitch = spec.pitch_jitter_deg * kPi / 180.0;
    Rng rng = Rng::derive(clip_seed, 0x6d6f74696fULL);
    SwitchPoints sp = draw_switch_points(clip_seed);

    // Smooth path headings and positions; camera orientations add per-frame
    // mount wobble on top (frame 0 is the reference and carries none).
    std::vector<Vec3> positions(size_t(spec.frame_count));
    std::vector<double> headings(size_t(spec.frame_count), 0.0);
    positions[0] = {0, 0, 0};
    double psi = 0.0;
    Vec3 p{0, 0, 0};
    for (int k = 0; k < steps; ++k) {
        double ds = step_speed(spec, k, steps, sp) * dt;
        Vec3 dir = heading_forward(psi);
        if (spec.kind == MotionKind::Reverse) dir = -dir;
        p = p + dir * ds;
        if (ds > 0.0) psi += step_curvature(spec, k, steps, sp) * ds;
        positions[size_t(k) + 1] = p;
        headings[size_t(k) + 1] = psi;
    }

    MotionSample out;
    out.trajectory.positions = positions;
    out.trajectory.orientations.resize(size_t(spec.frame_count));
    out.trajectory.orientations[0] = Quat::identity();
    out.relative.fps = spec.fps;
    out.relative.steps.reserve(size_t(steps));

    for (int k = 1; k < spec.frame_count; ++k) {
        double yaw_wobble = rng.normal(0.0, sigma_yaw);
        double pitch_wobble = rng.normal(0.0, sigma_pitch);
        Quat orient = heading_orientation(headings[size_t(k)] + yaw_wobble) *
                      Quat::from_axis_angle({1, 0, 0}, pitch_wobble);
        out.trajectory.orientations[size_t(k)] = quat_canonicalize(orient);
    }
    for (int k = 0; k < steps; ++k) {
        const Quat& r_k = out.trajectory.orientations[size_t(k)];
        RelativePose rel;
        rel.translation = r_k.conjugate().rotate(positions[size_t(k) + 1] - positions[size_t(k)]);
        rel.rotation =
            quat_canonicalize(r_k.conjugate() * out.trajectory.orientations[size_t(k) + 1]);
        out.relative.steps.push_back(rel);
    }
    return out;
}

World build_world(const WorldSpec& spec, const MotionSpec& motion, uint64_t clip_seed) {
    // Wobble-free nominal path at 4 fps spanning the 1-fps clip duration, so
    // obstacle placement covers every frame rate the clip can be sampled at.
    MotionSpec nominal = motion;
    nominal.fps = 4.0;
    nominal.frame_count = (motion.frame_count - 1) * 4 + 1;
    nominal.heading_jitter_deg = 0.0;
    nominal.pitch_jitter_deg = 0.0;
    MotionSample path = sample_motion(nominal, clip_seed);

    World world;
    world.spec = spec;
    Rng rng(spec.seed);
    world.boxes.reserve(size_t(spec.obstacle_count));
    size_t n_path = path.trajectory.positions.size();

    for (int i = 0; i < spec.obstacle_count; ++i) {
        size_t idx = rng.below(n_path);
        Vec3 anchor = path.trajectory.positions[idx];
        // Recover the nominal yaw from the stored orientation's forward axis.
        Vec3 fwd = path.trajectory.orientations[idx].rotate({0, 0, 1});
        double psi = std::atan2(-fwd.x, fwd.z);

        double along = rng.uniform(-10.0, 25.0);
        double side = rng.uniform(2.5, 35.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        Vec3 center = anchor + heading_forward(psi) * along + heading_right(psi) * side;

        bool pole = rng.uniform() < 0.3;
        double half_w, half_d, height;
        if (pole) {
            half_w = half_d = rng.uniform(0.06, 0.18);
            height = rng.uniform(2.5, 6.0);
        } else {
            half_w = rng.uniform(0.2, 1.8);
            half_d = rng.uniform(0.2, 1.8);
            height = rng.uniform(0.6, 4.5);
        }

        Box box;
        box.lo = {center.x - half_w, world.ground_y - height, center.z - half_d};
        box.hi = {center.x + half_w, world.ground_y, center.z + half_d};
        hsv_to_rgb(double(i) * 0.61803398875 + rng.uniform() * 0.05,
                   rng.uniform(0.55, 0.95), rng.uniform(0.5, 0.95), box.color);
        world.boxes.push_back(box);
    }
    return world;
}

Image render_frame(const World& world, const Vec3& position, const Quat& orientation,
                   double fov_rad, int width, int height) {
    if (!(fov_rad > 0.0 && fov_rad < kPi))
        throw std::invalid_argument("render_frame: fov must lie in (0, pi)");
    Image img(width, height);
    double tan_hx = std::tan(0.5 * fov_rad);
    double tan_hy = tan_hx * double(height) / double(width);
    double ambient = world.spec.ambient;
    const Vec3 light{0.35, -0.82, 0.45}; // from above (y is down)
    double light_norm = light.norm();

    for (int py = 0; py < height; ++py) {
        double ry = ((py + 0.5) / double(height) * 2.0 - 1.0) * tan_hy;
        for (int px = 0; px < width; ++px) {
            double rx = ((px + 0.5) / double(width) * 2.0 - 1.0) * tan_hx;
            Vec3 dir = orientation.rotate({rx, ry, 1.0});

            RayHit best;
            best.t = 1e30;
            bool any = false;
            if (dir.y > 1e-9) {
                double t = (world.ground_y - position.y) / dir.y;
                if (t > 1e-4) {
                    best.t = t;
                    best.ground = true;
                    any = true;
                }
            }
            for (const Box& box : world.boxes) {
                RayHit hit;
                if (intersect_box(box, position, dir, best.t, hit)) {
                    best = hit;
                    any = true;
                }
            }

            double r, g, b;
            if (!any) {
                r = 152;
                g = 186;
                b = 214; // flat sky
            } else if (best.ground) {
                Vec3 hp = position + dir * best.t;
                double v = ground_value(world.spec.seed, hp.x, hp.z,
                                        world.spec.ground_texture_scale);
                r = 92.0 + 62.0 * v;
                g = 102.0 + 58.0 * v;
                b = 84.0 + 52.0 * v;
            } else {
                double lambert = std::abs(best.normal.dot(light)) / light_norm;
                double shade = 0.55 + 0.45 * lambert;
                r = best.box->color[0] * shade;
                g = best.box->color[1] * shade;
                b = best.box->color[2] * shade;
            }
            uint8_t* out = img.pixel(px, py);
            out[0] = uint8_t(std::clamp(std::lround(r * ambient), 0L, 255L));
            out[1] = uint8_t(std::clamp(std::lround(g * ambient), 0L, 255L));
            out[2] = uint8_t(std::clamp(std::lround(b * ambient), 0L, 255L));
        }
    }
    return img;
}

std::vector<Image> render_sequence(const World& world, const Trajectory& poses, double fov_rad,
                                   int width, int height) {
    std::vector<Image> frames;
    frames.reserve(poses.frame_count());
    for (size_t i = 0; i < poses.frame_count(); ++i)
        frames.push_back(render_frame(world, poses.positions[i], poses.orientations[i], fov_rad,
                                      width, height));
    return frames;
}

std::optional<std::pair<double, double>> project_point(const Vec3& point, const Vec3& cam_pos,
                                                       const Quat& cam_orient, double fov_rad,
                                                       int width, int height) {
    Vec3 c = cam_orient.conjugate().rotate(point - cam_pos);
    if (c.z <= 1e-9) return std::nullopt;
    double tan_hx = std::tan(0.5 * fov_rad);
    double tan_hy = tan_hx * double(height) / double(width);
    double xn = c.x / (c.z * tan_hx);
    double yn = c.y / (c.z * tan_hy);
    return std::make_pair((xn + 1.0) * 0.5 * width - 0.5, (yn + 1.0) * 0.5 * height - 0.5);
}

Clip make_clip(const ClipSpec& spec, double fps_override, int width, int height) {
    MotionSpec motion = spec.motion;
    if (fps_override > 0.0) motion.fps = fps_override;
    MotionSample sample = sample_motion(motion, spec.clip_seed);
    World world = build_world(spec.world, spec.motion, spec.clip_seed);

    Clip clip;
    clip.frames = render_sequence(world, sample.trajectory, spec.fov_rad, width, height);
    clip.gt_poses = sample.relative;
    for (auto& step : clip.gt_poses.steps) step.fov = spec.fov_rad;
    clip.gt_trajectory = std::move(sample.trajectory);
    clip.gt_fov = spec.fov_rad;
    clip.motion_label = spec.motion.kind;
    return clip;
}

std::string poses_to_text(const PoseSequence& seq) {
    std::string out;
    char line[256];
    for (size_t i = 0; i < seq.steps.size(); ++i) {
        const auto& s = seq.steps[i];
        std::snprintf(line, sizeof(line), "%zu %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", i,
                      s.translation.x, s.translation.y, s.translation.z, s.rotation.w,
                      s.rotation.x, s.rotation.y, s.rotation.z);
        out += line;
    }
    return out;
}

PoseSequence poses_from_text(const std::string& text, double fps) {
    PoseSequence seq;
    seq.fps = fps;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        size_t idx;
        RelativePose s;
        if (!(ls >> idx >> s.translation.x >> s.translation.y >> s.translation.z >> s.rotation.w >>
              s.rotation.x >> s.rotation.y >> s.rotation.z))
            throw std::runtime_error("poses_from_text: malformed line: " + line);
        seq.steps.push_back(s);
    }
    return seq;
}

std::string clip_spec_to_json(const ClipSpec& spec, const std::string& split) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["clip_id"] = spec.clip_id;
    j["split"] = split;
    j["fps"] = spec.motion.fps;
    j["fov_rad"] = spec.fov_rad;
    j["motion_kind"] = motion_kind_name(spec.motion.kind);
    j["seed"] = spec.clip_seed;
    j["frame_count"] = spec.motion.frame_count;
    j["speed_mps"] = spec.motion.speed_mps;
    j["curvature"] = spec.motion.curvature;
    j["heading_jitter_deg"] = spec.motion.heading_jitter_deg;
    j["pitch_jitter_deg"] = spec.motion.pitch_jitter_deg;
    j["world_seed"] = spec.world.seed;
    j["obstacle_count"] = spec.world.obstacle_count;
    j["ambient"] = spec.world.ambient;
    j["ground_texture_scale"] = spec.world.ground_texture_scale;
    return j.dump(2) + "\n";
}

ClipSpec load_clip_spec(const std::filesystem::path& clip_dir) {
    auto j = nlohmann::json::parse(read_text_file(clip_dir / "meta.json"));
    ClipSpec spec;
    spec.clip_id = j.at("clip_id").get<std::string>();
    spec.motion.fps = j.at("fps").get<double>();
    spec.fov_rad = j.at("fov_rad").get<double>();
    spec.motion.kind = motion_kind_from_name(j.at("motion_kind").get<std::string>());
    spec.clip_seed = j.at("seed").get<uint64_t>();
    spec.motion.frame_count = j.at("frame_count").get<int>();
    spec.motion.speed_mps = j.at("speed_mps").get<double>();
    spec.motion.curvature = j.at("curvature").get<double>();
    spec.motion.heading_jitter_deg = j.at("heading_jitter_deg").get<double>();
    spec.motion.pitch_jitter_deg = j.at("pitch_jitter_deg").get<double>();
    spec.world.seed = j.at("world_seed").get<uint64_t>();
    spec.world.obstacle_count = j.at("obstacle_count").get<int>();
    spec.world.ambient = j.at("ambient").get<double>();
    spec.world.ground_texture_scale = j.at("ground_texture_scale").get<double>();
    return spec;
}

Clip load_clip(const std::filesystem::path& clip_dir) {
    ClipSpec spec = load_clip_spec(clip_dir);
    Clip clip;
    clip.frames.reserve(size_t(spec.motion.frame_count));
    for (int i = 0; i < spec.motion.frame_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03d.png", i);
        clip.frames.push_back(read_png(clip_dir / name));
    }
    clip.gt_poses = poses_from_text(read_text_file(clip_dir / "poses.txt"), spec.motion.fps);
    for (auto& step : clip.gt_poses.steps) step.fov = spec.fov_rad;
    clip.gt_trajectory = compose_trajectory(clip.gt_poses);
    clip.gt_fov = spec.fov_rad;
    clip.motion_label = spec.motion.kind;
    return clip;
}

std::vector<std::filesystem::path> list_clip_dirs(const std::filesystem::path& split_dir) {
    std::vector<std::filesystem::path> dirs;
    if (!std::filesystem::exists(split_dir)) return dirs;
    for (const auto& entry : std::filesystem::directory_iterator(split_dir))
        if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

namespace {

ClipSpec draw_clip_spec(const DatasetOptions& opts, int index) {
    Rng rng = Rng::derive(opts.seed, uint64_t(index));

    MotionKind kind;
    if (!opts.kinds.empty()) {
        kind = opts.kinds[rng.below(opts.kinds.size())];
    } else if (rng.uniform() < opts.reverse_rate) {
        kind = MotionKind::Reverse;
    } else {
        const MotionKind pool[5] = {MotionKind::Straight, MotionKind::LeftTurn,
                                    MotionKind::RightTurn, MotionKind::SCurve,
                                    MotionKind::StopAndGo};
        kind = pool[rng.below(5)];
    }

    ClipSpec spec;
    spec.motion.kind = kind;
    spec.motion.speed_mps = rng.uniform(3.0, 14.0);
    double mag = std::exp(rng.uniform(std::log(0.005), std::log(0.3)));
    switch (kind) {
        case MotionKind::LeftTurn: spec.motion.curvature = mag; break;
        case MotionKind::RightTurn: spec.motion.curvature = -mag; break;
        case MotionKind::SCurve: spec.motion.curvature = mag; break;
        default: spec.motion.curvature = 0.0; break;
    }
    spec.motion.fps = (opts.split == "eval") ? 2.0 : double(1 + rng.below(4));
    spec.motion.frame_count = 16;
    spec.fov_rad = rng.uniform(50.0, 75.0) * kPi / 180.0;
    spec.world.seed = rng.next_u64();
    spec.world.obstacle_count = int(20 + rng.below(41));
    spec.world.ambient = rng.uniform(0.7, 1.0);
    spec.clip_seed = rng.next_u64();
    char id[32];
    std::snprintf(id, sizeof(id), "clip_%05d", index);
    spec.clip_id = id;
    return spec;
}

void write_clip(const DatasetOptions& opts, const ClipSpec& spec) {
    auto dir = opts.out_dir / opts.split / spec.clip_id;
    std::filesystem::create_directories(dir);
    Clip clip = make_clip(spec, 0.0, opts.width, opts.height);
    for (size_t i = 0; i < clip.frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03zu.png", i);
        write_png(dir / name, clip.frames[i]);
    }
    write_text_file(dir / "poses.txt", poses_to_text(clip.gt_poses));
    write_text_file(dir / "meta.json", clip_spec_to_json(spec, opts.split));
}

} // namespace

void generate_dataset(const DatasetOptions& opts) {
    if (opts.n_clips < 1) throw std::invalid_argument("generate_dataset: n_clips must be >= 1");
    if (opts.split != "train" && opts.split != "eval" && opts.split != "probe")
        throw std::invalid_argument("generate_dataset: unknown split: " + opts.split);
    std::filesystem::create_directories(opts.out_dir / opts.split);

    int jobs = std::max(1, opts.jobs);
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex error_mu;

    auto work = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= opts.n_clips || failed.load()) return;
            try {
                write_clip(opts, draw_clip_spec(opts, i));
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mu);
                failed.store(true);
                if (error.empty()) error = e.what();
                return;
            }
        }
    };
    for (int w = 0; w < jobs; ++w) workers.emplace_back(work);
    for (auto& w : workers) w.join();
    if (failed.load()) throw std::runtime_error("generate_dataset: " + error);
}

} // namespace lapose
