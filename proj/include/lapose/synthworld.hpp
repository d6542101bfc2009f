#pragma once

#include "lapose/geometry.hpp"
#include "lapose/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lapose {

enum class MotionKind { Straight, LeftTurn, RightTurn, SCurve, Reverse, StopAndGo };

const char* motion_kind_name(MotionKind k);
MotionKind motion_kind_from_name(const std::string& name);

// Constant-speed arc kinematics. Positive curvature turns left; the sign is
// paired with the kind by the dataset generator.
//
// Motion noise is camera-mount wobble: per-frame yaw/pitch orientation noise
// around the smooth path heading. The traveled path itself stays an exact
// arc, so step norms and recovered curvature are unaffected, while every
// frame-to-frame rotation (and the apparent camera-frame translation
// direction) carries an unpredictable component for the latent actions to
// encode. S-curve flip and stop-window times are drawn per clip.
struct MotionSpec {
    MotionKind kind = MotionKind::Straight;
    double speed_mps = 8.0;
    double curvature = 0.0; // 1/m
    double fps = 2.0;
    int frame_count = 16;
    double heading_jitter_deg = 2.5; // camera yaw wobble, per frame
    double pitch_jitter_deg = 1.5;   // camera pitch wobble, per frame
};

// Procedural scene: textured ground plane plus colored boxes and poles placed
// along the clip's nominal path. Same spec -> bit-identical world.
struct WorldSpec {
    uint64_t seed = 0;
    int obstacle_count = 40;
    double ambient = 1.0;
    double ground_texture_scale = 2.0; // meters per texture cell
};

// Everything needed to regenerate a clip at any frame rate.
struct ClipSpec {
    WorldSpec world;
    MotionSpec motion;
    double fov_rad = 1.0472; // horizontal field-of-view
    uint64_t clip_seed = 0;  // drives heading jitter
    std::string clip_id;
};

struct Clip {
    std::vector<Image> frames;
    PoseSequence gt_poses; // metric, frame-to-frame relative
    Trajectory gt_trajectory;
    double gt_fov = 0.0;
    MotionKind motion_label = MotionKind::Straight;
};

struct MotionSample {
    Trajectory trajectory;  // camera poses in frame-0 coordinates
    PoseSequence relative;  // metric steps between consecutive frames
};

// Axis-aligned obstacle with a flat color.
struct Box {
    Vec3 lo, hi;
    uint8_t color[3];
};

struct World {
    WorldSpec spec;
    std::vector<Box> boxes;
    double ground_y = 1.5; // y is down; the camera rides 1.5 m above ground
};

// Discrete constant-speed kinematics at the spec's frame rate: each step moves
// speed/fps meters along the current heading, then the heading advances by
// curvature * step_length. Step norms are exactly speed/fps for constant-speed
// kinds; camera wobble never touches the path.
MotionSample sample_motion(const MotionSpec& spec, uint64_t clip_seed);

// Obstacles are scattered along the wobble-free nominal path (same clip seed,
// so segment switch points match) so every frame rate sees a populated scene.
World build_world(const WorldSpec& spec, const MotionSpec& motion, uint64_t clip_seed);

// Pure pinhole raycaster; pixels depend only on (world, pose, fov).
Image render_frame(const World& world, const Vec3& position, const Quat& orientation,
                   double fov_rad, int width, int height);

std::vector<Image> render_sequence(const World& world, const Trajectory& poses, double fov_rad,
                                   int width, int height);

// Projects a world-space point into pixel coordinates; empty when behind the
// camera. Used by tests to check optical-flow direction analytically.
std::optional<std::pair<double, double>> project_point(const Vec3& point, const Vec3& cam_pos,
                                                       const Quat& cam_orient, double fov_rad,
                                                       int width, int height);

// Full in-memory clip generation; fps_override > 0 re-samples the same
// underlying motion spec at a different frame rate.
Clip make_clip(const ClipSpec& spec, double fps_override = 0.0, int width = 64, int height = 32);

struct DatasetOptions {
    std::filesystem::path out_dir;
    std::string split = "train";
    int n_clips = 1;
    uint64_t seed = 0;
    double reverse_rate = 0.02;
    std::vector<MotionKind> kinds; // empty -> default mix with reverse_rate
    int width = 64;
    int height = 32;
    int jobs = 1;
};

// Writes <out_dir>/<split>/<clip_id>/{frame_%03d.png, poses.txt, meta.json}.
// Eval splits are stored at 2 fps; train clips sample fps from {1,2,3,4}.
void generate_dataset(const DatasetOptions& opts);

ClipSpec load_clip_spec(const std::filesystem::path& clip_dir);
Clip load_clip(const std::filesystem::path& clip_dir);
std::vector<std::filesystem::path> list_clip_dirs(const std::filesystem::path& split_dir);

std::string clip_spec_to_json(const ClipSpec& spec, const std::string& split);
std::string poses_to_text(const PoseSequence& seq);
PoseSequence poses_from_text(const std::string& text, double fps);

} // namespace lapose
