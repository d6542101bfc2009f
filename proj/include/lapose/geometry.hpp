#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

namespace lapose {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
};

// Unit quaternion in (w, x, y, z) order. Canonical hemisphere is w >= 0; a tie
// at w == 0 is broken by the first nonzero component being positive.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quat identity() { return {}; }
    static Quat from_axis_angle(const Vec3& axis, double angle_rad);

    Quat conjugate() const { return {w, -x, -y, -z}; }
    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat operator*(const Quat& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z,
                w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w};
    }

    Vec3 rotate(const Vec3& v) const;
};

// Per-step ego-motion: translation of frame t+1 expressed in frame t's camera
// coordinates (x right, y down, z forward), rotation as a canonical unit
// quaternion, and the camera field-of-view in radians.
struct RelativePose {
    Vec3 translation;
    Quat rotation;
    double fov = 1.0;
};

// T-1 relative poses for a T-frame clip plus the frame rate they were sampled
// at. `normalized` marks translations divided by max(scale, epsilon).
struct PoseSequence {
    std::vector<RelativePose> steps;
    double fps = 1.0;
    bool normalized = false;
};

// Absolute camera poses with frame 0 pinned at the origin/identity.
struct Trajectory {
    std::vector<Vec3> positions;
    std::vector<Quat> orientations;

    size_t frame_count() const { return positions.size(); }
};

struct MetricScale {
    double s = 0.0; // meters; mean L2 norm of the per-step translations
};

struct RigidTransform {
    Quat rotation;
    Vec3 translation;

    Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
};

// Norm threshold below which a translation direction is considered degenerate
// and the pair is skipped in pairwise metrics.
inline constexpr double kDirectionDegeneracyNorm = 1e-3;

// Normalizes q and flips it onto the canonical hemisphere. Throws
// std::invalid_argument on a zero-norm quaternion.
Quat quat_canonicalize(const Quat& q);

// Geodesic rotation angle between two orientations, in degrees, in [0, 180].
double quat_geodesic_deg(const Quat& q1, const Quat& q2);

// Angle between two translation directions in degrees. Empty when either norm
// is at or below kDirectionDegeneracyNorm (degenerate pair, caller skips).
std::optional<double> translation_angle_deg(const Vec3& t1, const Vec3& t2);

// s = mean_i ||t_i||_2. Throws std::invalid_argument on an empty list.
MetricScale compute_metric_scale(const std::vector<Vec3>& translations);

// Divides every translation by max(s, epsilon); rotations and fov are left
// untouched. Returns the normalized sequence and the pre-clamp scale.
std::pair<PoseSequence, MetricScale> normalize_translations(const PoseSequence& seq,
                                                            double epsilon = 1.0);

// Chains relative poses into an absolute trajectory starting at the
// origin/identity. When `scale` is given the sequence must be normalized and
// every translation is multiplied by scale.s.
Trajectory compose_trajectory(const PoseSequence& seq,
                              const std::optional<MetricScale>& scale = std::nullopt);

// Pose of frame j expressed in frame i's camera coordinates, 0 <= i < j < T.
RelativePose relative_between(const Trajectory& traj, size_t i, size_t j);

struct UmeyamaResult {
    RigidTransform transform;
    // Covariance rank < 2 (e.g. collinear points): the residual is still
    // optimal but the rotation about the degenerate axis is arbitrary.
    bool rotation_ambiguous = false;
};

// Closed-form least-squares rigid alignment (no scale): argmin_{R,t} sum
// ||R p_i + t - q_i||^2 with det(R) = +1. Empty on N < 3 or a zero-rank
// covariance; the caller falls back to identity alignment and flags the clip.
std::optional<UmeyamaResult> umeyama_se3(const std::vector<Vec3>& p,
                                         const std::vector<Vec3>& q);

} // namespace lapose
