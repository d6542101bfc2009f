#include "lapose/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <stdexcept>

namespace lapose {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kRadToDeg = 180.0 / kPi;
} // namespace

Quat Quat::from_axis_angle(const Vec3& axis, double angle_rad) {
    double n = axis.norm();
    if (n == 0.0) return Quat::identity();
    double half = 0.5 * angle_rad;
    double s = std::sin(half) / n;
    return {std::cos(half), axis.x * s, axis.y * s, axis.z * s};
}

Vec3 Quat::rotate(const Vec3& v) const {
    // v' = v + 2w(u x v) + 2(u x (u x v)), u = (x, y, z)
    Vec3 u{x, y, z};
    Vec3 t = u.cross(v) * 2.0;
    return v + t * w + u.cross(t);
}

Quat quat_canonicalize(const Quat& q) {
    double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n))
        throw std::invalid_argument("quat_canonicalize: zero-norm quaternion is not a rotation");
    Quat r{q.w / n, q.x / n, q.y / n, q.z / n};
    double sign = 0.0;
    for (double c : {r.w, r.x, r.y, r.z}) {
        if (c != 0.0) {
            sign = c > 0.0 ? 1.0 : -1.0;
            break;
        }
    }
    if (sign < 0.0) r = {-r.w, -r.x, -r.y, -r.z};
    return r;
}

double quat_geodesic_deg(const Quat& q1, const Quat& q2) {
    Quat a = quat_canonicalize(q1);
    Quat b = quat_canonicalize(q2);
    double dot = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
    double c = std::clamp(std::abs(dot), 0.0, 1.0);
    return 2.0 * std::acos(c) * kRadToDeg;
}

std::optional<double> translation_angle_deg(const Vec3& t1, const Vec3& t2) {
    double n1 = t1.norm();
    double n2 = t2.norm();
    if (n1 <= kDirectionDegeneracyNorm || n2 <= kDirectionDegeneracyNorm) return std::nullopt;
    double c = std::clamp(t1.dot(t2) / (n1 * n2), -1.0, 1.0);
    return std::acos(c) * kRadToDeg;
}

MetricScale compute_metric_scale(const std::vector<Vec3>& translations) {
    if (translations.empty())
        throw std::invalid_argument("compute_metric_scale: empty translation list");
    double sum = 0.0;
    for (const auto& t : translations) sum += t.norm();
    return MetricScale{sum / static_cast<double>(translations.size())};
}

std::pair<PoseSequence, MetricScale> normalize_translations(const PoseSequence& seq,
                                                            double epsilon) {
    if (seq.normalized)
        throw std::invalid_argument("normalize_translations: sequence already normalized");
    std::vector<Vec3> ts;
    ts.reserve(seq.steps.size());
    for (const auto& s : seq.steps) ts.push_back(s.translation);
    MetricScale scale = compute_metric_scale(ts);
    double divisor = std::max(scale.s, epsilon);

    PoseSequence out = seq;
    out.normalized = true;
    for (auto& s : out.steps) s.translation = s.translation * (1.0 / divisor);
    return {out, scale};
}

Trajectory compose_trajectory(const PoseSequence& seq, const std::optional<MetricScale>& scale) {
    if (seq.steps.empty()) throw std::invalid_argument("compose_trajectory: empty sequence");
    if (scale.has_value() && !seq.normalized)
        throw std::invalid_argument("compose_trajectory: scale given for a metric sequence");
    double s = scale.has_value() ? scale->s : 1.0;

    Trajectory traj;
    traj.positions.reserve(seq.steps.size() + 1);
    traj.orientations.reserve(seq.steps.size() + 1);
    traj.positions.push_back({0, 0, 0});
    traj.orientations.push_back(Quat::identity());
    for (const auto& step : seq.steps) {
        const Vec3& p = traj.positions.back();
        const Quat& r = traj.orientations.back();
        traj.positions.push_back(p + r.rotate(step.translation * s));
        traj.orientations.push_back(quat_canonicalize(r * step.rotation));
    }
    return traj;
}

RelativePose relative_between(const Trajectory& traj, size_t i, size_t j) {
    if (!(i < j) || j >= traj.frame_count())
        throw std::out_of_range("relative_between: need 0 <= i < j < T");
    const Quat& ri = traj.orientations[i];
    Quat ri_inv = ri.conjugate();
    RelativePose rel;
    rel.translation = ri_inv.rotate(traj.positions[j] - traj.positions[i]);
    rel.rotation = quat_canonicalize(ri_inv * traj.orientations[j]);
    return rel;
}

std::optional<UmeyamaResult> umeyama_se3(const std::vector<Vec3>& p,
                                         const std::vector<Vec3>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("umeyama_se3: size mismatch");
    size_t n = p.size();
    if (n < 3) return std::nullopt;

    Eigen::Vector3d mu_p = Eigen::Vector3d::Zero();
    Eigen::Vector3d mu_q = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < n; ++i) {
        mu_p += Eigen::Vector3d(p[i].x, p[i].y, p[i].z);
        mu_q += Eigen::Vector3d(q[i].x, q[i].y, q[i].z);
    }
    mu_p /= double(n);
    mu_q /= double(n);

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    double spread_p = 0.0;
    for (size_t i = 0; i < n; ++i) {
        Eigen::Vector3d dp = Eigen::Vector3d(p[i].x, p[i].y, p[i].z) - mu_p;
        Eigen::Vector3d dq = Eigen::Vector3d(q[i].x, q[i].y, q[i].z) - mu_q;
        cov += dq * dp.transpose();
        spread_p += dp.squaredNorm();
    }

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d sv = svd.singularValues();

    // Rank test against the point spread: zero rank leaves the rotation fully
    // undetermined; rank one (collinear points) still has an optimal residual
    // but an arbitrary rotation about the line.
    double ref = std::max(spread_p, 1e-30);
    if (sv(0) <= 1e-12 * ref) return std::nullopt;

    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((u * v.transpose()).determinant() < 0.0) d(2, 2) = -1.0; // reflection correction
    Eigen::Matrix3d r = u * d * v.transpose();
    Eigen::Vector3d t = mu_q - r * mu_p;

    Eigen::Quaterniond eq(r);
    UmeyamaResult out;
    out.transform.rotation = quat_canonicalize({eq.w(), eq.x(), eq.y(), eq.z()});
    out.transform.translation = {t(0), t(1), t(2)};
    out.rotation_ambiguous = sv(1) <= 1e-9 * ref;
    return out;
}

} // namespace lapose
