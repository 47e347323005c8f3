#pragma once

// Real spherical harmonics up to degree 2 and view-dependent color.
//
// Basis order: (0,0) (1,-1) (1,0) (1,1) (2,-2) (2,-1) (2,0) (2,1) (2,2),
// orthonormal over the unit sphere with the Condon-Shortley phase.

#include <algorithm>
#include <array>
#include <cmath>

#include "gaussmap/core.hpp"

namespace gaussmap {

using ShBasis9 = Eigen::Matrix<double, 9, 1>;

namespace sh_detail {
inline constexpr double C1 = 0.4886025119029199;
inline constexpr double C2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                 -1.0925484305920792, 0.5462742152960396};
} // namespace sh_detail

enum class ShFrame { Camera, World };

/// Number of active coefficients per channel for an SH degree.
inline constexpr int sh_count_for_degree(int degree) { return (degree + 1) * (degree + 1); }

/// Basis values at a unit direction.
inline ShBasis9 sh_basis(const Vec3 &d) {
    using namespace sh_detail;
    const double x = d.x(), y = d.y(), z = d.z();
    ShBasis9 b;
    b << kShY00, -C1 * y, C1 * z, -C1 * x, C2[0] * x * y, C2[1] * y * z,
        C2[2] * (2 * z * z - x * x - y * y), C2[3] * x * z, C2[4] * (x * x - y * y);
    return b;
}

/// Partial derivatives of each basis polynomial with respect to (x, y, z).
/// Row j holds dY_j/d(x, y, z) evaluated without renormalization.
inline Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Vec3 &d) {
    using namespace sh_detail;
    const double x = d.x(), y = d.y(), z = d.z();
    Eigen::Matrix<double, 9, 3> j;
    j << 0, 0, 0,
         0, -C1, 0,
         0, 0, C1,
         -C1, 0, 0,
         C2[0] * y, C2[0] * x, 0,
         0, C2[1] * z, C2[1] * y,
         -2 * C2[2] * x, -2 * C2[2] * y, 4 * C2[2] * z,
         C2[3] * z, 0, C2[3] * x,
         2 * C2[4] * x, -2 * C2[4] * y, 0;
    return j;
}

struct ViewDirection {
    Vec3 dir;     // unit, camera frame
    double theta; // polar angle from +z, [0, pi]
    double phi;   // azimuth, (-pi, pi]
};

/// Direction of a world point as seen from a camera, in the camera frame.
inline ViewDirection view_direction(const Vec3 &point, const Pose &camera_to_world) {
    const Vec3 v = camera_to_world.inverse().apply(point);
    const double n = v.norm();
    if (!(n > 1e-9)) throw Error("view_direction: degenerate direction");
    ViewDirection out;
    out.dir = v / n;
    out.theta = std::acos(std::clamp(out.dir.z(), -1.0, 1.0));
    out.phi = std::atan2(out.dir.y(), out.dir.x());
    return out;
}

/// Color before the clamp: sum_j k_j Y_j(dir) + 0.5 per channel.
inline Vec3 eval_sh_unclamped(const ShCoeffs &sh, const Vec3 &dir) {
    return sh * sh_basis(dir) + Vec3::Constant(0.5);
}

inline Vec3 eval_sh_color(const ShCoeffs &sh, const Vec3 &dir) {
    return eval_sh_unclamped(sh, dir).cwiseMax(0.0);
}

/// DC coefficient that renders as `rgb` when all higher orders are zero.
inline Vec3 rgb_to_sh_dc(const Vec3 &rgb) { return (rgb - Vec3::Constant(0.5)) / kShY00; }
inline Vec3 sh_dc_to_rgb(const Vec3 &dc) { return dc * kShY00 + Vec3::Constant(0.5); }

} // namespace gaussmap
