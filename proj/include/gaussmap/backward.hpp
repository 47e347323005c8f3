#pragma once

// Analytic gradients of the photometric loss with respect to every Gaussian
// parameter. The forward compositing order is replayed per pixel from the
// retained tile lists; the "color behind" term is accumulated back to front
// so no division by (1 - alpha) is needed.

#include <cstdint>
#include <vector>

#include "gaussmap/loss.hpp"
#include "gaussmap/params.hpp"
#include "gaussmap/render.hpp"

namespace gaussmap {

struct ParamGrads {
    std::vector<ParamBlock> d; // one block per Gaussian; rotation part is tangent-projected
    // |d loss / d center| in normalized device units (pixel gradient scaled
    // by half the image size); zero for Gaussians not visible in this view.
    std::vector<double> screen_grad;
    std::vector<std::uint8_t> visible;

    explicit ParamGrads(std::size_t n = 0) : d(n, ParamBlock{}), screen_grad(n, 0.0), visible(n, 0) {}
    std::size_t size() const { return d.size(); }
};

namespace backward_detail {

struct SplatGrad {
    Vec2 center = Vec2::Zero();
    Vec3 conic = Vec3::Zero();
    double opacity = 0; // d/d sigma
    Vec3 color = Vec3::Zero();
};

// d L / d q for R(q / |q|) given G = d L / d R, projected onto the tangent
// space of the unit sphere and divided by |q|.
inline Vec4 quat_grad(const QuatWXYZ &q_raw, const Mat3 &g) {
    const double n = q_raw.norm();
    const Vec4 q = q_raw / n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 d;
    d[0] = 2 * (z * (g(1, 0) - g(0, 1)) + y * (g(0, 2) - g(2, 0)) + x * (g(2, 1) - g(1, 2)));
    d[1] = 2 * (y * (g(1, 0) + g(0, 1)) + z * (g(2, 0) + g(0, 2)) + w * (g(2, 1) - g(1, 2))) - 4 * x * (g(2, 2) + g(1, 1));
    d[2] = 2 * (x * (g(1, 0) + g(0, 1)) + w * (g(0, 2) - g(2, 0)) + z * (g(2, 1) + g(1, 2))) - 4 * y * (g(2, 2) + g(0, 0));
    d[3] = 2 * (w * (g(1, 0) - g(0, 1)) + x * (g(2, 0) + g(0, 2)) + y * (g(2, 1) + g(1, 2))) - 4 * z * (g(1, 1) + g(0, 0));
    return (d - q * q.dot(d)) / n;
}

} // namespace backward_detail

/// Gradients of the loss behind `dloss_dimage` (as produced by
/// photometric_loss with want_grad) for the scene that produced `out`.
inline ParamGrads backward(const RenderOutput &out, const ImageBuffer &dloss_dimage, const Scene &scene) {
    using backward_detail::SplatGrad;
    if (scene.size() != out.gaussian_count || scene_fingerprint(scene) != out.scene_fingerprint)
        throw Error("backward: scene changed since the forward pass");
    if (!dloss_dimage.same_size(out.image)) throw Error("backward: gradient image size mismatch");

    const Camera &cam = out.camera;
    const CameraIntrinsics &k = cam.intrinsics;
    const RenderSettings &rs = out.settings;
    const int w = k.width, h = k.height;

    std::vector<SplatGrad> sg(out.splats.size());
    struct Hit {
        std::uint32_t si;
        double g, alpha, t;
    };
    const int ts = rs.tile_size;
    std::vector<std::vector<Hit>> hits(ts);
    std::vector<double> tfinal(ts);
    for (int py = 0; py < h; ++py) {
        for (int tx = 0; tx < out.tiles_x; ++tx) {
            const int x0 = tx * ts;
            for (auto &hv : hits) hv.clear();
            for_each_row_contribution(out, py, tx, tfinal.data(), [&](int px, std::uint32_t si, double g, double alpha, double t) {
                hits[px - x0].push_back({si, g, alpha, t});
            });
            for (int px = x0; px < std::min(w, x0 + ts); ++px) {
                const Vec3 dl = dloss_dimage.pixel(px, py);
                if (dl.isZero(0.0)) continue;
                const std::vector<Hit> &ph = hits[px - x0];
                Vec3 behind = rs.background;
                for (auto it = ph.rbegin(); it != ph.rend(); ++it) {
                    const Splat2D &s = out.splats[it->si];
                    SplatGrad &acc = sg[it->si];
                    acc.color += dl * (it->alpha * it->t);
                    const double dl_dalpha = it->t * dl.dot(s.color - behind);
                    behind = s.color * it->alpha + behind * (1.0 - it->alpha);

                    acc.opacity += dl_dalpha * it->g;
                    const double dl_dpower = dl_dalpha * s.opacity * it->g;
                    const double dx = px - s.center.x(), dy = py - s.center.y();
                    const Vec3 &q = s.conic;
                    acc.center.x() += dl_dpower * (q[0] * dx + q[1] * dy);
                    acc.center.y() += dl_dpower * (q[1] * dx + q[2] * dy);
                    acc.conic += dl_dpower * Vec3(-0.5 * dx * dx, -dx * dy, -0.5 * dy * dy);
                }
            }
        }
    }

    ParamGrads grads(scene.size());
    const Mat3 wrot = cam.pose.rotation_matrix().transpose();
    const int active = sh_count_for_degree(std::clamp(rs.sh_degree, 0, 2));
    for (std::size_t si = 0; si < out.splats.size(); ++si) {
        const Splat2D &s = out.splats[si];
        const SplatGrad &a = sg[si];
        const SurfaceGaussian &gs = scene[s.gaussian_id];
        ParamBlock &d = grads.d[s.gaussian_id];
        grads.visible[s.gaussian_id] = 1;
        grads.screen_grad[s.gaussian_id] = Vec2(a.center.x() * 0.5 * w, a.center.y() * 0.5 * h).norm();

        // opacity
        d[kOpacityOffset] = a.opacity * s.opacity * (1.0 - s.opacity);

        // color -> SH coefficients and direction
        const Vec3 draw = a.color.cwiseProduct(s.color_active.cast<double>().matrix());
        const double dn = s.dir_raw.norm();
        const Vec3 dir = dn > 0 ? Vec3(s.dir_raw / dn) : Vec3::UnitZ();
        const ShBasis9 basis = sh_basis_truncated(dir, rs.sh_degree);
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < active; ++j) d[kShOffset + 9 * c + j] = draw[c] * basis[j];
        Vec3 dl_dmean = Vec3::Zero();
        Vec3 dl_dp = Vec3::Zero();
        if (active > 1 && dn > 0) {
            Eigen::Matrix<double, 9, 1> dl_dbasis = gs.sh.transpose() * draw;
            for (int j = active; j < 9; ++j) dl_dbasis[j] = 0;
            const Vec3 dl_ddir = sh_basis_jacobian(dir).transpose() * dl_dbasis;
            const Vec3 dl_draw_dir = (dl_ddir - dir * dir.dot(dl_ddir)) / dn;
            if (rs.sh_frame == ShFrame::Camera)
                dl_dp += dl_draw_dir;
            else
                dl_dmean += dl_draw_dir;
        }

        // conic -> screen covariance
        Mat2 qm;
        qm << s.conic[0], s.conic[1], s.conic[1], s.conic[2];
        Mat2 gq;
        gq << a.conic[0], 0.5 * a.conic[1], 0.5 * a.conic[1], a.conic[2];
        const Mat2 gc = -qm * gq * qm;

        // screen covariance -> 3D covariance and Jacobian
        const Vec3 &p = s.p_cam;
        const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(p, k);
        const Eigen::Matrix<double, 2, 3> t = jac * wrot;
        const Mat3 r = rotation_matrix(gs.rotation);
        const Vec3 var = (2.0 * gs.scale).array().exp();
        const Mat3 sigma = r * var.asDiagonal() * r.transpose();
        const Mat3 gsigma = t.transpose() * gc * t;
        const Eigen::Matrix<double, 2, 3> gt = 2.0 * gc * t * sigma;
        const Eigen::Matrix<double, 2, 3> gj = gt * wrot.transpose();

        // J02 = -fx u / z with u = x / z, or u held at its clamp bound
        const double iz = 1.0 / p.z(), iz2 = iz * iz, iz3 = iz2 * iz;
        const JacobianRatio jr = jacobian_ratio(p, k);
        const double dj02_dx = jr.clamped_x ? 0.0 : -k.fx * iz2;
        const double dj12_dy = jr.clamped_y ? 0.0 : -k.fy * iz2;
        const double dj02_dz = jr.clamped_x ? k.fx * jr.uv.x() * iz2 : 2 * k.fx * p.x() * iz3;
        const double dj12_dz = jr.clamped_y ? k.fy * jr.uv.y() * iz2 : 2 * k.fy * p.y() * iz3;
        dl_dp.x() += gj(0, 2) * dj02_dx + a.center.x() * k.fx * iz;
        dl_dp.y() += gj(1, 2) * dj12_dy + a.center.y() * k.fy * iz;
        dl_dp.z() += gj(0, 0) * (-k.fx * iz2) + gj(0, 2) * dj02_dz + gj(1, 1) * (-k.fy * iz2) + gj(1, 2) * dj12_dz +
                     a.center.x() * (-k.fx * p.x() * iz2) + a.center.y() * (-k.fy * p.y() * iz2);
        dl_dmean += wrot.transpose() * dl_dp;
        for (int i = 0; i < 3; ++i) d[kMeanOffset + i] = dl_dmean[i];

        // 3D covariance -> log-scales and rotation
        for (int i = 0; i < 3; ++i) {
            const Vec3 ri = r.col(i);
            d[kScaleOffset + i] = 2.0 * var[i] * ri.dot(gsigma * ri);
        }
        const Mat3 gr = 2.0 * gsigma * r * var.asDiagonal();
        const Vec4 dq = backward_detail::quat_grad(gs.rotation, gr);
        for (int i = 0; i < 4; ++i) d[kRotationOffset + i] = dq[i];
    }
    return grads;
}

} // namespace gaussmap
