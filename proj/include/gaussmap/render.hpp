#pragma once

// Tile-based forward splat renderer: EWA projection of 3D Gaussians into
// screen space, per-tile depth sorting, and front-to-back alpha compositing.
//
// Pixel (px, py) samples the image plane at integer coordinates, so a
// Gaussian centred on the optical axis lands exactly on pixel (cx, cy) when
// the principal point is integral.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <optional>
#include <vector>

#include "gaussmap/core.hpp"
#include "gaussmap/sh.hpp"

namespace gaussmap {

struct Camera {
    Pose pose; // camera-to-world
    CameraIntrinsics intrinsics;
};

inline Camera camera_of(const View &v) { return {v.pose, v.intrinsics}; }

struct RenderSettings {
    double near_clip = 0.05;
    int tile_size = 16;
    double lowpass = 0.3; // px^2 added to every screen covariance

    // Half-width of the screen bound in standard deviations. At
    // sqrt(2 ln 255) a full-opacity kernel has decayed to 1/255, the same
    // level the faint-contribution skip discards.
    double support_sigmas = 3.3290429;

    bool skip_faint = true;
    double skip_alpha = 1.0 / 255.0;
    bool early_stop = true;
    double min_transmittance = 1e-4;

    Vec3 background = Vec3::Zero();
    ShFrame sh_frame = ShFrame::Camera;
    int sh_degree = 2;

    /// No skip thresholds; used by oracle comparisons.
    static RenderSettings exact() {
        RenderSettings s;
        s.skip_faint = false;
        s.early_stop = false;
        return s;
    }
};

/// Screen-space footprint of one Gaussian for one camera.
struct Splat2D {
    Vec2 center = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Vec3 conic = Vec3::Zero(); // inverse cov2d as (a, b, c): [[a b] [b c]]
    double depth = 0;
    Vec3 color = Vec3::Zero();
    double opacity = 0;
    std::uint32_t gaussian_id = 0;
    Vec2 half_extent = Vec2::Zero(); // screen AABB half size, px

    // retained for the backward pass
    Vec3 p_cam = Vec3::Zero();
    Vec3 dir_raw = Vec3::Zero(); // unnormalized SH direction
    Eigen::Array3i color_active = Eigen::Array3i::Ones();

    double kernel(double px, double py) const {
        const double dx = px - center.x(), dy = py - center.y();
        const double power = -0.5 * (conic[0] * dx * dx + conic[2] * dy * dy) - conic[1] * dx * dy;
        return std::exp(std::min(power, 0.0));
    }
};

/// Image-plane ratios x/z and y/z at which the Jacobian is evaluated. Outside
/// 1.3x the field of view they are clamped, otherwise splats near the image
/// plane and far off-axis blow up across the whole frame.
struct JacobianRatio {
    Vec2 uv = Vec2::Zero();
    bool clamped_x = false, clamped_y = false;
};

inline JacobianRatio jacobian_ratio(const Vec3 &p, const CameraIntrinsics &k) {
    const double mx = 0.15 * k.width, my = 0.15 * k.height;
    const double u = p.x() / p.z(), v = p.y() / p.z();
    const double ulo = -(k.cx + mx) / k.fx, uhi = (k.width - k.cx + mx) / k.fx;
    const double vlo = -(k.cy + my) / k.fy, vhi = (k.height - k.cy + my) / k.fy;
    JacobianRatio r;
    r.uv = {std::clamp(u, ulo, uhi), std::clamp(v, vlo, vhi)};
    r.clamped_x = u < ulo || u > uhi;
    r.clamped_y = v < vlo || v > vhi;
    return r;
}

inline Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3 &p, const CameraIntrinsics &k) {
    const double iz = 1.0 / p.z();
    const Vec2 uv = jacobian_ratio(p, k).uv;
    Eigen::Matrix<double, 2, 3> j;
    j << k.fx * iz, 0, -k.fx * uv.x() * iz,
         0, k.fy * iz, -k.fy * uv.y() * iz;
    return j;
}

/// SH direction for a Gaussian mean, before normalization.
inline Vec3 sh_direction_raw(const Vec3 &mean, const Vec3 &p_cam, const Camera &cam, ShFrame frame) {
    return frame == ShFrame::Camera ? p_cam : Vec3(mean - cam.pose.translation());
}

inline ShBasis9 sh_basis_truncated(const Vec3 &dir, int degree) {
    ShBasis9 b = sh_basis(dir);
    for (int j = sh_count_for_degree(std::clamp(degree, 0, 2)); j < 9; ++j) b[j] = 0.0;
    return b;
}

/// EWA projection. Returns nullopt when the Gaussian is behind the near
/// plane or its screen bound misses the image.
inline std::optional<Splat2D> project_gaussian(const SurfaceGaussian &g, std::uint32_t id,
                                               const Camera &cam, const RenderSettings &rs) {
    const CameraIntrinsics &k = cam.intrinsics;
    const Mat3 w = cam.pose.rotation_matrix().transpose();
    const Vec3 p = w * (g.mean - cam.pose.translation());
    if (!(p.z() > rs.near_clip)) return std::nullopt;

    const Mat3 r = rotation_matrix(g.rotation);
    const Vec3 var = (2.0 * g.scale).array().exp();
    const Mat3 sigma = r * var.asDiagonal() * r.transpose();

    const Eigen::Matrix<double, 2, 3> t = projection_jacobian(p, k) * w;
    Mat2 cov = t * sigma * t.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    cov(0, 0) += rs.lowpass;
    cov(1, 1) += rs.lowpass;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
    if (!(det > 0) || !std::isfinite(det)) return std::nullopt;

    Splat2D s;
    s.center = {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
    s.half_extent = {rs.support_sigmas * std::sqrt(cov(0, 0)), rs.support_sigmas * std::sqrt(cov(1, 1))};
    if (s.center.x() + s.half_extent.x() < 0 || s.center.x() - s.half_extent.x() > k.width - 1 ||
        s.center.y() + s.half_extent.y() < 0 || s.center.y() - s.half_extent.y() > k.height - 1)
        return std::nullopt;

    s.cov2d = cov;
    s.conic = {cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det};
    s.depth = p.z();
    s.p_cam = p;
    s.opacity = g.opacity();
    s.gaussian_id = id;

    s.dir_raw = sh_direction_raw(g.mean, p, cam, rs.sh_frame);
    const double n = s.dir_raw.norm();
    const Vec3 dir = n > 0 ? Vec3(s.dir_raw / n) : Vec3::UnitZ();
    const Vec3 raw = g.sh * sh_basis_truncated(dir, rs.sh_degree) + Vec3::Constant(0.5);
    for (int c = 0; c < 3; ++c) {
        s.color_active[c] = raw[c] > 0 ? 1 : 0;
        s.color[c] = std::max(raw[c], 0.0);
    }
    return s;
}

/// Ascending depth, ties broken by gaussian id.
inline std::vector<std::uint32_t> depth_order(const std::vector<Splat2D> &splats) {
    std::vector<std::uint32_t> order(splats.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
        return splats[a].gaussian_id < splats[b].gaussian_id;
    });
    return order;
}

/// 64-bit hash over every parameter of every Gaussian, one word at a time.
inline std::uint64_t scene_fingerprint(const Scene &scene) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const double *data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t w;
            std::memcpy(&w, data + i, sizeof w);
            h = (h ^ w) * 0x9E3779B97F4A7C15ull;
            h ^= h >> 29;
        }
    };
    const double count = static_cast<double>(scene.size());
    mix(&count, 1);
    for (const auto &g : scene) {
        mix(g.mean.data(), 3);
        mix(g.scale.data(), 3);
        mix(g.rotation.data(), 4);
        mix(&g.opacity_logit, 1);
        mix(g.sh.data(), kShCoeffCount);
    }
    return h;
}

namespace render_detail {

// Kernel parameters copied next to each tile entry so the per-pixel walk
// stays in contiguous memory.
struct EntryKernel {
    double cx, cy, a, b, c, opacity;
    double skip_power; // below this exponent alpha is certainly under the skip level
};

} // namespace render_detail

struct RenderOutput {
    ImageBuffer image;
    std::vector<double> transmittance; // final T per pixel
    std::vector<int> contributors;     // blended splat count per pixel

    std::vector<Splat2D> splats; // visible splats
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::uint32_t> tile_entries;                   // splat indices, depth-sorted per tile
    std::vector<render_detail::EntryKernel> tile_kernels;      // parallel to tile_entries
    // per (pixel row, tile column): the tile entries whose vertical reach covers that row
    std::vector<std::uint32_t> row_entries;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> row_ranges;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> tile_ranges; // [begin, end) into tile_entries

    Camera camera;
    RenderSettings settings;
    std::size_t gaussian_count = 0;
    std::uint64_t scene_fingerprint = 0;
};

namespace render_detail {

struct TileKey {
    std::uint32_t tile;
    double depth;
    std::uint32_t gaussian_id;
    std::uint32_t splat;
};

inline void build_tiles(RenderOutput &out) {
    const CameraIntrinsics &k = out.camera.intrinsics;
    const int ts = out.settings.tile_size;
    out.tiles_x = (k.width + ts - 1) / ts;
    out.tiles_y = (k.height + ts - 1) / ts;

    std::vector<TileKey> keys;
    for (std::uint32_t i = 0; i < out.splats.size(); ++i) {
        const Splat2D &s = out.splats[i];
        const int x0 = std::max(0, static_cast<int>(std::floor(std::max(0.0, s.center.x() - s.half_extent.x()) / ts)));
        const int x1 = std::min(out.tiles_x - 1, static_cast<int>(std::floor(std::min<double>(k.width - 1, s.center.x() + s.half_extent.x()) / ts)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::max(0.0, s.center.y() - s.half_extent.y()) / ts)));
        const int y1 = std::min(out.tiles_y - 1, static_cast<int>(std::floor(std::min<double>(k.height - 1, s.center.y() + s.half_extent.y()) / ts)));
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx)
                keys.push_back({static_cast<std::uint32_t>(ty * out.tiles_x + tx), s.depth, s.gaussian_id, i});
    }
    std::sort(keys.begin(), keys.end(), [](const TileKey &a, const TileKey &b) {
        if (a.tile != b.tile) return a.tile < b.tile;
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.gaussian_id < b.gaussian_id;
    });

    out.tile_entries.resize(keys.size());
    out.tile_kernels.resize(keys.size());
    const bool skip_faint = out.settings.skip_faint;
    const double skip = std::log(out.settings.skip_alpha) - 1e-9;
    out.tile_ranges.assign(static_cast<std::size_t>(out.tiles_x) * out.tiles_y, {0u, 0u});
    for (std::size_t i = 0; i < keys.size(); ++i) {
        out.tile_entries[i] = keys[i].splat;
        const Splat2D &s = out.splats[keys[i].splat];
        out.tile_kernels[i] = {s.center.x(), s.center.y(), s.conic[0], s.conic[1], s.conic[2], s.opacity,
                               !skip_faint ? -INFINITY : s.opacity > 0 ? skip - std::log(s.opacity) : INFINITY};
        auto &range = out.tile_ranges[keys[i].tile];
        if (i == 0 || keys[i - 1].tile != keys[i].tile) range.first = static_cast<std::uint32_t>(i);
        range.second = static_cast<std::uint32_t>(i + 1);
    }

    // The largest exponent over a row at offset dy is -dy^2 / (2 cov_yy), so
    // rows beyond sqrt(-2 skip_power cov_yy) hold only skipped pixels.
    std::vector<double> reach(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const EntryKernel &e = out.tile_kernels[i];
        if (!skip_faint) reach[i] = INFINITY;
        else if (e.skip_power > 0) reach[i] = -1;
        else reach[i] = std::sqrt(-2 * e.skip_power * e.a / (e.a * e.c - e.b * e.b)) * (1 + 1e-9) + 1e-9;
    }
    const int h = k.height;
    out.row_entries.clear();
    out.row_ranges.assign(static_cast<std::size_t>(h) * out.tiles_x, {0u, 0u});
    for (int py = 0; py < h; ++py)
        for (int tx = 0; tx < out.tiles_x; ++tx) {
            const auto [begin, end] = out.tile_ranges[(py / ts) * out.tiles_x + tx];
            auto &rr = out.row_ranges[static_cast<std::size_t>(py) * out.tiles_x + tx];
            rr.first = static_cast<std::uint32_t>(out.row_entries.size());
            for (std::uint32_t e = begin; e < end; ++e)
                if (std::abs(py - out.tile_kernels[e].cy) <= reach[e]) out.row_entries.push_back(e);
            rr.second = static_cast<std::uint32_t>(out.row_entries.size());
        }
}

} // namespace render_detail

/// Visits the splats blended at one pixel, front to back, exactly as the
/// forward pass composites them. fn(splat_index, kernel, alpha, T_before).
/// Returns the final transmittance.
template <typename Fn>
double for_each_contribution(const RenderOutput &out, int px, int py, Fn &&fn) {
    const RenderSettings &rs = out.settings;
    const int ts = rs.tile_size;
    const auto [begin, end] = out.row_ranges[static_cast<std::size_t>(py) * out.tiles_x + (px / ts)];
    double t = 1.0;
    for (std::uint32_t r = begin; r < end; ++r) {
        const std::uint32_t e = out.row_entries[r];
        const render_detail::EntryKernel &s = out.tile_kernels[e];
        const double dx = px - s.cx, dy = py - s.cy;
        const double power = -0.5 * (s.a * dx * dx + s.c * dy * dy) - s.b * dx * dy;
        if (power < s.skip_power) continue;
        const double g = std::exp(std::min(power, 0.0));
        const double alpha = s.opacity * g;
        if (rs.skip_faint && alpha < rs.skip_alpha) continue;
        fn(out.tile_entries[e], g, alpha, t);
        t *= (1.0 - alpha);
        if (rs.early_stop && t < rs.min_transmittance) break;
    }
    return t;
}

/// Same visits as for_each_contribution for every pixel of one tile row
/// segment, pixels [tx * tile, tx * tile + tile) of row py, clipped to the
/// image. Each entry is tested only on the pixels inside its exact x-interval
/// of non-skipped exponents. fn(px, splat_index, kernel, alpha, T_before) runs
/// in front-to-back order per pixel; t_out[px - x0] receives the final T.
template <typename Fn>
void for_each_row_contribution(const RenderOutput &out, int py, int tx, double *t_out, Fn &&fn) {
    const RenderSettings &rs = out.settings;
    const int x0 = tx * rs.tile_size, x1 = std::min(out.camera.intrinsics.width, x0 + rs.tile_size);
    int live = x1 - x0;
    for (int i = 0; i < live; ++i) t_out[i] = 1.0;
    const auto [begin, end] = out.row_ranges[static_cast<std::size_t>(py) * out.tiles_x + tx];
    for (std::uint32_t r = begin; r < end && live > 0; ++r) {
        const std::uint32_t e = out.row_entries[r];
        const render_detail::EntryKernel &s = out.tile_kernels[e];
        const double dy = py - s.cy;
        int lo = x0, hi = x1 - 1;
        if (rs.skip_faint) {
            // exponent >= skip_power  <=>  a dx^2 + 2 b dy dx + c dy^2 + 2 skip_power <= 0
            const double p = s.b * dy, q = s.c * dy * dy + 2 * s.skip_power;
            const double disc = p * p - s.a * q;
            const double tol = 1e-9 * (p * p + std::abs(s.a * q));
            if (disc + tol < 0) continue;
            const double half = std::sqrt(std::max(disc, 0.0) + tol) / s.a + 1e-6;
            const double mid = s.cx - p / s.a;
            lo = std::max(lo, static_cast<int>(std::ceil(mid - half)));
            hi = std::min(hi, static_cast<int>(std::floor(mid + half)));
        }
        for (int px = lo; px <= hi; ++px) {
            double &t = t_out[px - x0];
            if (rs.early_stop && t < rs.min_transmittance) continue;
            const double dx = px - s.cx;
            const double power = -0.5 * (s.a * dx * dx + s.c * dy * dy) - s.b * dx * dy;
            if (power < s.skip_power) continue;
            const double g = std::exp(std::min(power, 0.0));
            const double alpha = s.opacity * g;
            if (rs.skip_faint && alpha < rs.skip_alpha) continue;
            fn(px, out.tile_entries[e], g, alpha, t);
            t *= (1.0 - alpha);
            if (rs.early_stop && t < rs.min_transmittance) --live;
        }
    }
}

inline RenderOutput render(const Scene &scene, const Camera &cam, const RenderSettings &rs = {}) {
    cam.intrinsics.validate();
    if (rs.tile_size <= 0) throw Error("render: tile_size must be positive");

    RenderOutput out;
    out.camera = cam;
    out.settings = rs;
    out.gaussian_count = scene.size();
    out.scene_fingerprint = scene_fingerprint(scene);

    for (std::uint32_t i = 0; i < scene.size(); ++i)
        if (auto s = project_gaussian(scene[i], i, cam, rs)) out.splats.push_back(*s);
    render_detail::build_tiles(out);

    const int w = cam.intrinsics.width, h = cam.intrinsics.height;
    out.image = ImageBuffer(w, h);
    out.transmittance.assign(static_cast<std::size_t>(w) * h, 1.0);
    out.contributors.assign(static_cast<std::size_t>(w) * h, 0);
    const int ts = rs.tile_size;
    std::vector<double> t(ts);
    std::vector<Vec3> c(ts);
    for (int py = 0; py < h; ++py) {
        for (int tx = 0; tx < out.tiles_x; ++tx) {
            const int x0 = tx * ts;
            std::fill(c.begin(), c.end(), Vec3::Zero());
            for_each_row_contribution(out, py, tx, t.data(), [&](int px, std::uint32_t si, double, double alpha, double t_before) {
                c[px - x0] += out.splats[si].color * (alpha * t_before);
                ++out.contributors[static_cast<std::size_t>(py) * w + px];
            });
            for (int px = x0; px < std::min(w, x0 + ts); ++px) {
                const std::size_t pi = static_cast<std::size_t>(py) * w + px;
                out.transmittance[pi] = t[px - x0];
                out.image.set_pixel(px, py, c[px - x0] + t[px - x0] * rs.background);
            }
        }
    }
    return out;
}

inline RenderOutput render(const Scene &scene, const View &view, const RenderSettings &rs = {}) {
    return render(scene, camera_of(view), rs);
}

} // namespace gaussmap
