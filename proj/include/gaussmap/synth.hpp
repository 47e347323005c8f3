#pragma once

// Synthetic datasets with known geometry: textured rectangles, LiDAR samples
// drawn from them, a camera ring, and reference images rendered from a
// ground-truth Gaussian tiling of the same rectangles.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gaussmap/io/image.hpp"
#include "gaussmap/io/ply.hpp"
#include "gaussmap/io/trajectory.hpp"
#include "gaussmap/render.hpp"

namespace gaussmap {

/// Rectangle origin + a u + b v for a, b in [0, 1], textured with a checker
/// and linear gradients.
struct SynthSurface {
    Vec3 origin = Vec3::Zero();
    Vec3 u = Vec3::UnitX(), v = Vec3::UnitY();
    Vec3 base = Vec3::Constant(0.5);
    Vec3 checker_amp = Vec3::Zero(); // +/- around base
    double checker_cell = 0.25;      // meters
    Vec3 grad_u = Vec3::Zero(), grad_v = Vec3::Zero();
    Eigen::Matrix3d sh1 = Eigen::Matrix3d::Zero(); // degree-1 SH per channel (rows)
    double lidar_fraction_u = 1.0; // LiDAR only samples a < lidar_fraction_u

    Vec3 normal() const { return u.cross(v).normalized(); }
    double area() const { return u.cross(v).norm(); }
    Vec3 point(double a, double b) const { return origin + a * u + b * v; }

    Vec3 albedo(double a, double b) const {
        const long cu = static_cast<long>(std::floor(a * u.norm() / checker_cell));
        const long cv = static_cast<long>(std::floor(b * v.norm() / checker_cell));
        const double s = ((cu + cv) % 2 == 0) ? 1.0 : -1.0;
        return base + s * checker_amp + (a - 0.5) * grad_u + (b - 0.5) * grad_v;
    }
};

struct ScenePreset {
    std::string name;
    std::vector<SynthSurface> surfaces;
    double lidar_density = 400; // points per m^2
    double lidar_noise = 0.0;   // meters
    double gt_spacing = 0.05;   // ground-truth Gaussian grid pitch
    double gt_opacity = 0.99;
    CameraIntrinsics intrinsics{64, 64, 64, 64, 128, 128};
    std::vector<Pose> cameras;
    std::vector<int> test_ids;
    std::vector<int> extrapolated_ids;
    std::optional<Vec3> sensor_origin;

    void validate() const {
        if (surfaces.empty()) throw Error("preset '" + name + "' has no surfaces");
        if (cameras.size() < 2) throw Error("preset '" + name + "' needs at least two cameras");
        if (test_ids.empty()) throw Error("preset '" + name + "' needs a held-out view");
        intrinsics.validate();
    }
};

/// Camera-to-world pose at `eye` looking at `target`; image y points down.
inline Pose look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up = Vec3::UnitZ()) {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-9) x = z.cross(Vec3::UnitY());
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return Pose(r, eye);
}

namespace synth_detail {

inline SynthSurface rect(const Vec3 &o, const Vec3 &u, const Vec3 &v, const Vec3 &base, const Vec3 &amp, double cell) {
    SynthSurface s;
    s.origin = o;
    s.u = u;
    s.v = v;
    s.base = base;
    s.checker_amp = amp;
    s.checker_cell = cell;
    return s;
}

inline std::vector<Pose> ring(int n, double radius, double height, const Vec3 &target, double phase_deg = 0) {
    std::vector<Pose> out;
    for (int i = 0; i < n; ++i) {
        const double a = (phase_deg + 360.0 * i / n) * std::numbers::pi / 180.0;
        out.push_back(look_at(Vec3(target.x() + radius * std::cos(a), target.y() + radius * std::sin(a), height), target));
    }
    return out;
}

inline Vec3 on_ring(double deg, double radius, double height, const Vec3 &target) {
    const double a = deg * std::numbers::pi / 180.0;
    return Vec3(target.x() + radius * std::cos(a), target.y() + radius * std::sin(a), height);
}

} // namespace synth_detail

inline std::vector<std::string> preset_names() { return {"plane-lambert", "box-room", "two-walls-specular", "half-coverage"}; }

inline ScenePreset make_preset(const std::string &name) {
    using synth_detail::rect;
    ScenePreset p;
    p.name = name;
    if (name == "plane-lambert") {
        // 2 m x 2 m wall at y = 2 facing the cameras
        SynthSurface s = rect({-1, 2, 0}, {2, 0, 0}, {0, 0, 2}, {0.55, 0.45, 0.35}, {0.15, 0.15, 0.15}, 0.25);
        p.surfaces = {s};
        const Vec3 target(0, 2, 1);
        for (int i = 0; i < 5; ++i) p.cameras.push_back(look_at(Vec3(-0.6 + 0.3 * i, 0.5, 1.0), target));
        p.cameras.push_back(look_at(Vec3(0.15, 0.6, 1.1), target));
        p.test_ids = {5};
        p.sensor_origin = Vec3(0, 0.5, 1);
    } else if (name == "box-room") {
        // interior of a 3 x 3 x 2 m room, low-contrast textures
        const Vec3 amp = Vec3::Constant(0.04);
        SynthSurface floor = rect({-1.5, -1.5, 0}, {3, 0, 0}, {0, 3, 0}, {0.45, 0.40, 0.35}, amp, 0.5);
        floor.grad_u = {0.1, 0.05, 0.0};
        SynthSurface ceil = rect({-1.5, -1.5, 2}, {0, 3, 0}, {3, 0, 0}, {0.80, 0.80, 0.78}, Vec3::Zero(), 0.5);
        ceil.grad_v = {0.05, 0.05, 0.05};
        SynthSurface wx0 = rect({-1.5, -1.5, 0}, {0, 0, 2}, {0, 3, 0}, {0.60, 0.35, 0.30}, amp, 0.5);
        wx0.grad_v = {0.1, 0.0, 0.0};
        SynthSurface wx1 = rect({1.5, -1.5, 0}, {0, 3, 0}, {0, 0, 2}, {0.30, 0.45, 0.60}, amp, 0.5);
        wx1.grad_u = {0.0, 0.1, 0.0};
        SynthSurface wy0 = rect({-1.5, -1.5, 0}, {3, 0, 0}, {0, 0, 2}, {0.40, 0.55, 0.35}, amp, 0.5);
        wy0.grad_u = {0.0, 0.0, 0.1};
        SynthSurface wy1 = rect({-1.5, 1.5, 0}, {0, 0, 2}, {3, 0, 0}, {0.65, 0.60, 0.40}, amp, 0.5);
        wy1.grad_v = {0.1, 0.1, 0.0};
        p.surfaces = {floor, ceil, wx0, wx1, wy0, wy1};
        const Vec3 target(0, 0, 1);
        p.cameras = synth_detail::ring(6, 0.5, 1.0, target);
        p.cameras.push_back(look_at(synth_detail::on_ring(30, 0.5, 1.0, target), target));
        p.cameras.push_back(look_at(synth_detail::on_ring(210, 0.5, 1.0, target), target));
        p.cameras.push_back(look_at(synth_detail::on_ring(90, 1.0, 1.4, target), target));
        p.test_ids = {6, 7, 8};
        p.extrapolated_ids = {8};
        p.lidar_density = 300;
        p.lidar_noise = 0.01;
        p.sensor_origin = target;
    } else if (name == "two-walls-specular") {
        SynthSurface a = rect({-1, 2, 0}, {1, 0, 0}, {0, 0, 2}, {0.5, 0.4, 0.3}, {0.1, 0.1, 0.1}, 0.25);
        SynthSurface b = rect({0, 2, 0}, {1, -1, 0}, {0, 0, 2}, {0.3, 0.4, 0.5}, {0.1, 0.1, 0.1}, 0.25);
        a.sh1.row(0) = Vec3(0.1, 0.0, 0.15);
        a.sh1.row(1) = Vec3(0.1, 0.0, 0.15);
        b.sh1.row(2) = Vec3(0.0, 0.1, -0.15);
        p.surfaces = {a, b};
        const Vec3 target(0, 1.6, 1);
        for (int i = 0; i < 5; ++i) p.cameras.push_back(look_at(Vec3(-0.8 + 0.4 * i, 0.0, 1.0), target));
        p.cameras.push_back(look_at(Vec3(0.2, 0.1, 1.1), target));
        p.test_ids = {5};
        p.sensor_origin = Vec3(0, 0, 1);
    } else if (name == "half-coverage") {
        // LiDAR samples only the left half of the wall
        SynthSurface s = rect({-1, 2, 0}, {2, 0, 0}, {0, 0, 2}, {0.5, 0.5, 0.5}, {0.2, 0.2, 0.2}, 0.25);
        s.lidar_fraction_u = 0.5;
        p.surfaces = {s};
        const Vec3 target(0, 2, 1);
        for (int i = 0; i < 5; ++i) p.cameras.push_back(look_at(Vec3(-0.6 + 0.3 * i, 0.3, 1.0), target));
        p.cameras.push_back(look_at(Vec3(0.15, 0.4, 1.05), target));
        p.test_ids = {5};
        p.sensor_origin = Vec3(0, 0.3, 1);
    } else {
        throw Error("unknown preset '" + name + "'");
    }
    return p;
}

struct SynthDataset {
    ScenePreset preset;
    PointCloud cloud;    // noisy LiDAR samples
    PointCloud gt_cloud; // noise-free samples at the same density, full coverage
    Scene gt_gaussians;
    std::vector<View> views; // id = camera index, timestamp = 0.1 id
};

/// Flat-shaded grid of surface-aligned Gaussians, one per spacing^2 cell.
inline Scene ground_truth_gaussians(const ScenePreset &p) {
    Scene scene;
    for (const auto &s : p.surfaces) {
        const int nu = std::max(1, static_cast<int>(std::ceil(s.u.norm() / p.gt_spacing)));
        const int nv = std::max(1, static_cast<int>(std::ceil(s.v.norm() / p.gt_spacing)));
        Mat3 r;
        r.col(0) = s.u.normalized();
        r.col(2) = s.normal();
        r.col(1) = r.col(2).cross(r.col(0));
        const QuatWXYZ q = quat_from_matrix(r);
        const Vec3 scale(std::log(0.6 * s.u.norm() / nu), std::log(0.6 * s.v.norm() / nv), std::log(0.002));
        for (int j = 0; j < nv; ++j)
            for (int i = 0; i < nu; ++i) {
                const double a = (i + 0.5) / nu, b = (j + 0.5) / nv;
                SurfaceGaussian g;
                g.mean = s.point(a, b);
                g.scale = scale;
                g.rotation = q;
                g.opacity_logit = logit(p.gt_opacity);
                g.sh.col(0) = rgb_to_sh_dc(s.albedo(a, b).cwiseMax(0.0).cwiseMin(1.0));
                // degree-1 basis order (y, z, x) with the sign of the real basis
                for (int c = 0; c < 3; ++c) {
                    g.sh(c, 1) = s.sh1(c, 1);
                    g.sh(c, 2) = s.sh1(c, 2);
                    g.sh(c, 3) = s.sh1(c, 0);
                }
                scene.push_back(g);
            }
    }
    return scene;
}

inline PointCloud sample_surfaces(const ScenePreset &p, double noise, bool respect_lidar_mask, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    PointCloud cloud;
    for (const auto &s : p.surfaces) {
        const double frac = respect_lidar_mask ? s.lidar_fraction_u : 1.0;
        const auto count = static_cast<std::size_t>(std::llround(p.lidar_density * s.area() * frac));
        for (std::size_t k = 0; k < count; ++k) {
            const double a = u01(rng) * frac, b = u01(rng);
            Vec3 pt = s.point(a, b);
            if (noise > 0) pt += noise * Vec3(n01(rng), n01(rng), n01(rng));
            cloud.points.push_back(pt);
        }
    }
    return cloud;
}

inline RenderSettings synth_render_settings() { return RenderSettings{}; }

/// Images of the ground-truth Gaussians, quantized through 8-bit sRGB so
/// they equal what a reload of the emitted PNGs yields.
inline SynthDataset generate(const ScenePreset &preset, std::uint64_t seed) {
    preset.validate();
    SynthDataset ds;
    ds.preset = preset;
    std::mt19937_64 rng(seed);
    ds.cloud = sample_surfaces(preset, preset.lidar_noise, true, rng);
    ds.gt_cloud = sample_surfaces(preset, 0.0, false, rng);
    ds.gt_gaussians = ground_truth_gaussians(preset);
    for (std::size_t i = 0; i < preset.cameras.size(); ++i) {
        View v;
        v.id = static_cast<int>(i);
        v.timestamp = 0.1 * static_cast<double>(i);
        v.pose = preset.cameras[i];
        v.intrinsics = preset.intrinsics;
        const ImageBuffer img = render(ds.gt_gaussians, Camera{v.pose, v.intrinsics}, synth_render_settings()).image;
        v.image = image_from_srgb8(image_to_srgb8(img), img.width(), img.height());
        ds.views.push_back(std::move(v));
    }
    return ds;
}

inline std::string frame_image_name(double timestamp) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f.png", timestamp);
    return buf;
}

/// Writes manifest.toml, cloud.ply, gt_cloud.ply, gt_gaussians.ply,
/// trajectory.txt and images/<timestamp>.png under `dir`.
inline void write_synth(const SynthDataset &ds, const std::filesystem::path &dir) {
    std::filesystem::create_directories(dir / "images");
    save_point_cloud(ds.cloud, (dir / "cloud.ply").string());
    save_point_cloud(ds.gt_cloud, (dir / "gt_cloud.ply").string());
    export_gaussians(ds.gt_gaussians, (dir / "gt_gaussians.ply").string());
    Trajectory traj;
    for (const auto &v : ds.views) {
        traj.push_back({v.timestamp, v.pose});
        save_image(v.image, (dir / "images" / frame_image_name(v.timestamp)).string());
    }
    save_trajectory(traj, (dir / "trajectory.txt").string());
    std::ofstream m(dir / "manifest.toml", std::ios::trunc);
    if (!m) throw Error("cannot write manifest in " + dir.string());
    auto list = [](const std::vector<int> &ids) {
        std::string s = "[";
        for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ", " : "") + std::to_string(ids[i]);
        return s + "]";
    };
    const auto &k = ds.preset.intrinsics;
    char buf[256];
    m << "# synthetic preset " << ds.preset.name << "\n";
    m << "point_cloud = \"cloud.ply\"\ntrajectory = \"trajectory.txt\"\nimages = \"images\"\n";
    m << "gt_gaussians = \"gt_gaussians.ply\"\n\n[intrinsics]\n";
    std::snprintf(buf, sizeof buf, "fx = %.17g\nfy = %.17g\ncx = %.17g\ncy = %.17g\nwidth = %d\nheight = %d\n", k.fx,
                  k.fy, k.cx, k.cy, k.width, k.height);
    m << buf << "\n[split]\ntest = " << list(ds.preset.test_ids) << "\nextrapolated = " << list(ds.preset.extrapolated_ids)
      << "\n";
    if (!m) throw Error("write failed for manifest in " + dir.string());
}

/// Independent flat-shaded ray caster over the preset's rectangles (first
/// hit, albedo only); used to measure model mismatch of the splat tiling.
inline ImageBuffer raycast_reference(const ScenePreset &p, const Camera &cam, const Vec3 &background = Vec3::Zero()) {
    const auto &k = cam.intrinsics;
    ImageBuffer img(k.width, k.height);
    const Mat3 r = cam.pose.rotation_matrix();
    const Vec3 o = cam.pose.translation();
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            const Vec3 d = r * Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
            double best = INFINITY;
            Vec3 c = background;
            for (const auto &s : p.surfaces) {
                const Vec3 n = s.u.cross(s.v);
                const double den = n.dot(d);
                if (std::abs(den) < 1e-12) continue;
                const double t = n.dot(s.origin - o) / den;
                if (!(t > 0) || t >= best) continue;
                const Vec3 h = o + t * d - s.origin;
                // solve h = a u + b v in the plane
                Eigen::Matrix<double, 3, 2> uv;
                uv.col(0) = s.u;
                uv.col(1) = s.v;
                const Eigen::Vector2d ab = uv.colPivHouseholderQr().solve(h);
                if (ab[0] < 0 || ab[0] > 1 || ab[1] < 0 || ab[1] > 1) continue;
                best = t;
                c = s.albedo(ab[0], ab[1]).cwiseMax(0.0).cwiseMin(1.0);
            }
            img.set_pixel(x, y, c);
        }
    return img;
}

} // namespace gaussmap
