#pragma once

// Turns voxel leaves into the initial surface Gaussians: one Gaussian per
// retained point, shaped by the leaf's scatter for planar leaves and
// isotropic elsewhere, then colored from the first view that sees it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "gaussmap/render.hpp"
#include "gaussmap/voxel_map.hpp"

namespace gaussmap {

struct InitParams {
    int point_budget = 50;
    double alpha_min = 1e-4;
    double alpha_max = 100.0;
    double opacity_init = 0.9;
    std::uint64_t seed = 0;

    void validate() const {
        if (point_budget < 1) throw Error("init point_budget must be positive");
        if (!(alpha_min > 0) || !(alpha_max >= alpha_min)) throw Error("init alpha bounds invalid");
        if (!(opacity_init > 0 && opacity_init < 1)) throw Error("init opacity_init must be in (0, 1)");
    }
};

struct InitReport {
    std::size_t gaussians_created = 0;
    std::size_t planar_count = 0; // Gaussians seeded from planar leaves
    std::size_t sparse_count = 0; // Gaussians seeded from every other leaf
    std::size_t planar_leaves = 0;
    std::size_t sparse_leaves = 0;
    double mean_alpha = 0.0; // over planar leaves
    int point_budget = 0;
    std::size_t points_dropped = 0; // over budget
    std::size_t eigen_clamped = 0;
};

/// Scale so that n one-sigma footprints of area pi alpha sqrt(l_mid l_max)
/// add up to the leaf face area edge^2.
inline double density_alpha(double edge, std::size_t n, double lambda_mid, double lambda_max, double alpha_min = 1e-4,
                            double alpha_max = 100.0) {
    const double spread = std::sqrt(lambda_mid * lambda_max);
    if (!(spread > 0) || n == 0) return alpha_max;
    return std::clamp(edge * edge / (std::numbers::pi * static_cast<double>(n) * spread), alpha_min, alpha_max);
}

namespace init_detail {

inline std::uint64_t leaf_seed(std::uint64_t seed, const VoxelKey &k) {
    std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
    for (std::uint64_t v : {static_cast<std::uint64_t>(k.depth), static_cast<std::uint64_t>(k.i),
                            static_cast<std::uint64_t>(k.j), static_cast<std::uint64_t>(k.k)}) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        h *= 0xbf58476d1ce4e5b9ULL;
    }
    return h;
}

// Uniform subset of size b, returned in ascending index order.
inline std::vector<std::uint32_t> subsample(std::vector<std::uint32_t> idx, std::size_t b, std::mt19937_64 &rng) {
    if (idx.size() <= b) return idx;
    for (std::size_t i = 0; i < b; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(b);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace init_detail

struct LeafSeeds {
    Scene gaussians;
    double alpha = 0.0; // planar leaves only
    std::size_t dropped = 0;
    std::size_t clamped = 0;
};

/// Geometry only; opacity and color are set by seed_colors.
inline LeafSeeds seed_from_voxel(const VoxelNode &leaf, const PointCloud &cloud, double edge, const InitParams &ip) {
    std::mt19937_64 rng(init_detail::leaf_seed(ip.seed, leaf.key));
    const auto kept = init_detail::subsample(leaf.points, static_cast<std::size_t>(ip.point_budget), rng);
    LeafSeeds out;
    out.dropped = leaf.points.size() - kept.size();
    SurfaceGaussian proto;
    if (leaf.planar()) {
        const PlaneStats &ps = *leaf.plane;
        out.alpha = density_alpha(edge, kept.size(), ps.lambda[1], ps.lambda[2], ip.alpha_min, ip.alpha_max);
        const CovarianceFactors f = factors_from_covariance(leaf.stats.scatter() * out.alpha);
        proto.scale = f.scale;
        proto.rotation = f.rotation;
        out.clamped = static_cast<std::size_t>(f.clamped);
    } else {
        proto.scale = Vec3::Constant(std::log(0.5 * edge));
    }
    for (auto i : kept) {
        SurfaceGaussian g = proto;
        g.mean = cloud.points[i];
        out.gaussians.push_back(g);
    }
    return out;
}

inline Scene seed_geometry(const VoxelMap &map, const PointCloud &cloud, const InitParams &ip, InitReport *report = nullptr) {
    ip.validate();
    Scene scene;
    InitReport rep;
    rep.point_budget = ip.point_budget;
    double alpha_sum = 0;
    for (const auto &leaf : map.leaves) {
        LeafSeeds s = seed_from_voxel(leaf, cloud, map.edge(leaf), ip);
        if (leaf.planar()) {
            ++rep.planar_leaves;
            rep.planar_count += s.gaussians.size();
            alpha_sum += s.alpha;
        } else {
            ++rep.sparse_leaves;
            rep.sparse_count += s.gaussians.size();
        }
        rep.points_dropped += s.dropped;
        rep.eigen_clamped += s.clamped;
        scene.insert(scene.end(), s.gaussians.begin(), s.gaussians.end());
    }
    rep.gaussians_created = scene.size();
    rep.mean_alpha = rep.planar_leaves ? alpha_sum / static_cast<double>(rep.planar_leaves) : 0.0;
    if (report) *report = rep;
    return scene;
}

/// DC color from the pixel each mean projects to in the first view where it
/// is in front of the camera and inside the image; higher SH bands zeroed.
inline void seed_colors(Scene &scene, const std::vector<View> &views, double opacity_init, double near_clip = 0.05) {
    for (auto &g : scene) {
        g.sh.setZero();
        g.opacity_logit = logit(opacity_init);
        for (const View &v : views) {
            const Vec3 p = v.pose.inverse().apply(g.mean);
            if (!(p.z() > near_clip)) continue;
            const CameraIntrinsics &k = v.intrinsics;
            const long px = std::lround(k.fx * p.x() / p.z() + k.cx);
            const long py = std::lround(k.fy * p.y() / p.z() + k.cy);
            if (px < 0 || py < 0 || px >= k.width || py >= k.height) continue;
            g.sh.col(0) = rgb_to_sh_dc(v.image.pixel(static_cast<int>(px), static_cast<int>(py)));
            break;
        }
    }
}

/// Random-position baseline: `count` isotropic Gaussians uniform in the
/// bounding box of `cloud`.
inline Scene random_init(const PointCloud &cloud, std::size_t count, std::uint64_t seed) {
    if (cloud.empty() || count == 0) throw Error("random_init: empty input");
    Vec3 lo = cloud.points[0], hi = cloud.points[0];
    for (const auto &p : cloud.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3 ext = (hi - lo).cwiseMax(1e-3);
    const double spacing = std::cbrt(ext.prod() / static_cast<double>(count));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Scene scene(count);
    for (auto &g : scene) {
        for (int a = 0; a < 3; ++a) g.mean[a] = lo[a] + u(rng) * ext[a];
        g.scale = Vec3::Constant(std::log(0.5 * spacing));
    }
    return scene;
}

} // namespace gaussmap
