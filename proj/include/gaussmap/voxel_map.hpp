#pragma once

// Size-adaptive octree partition of a world-frame cloud. Each root cell is
// split until its points are thin enough (eta below threshold), too few to
// judge, or the depth limit is hit.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "gaussmap/core.hpp"

namespace gaussmap {

struct VoxelParams {
    double root_size = 1.0;
    int max_depth = 3;
    double eta_threshold = 0.05;
    int min_points = 10;
    std::optional<Vec3> sensor_origin; // normals face this point; +z when unset

    void validate() const {
        if (!(root_size > 0) || !std::isfinite(root_size)) throw Error("voxel root_size must be positive");
        if (max_depth < 0 || max_depth > 20) throw Error("voxel max_depth must be in [0, 20]");
        if (min_points < 4) throw Error("voxel min_points must be at least 4");
        if (!(eta_threshold >= 0)) throw Error("voxel eta_threshold must be non-negative");
    }
};

struct VoxelKey {
    int depth = 0;
    std::int64_t i = 0, j = 0, k = 0;

    friend auto operator<=>(const VoxelKey &, const VoxelKey &) = default;
};

inline double voxel_edge(double root_size, int depth) { return std::ldexp(root_size, -depth); }

/// Running count, mean and sum of centered outer products.
struct VoxelStats {
    std::size_t n = 0;
    Vec3 mean = Vec3::Zero();
    SymMat3 m2{0, 0, 0, 0, 0, 0};

    /// sum (p - mean)(p - mean)^T / N
    SymMat3 scatter() const { return n == 0 ? m2 : m2 * (1.0 / static_cast<double>(n)); }
};

inline VoxelStats insert_point(VoxelStats s, const Vec3 &p) {
    ++s.n;
    const Vec3 delta = p - s.mean;
    s.mean += delta / static_cast<double>(s.n);
    const double w = static_cast<double>(s.n - 1) / static_cast<double>(s.n);
    s.m2 += SymMat3::from_matrix(w * delta * delta.transpose());
    return s;
}

struct PlaneStats {
    Vec3 lambda = Vec3::Zero(); // ascending
    Mat3 axes = Mat3::Identity(); // columns match lambda, right-handed
    Vec3 normal = Vec3::UnitZ();
    double eta = 0.0;
};

inline double planarity(const Vec3 &lambda) {
    const double n = lambda.norm();
    return n > 0 ? lambda[0] / n : 0.0;
}

inline PlaneStats voxel_plane_stats(const VoxelStats &stats, int min_points = 4,
                                    const std::optional<Vec3> &sensor_origin = std::nullopt) {
    if (stats.n < static_cast<std::size_t>(std::max(min_points, 1))) throw Error("insufficient support");
    const SymMat3 scatter = stats.scatter();
    if (!scatter.all_finite()) throw Error("voxel_plane_stats: non-finite scatter");
    Eigen::SelfAdjointEigenSolver<Mat3> es(scatter.matrix());
    PlaneStats ps;
    ps.lambda = es.eigenvalues().cwiseMax(0.0);
    ps.axes = es.eigenvectors();
    ps.eta = planarity(ps.lambda);

    const Vec3 toward = sensor_origin ? Vec3(*sensor_origin - stats.mean) : Vec3::UnitZ();
    Vec3 nrm = ps.axes.col(0);
    double d = nrm.dot(toward);
    if (d == 0) {
        // tie: first non-zero component positive
        for (int a = 0; a < 3 && d == 0; ++a) d = nrm[a];
    }
    if (d < 0) nrm = -nrm;
    ps.axes.col(0) = nrm;
    if (ps.axes.determinant() < 0) ps.axes.col(2) = -ps.axes.col(2);
    ps.normal = nrm;
    return ps;
}

enum class LeafKind { Planar, MaxDepth, Sparse };

inline const char *leaf_kind_name(LeafKind k) {
    switch (k) {
    case LeafKind::Planar: return "planar";
    case LeafKind::MaxDepth: return "max-depth";
    case LeafKind::Sparse: return "sparse";
    }
    return "?";
}

struct VoxelNode {
    VoxelKey key;
    VoxelStats stats;
    std::optional<PlaneStats> plane; // present whenever stats.n >= min_points
    LeafKind kind = LeafKind::Sparse;
    std::vector<std::uint32_t> points; // indices into the source cloud

    bool planar() const { return kind == LeafKind::Planar; }
};

struct VoxelMap {
    VoxelParams params;
    std::vector<VoxelNode> leaves; // sorted by key

    double edge(const VoxelNode &n) const { return voxel_edge(params.root_size, n.key.depth); }
    Vec3 center(const VoxelNode &n) const {
        const double e = edge(n);
        return Vec3((n.key.i + 0.5) * e, (n.key.j + 0.5) * e, (n.key.k + 0.5) * e);
    }
    std::size_t point_count() const {
        std::size_t s = 0;
        for (const auto &l : leaves) s += l.stats.n;
        return s;
    }
};

namespace voxel_detail {

inline void build_cell(const PointCloud &cloud, const VoxelParams &vp, const VoxelKey &key,
                       std::vector<std::uint32_t> idx, std::vector<VoxelNode> &out) {
    VoxelNode node;
    node.key = key;
    for (auto i : idx) node.stats = insert_point(node.stats, cloud.points[i]);
    if (node.stats.n >= static_cast<std::size_t>(vp.min_points)) {
        node.plane = voxel_plane_stats(node.stats, vp.min_points, vp.sensor_origin);
        if (node.plane->eta < vp.eta_threshold) {
            node.kind = LeafKind::Planar;
        } else if (key.depth < vp.max_depth) {
            const double half = voxel_edge(vp.root_size, key.depth + 1);
            std::array<std::vector<std::uint32_t>, 8> kids;
            for (auto i : idx) {
                const Vec3 &p = cloud.points[i];
                const int bx = p.x() >= (2 * key.i + 1) * half;
                const int by = p.y() >= (2 * key.j + 1) * half;
                const int bz = p.z() >= (2 * key.k + 1) * half;
                kids[bx | by << 1 | bz << 2].push_back(i);
            }
            idx.clear();
            idx.shrink_to_fit();
            for (int c = 0; c < 8; ++c) {
                if (kids[c].empty()) continue;
                const VoxelKey ck{key.depth + 1, 2 * key.i + (c & 1), 2 * key.j + (c >> 1 & 1), 2 * key.k + (c >> 2 & 1)};
                build_cell(cloud, vp, ck, std::move(kids[c]), out);
            }
            return;
        } else {
            node.kind = LeafKind::MaxDepth;
        }
    }
    node.points = std::move(idx);
    out.push_back(std::move(node));
}

} // namespace voxel_detail

inline VoxelMap build_voxel_map(const PointCloud &cloud, const VoxelParams &vp) {
    vp.validate();
    if (cloud.empty()) throw Error("build_voxel_map: empty cloud");
    if (!cloud.all_finite()) throw Error("build_voxel_map: non-finite point");
    std::map<VoxelKey, std::vector<std::uint32_t>> roots;
    for (std::uint32_t i = 0; i < cloud.size(); ++i) {
        const Vec3 c = (cloud.points[i] / vp.root_size).array().floor();
        roots[{0, static_cast<std::int64_t>(c.x()), static_cast<std::int64_t>(c.y()), static_cast<std::int64_t>(c.z())}]
            .push_back(i);
    }
    VoxelMap map;
    map.params = vp;
    for (auto &[key, idx] : roots) voxel_detail::build_cell(cloud, vp, key, std::move(idx), map.leaves);
    std::sort(map.leaves.begin(), map.leaves.end(), [](const VoxelNode &a, const VoxelNode &b) { return a.key < b.key; });
    return map;
}

/// One line per leaf: depth i,j,k N eta lambda_min lambda_mid lambda_max nx ny nz
inline void dump_voxel_map(const VoxelMap &map, std::ostream &os) {
    const auto flags = os.flags();
    const auto prec = os.precision(17);
    for (const auto &l : map.leaves) {
        os << l.key.depth << ' ' << l.key.i << ',' << l.key.j << ',' << l.key.k << ' ' << l.stats.n;
        const PlaneStats ps = l.plane.value_or(PlaneStats{Vec3::Constant(NAN), Mat3::Identity(), Vec3::Constant(NAN), NAN});
        os << ' ' << ps.eta << ' ' << ps.lambda[0] << ' ' << ps.lambda[1] << ' ' << ps.lambda[2] << ' ' << ps.normal[0]
           << ' ' << ps.normal[1] << ' ' << ps.normal[2] << '\n';
    }
    os.precision(prec);
    os.flags(flags);
}

} // namespace gaussmap
