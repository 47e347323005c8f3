#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gaussmap/voxel_map.hpp"
#include "test_util.hpp"

using namespace gaussmap;
using gaussmap::testing::batch_stats;
using gaussmap::testing::jacobi_eigen;

namespace {

VoxelStats stats_of(const std::vector<Vec3> &pts) {
    VoxelStats s;
    for (const auto &p : pts) s = insert_point(s, p);
    return s;
}

VoxelStats stats_with_scatter(const Mat3 &scatter, std::size_t n = 10) {
    VoxelStats s;
    s.n = n;
    s.mean = Vec3(0.5, 0.5, 0.5);
    s.m2 = SymMat3::from_matrix(scatter * static_cast<double>(n));
    return s;
}

double eta_oracle(const Mat3 &scatter) {
    const Vec3 l = jacobi_eigen(scatter).values.cwiseMax(0.0);
    return l[0] / std::sqrt(l[0] * l[0] + l[1] * l[1] + l[2] * l[2]);
}

std::vector<Vec3> noisy_plane(std::mt19937_64 &rng, int n, double noise) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, noise);
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), noise > 0 ? g(rng) : 0.0);
    return pts;
}

} // namespace

TEST(VoxelStats, SinglePoint) {
    const VoxelStats s = insert_point({}, Vec3(1, 2, 3));
    EXPECT_EQ(s.n, 1u);
    EXPECT_EQ(s.mean, Vec3(1, 2, 3));
    EXPECT_EQ(s.scatter().matrix(), Mat3::Zero());
}

TEST(VoxelStats, SamePointTwice) {
    const VoxelStats s = insert_point(insert_point({}, Vec3(1, 2, 3)), Vec3(1, 2, 3));
    EXPECT_EQ(s.n, 2u);
    EXPECT_EQ(s.mean, Vec3(1, 2, 3));
    EXPECT_EQ(s.scatter().matrix(), Mat3::Zero());
}

TEST(VoxelStats, IncrementalMatchesBatch) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 10000; ++i) pts.emplace_back(100 + 2 * g(rng), -50 + 0.5 * g(rng), 3 + 0.01 * g(rng));
    const VoxelStats s = stats_of(pts);
    const auto b = batch_stats(pts);
    EXPECT_LE((s.mean - b.mean).norm() / b.mean.norm(), 1e-9);
    EXPECT_LE((s.scatter().matrix() - b.scatter).norm() / b.scatter.norm(), 1e-9);
    EXPECT_GE(jacobi_eigen(s.scatter().matrix()).values[0], -1e-12);
}

TEST(PlaneStats, DiagonalScatter) {
    const PlaneStats ps = voxel_plane_stats(stats_with_scatter(Vec3(0, 1, 4).asDiagonal()));
    EXPECT_NEAR(ps.lambda[0], 0.0, 1e-15);
    EXPECT_NEAR(ps.lambda[1], 1.0, 1e-12);
    EXPECT_NEAR(ps.lambda[2], 4.0, 1e-12);
    EXPECT_EQ(ps.eta, 0.0);
    // +z is orthogonal to the normal, so the first non-zero component decides
    EXPECT_NEAR(ps.normal.x(), 1.0, 1e-12);
    EXPECT_NEAR(ps.axes.determinant(), 1.0, 1e-12);
}

TEST(PlaneStats, NormalFacesSensor) {
    const VoxelStats s = stats_with_scatter(Vec3(0.01, 1, 4).asDiagonal());
    EXPECT_LT(voxel_plane_stats(s, 4, Vec3(-5, 0, 0)).normal.x(), -0.99);
    EXPECT_GT(voxel_plane_stats(s, 4, Vec3(5, 0, 0)).normal.x(), 0.99);
    const VoxelStats flat = stats_with_scatter(Vec3(1, 4, 0.01).asDiagonal());
    EXPECT_GT(voxel_plane_stats(flat).normal.z(), 0.99);
}

TEST(PlaneStats, IsotropicEta) {
    const PlaneStats ps = voxel_plane_stats(stats_with_scatter(Mat3::Identity()));
    EXPECT_NEAR(ps.eta, 1.0 / std::sqrt(3.0), 1e-12);
}

TEST(PlaneStats, InsufficientSupport) {
    VoxelStats s;
    for (int i = 0; i < 3; ++i) s = insert_point(s, Vec3(i, 0, 0));
    try {
        voxel_plane_stats(s, 4);
        FAIL();
    } catch (const Error &e) {
        EXPECT_STREQ(e.what(), "insufficient support");
    }
}

TEST(PlaneStats, NoisyPlaneMatchesDenseSolver) {
    std::mt19937_64 rng(2);
    const auto pts = noisy_plane(rng, 20000, 0.01);
    const VoxelStats s = stats_of(pts);
    const PlaneStats ps = voxel_plane_stats(s);
    const auto ref = jacobi_eigen(batch_stats(pts).scatter);
    EXPECT_NEAR(ps.lambda[0], 1e-4, 1e-5);
    EXPECT_LE((ps.lambda - ref.values).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(ps.eta, eta_oracle(batch_stats(pts).scatter), 1e-6);
    EXPECT_NEAR(std::abs(ps.normal.dot(ref.vectors.col(0))), 1.0, 1e-6);
    EXPECT_NEAR(ps.eta, 1e-4 / std::sqrt(ps.lambda[1] * ps.lambda[1] + ps.lambda[2] * ps.lambda[2] + 1e-8), 2e-5);
}

TEST(PlaneStats, EtaRotationInvariant) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::normal_distribution<double> g(0.0, 1.0);
        std::vector<Vec3> pts;
        const Vec3 sd(0.3, 0.1, 0.02 * (trial + 1));
        for (int i = 0; i < 500; ++i) pts.emplace_back(sd.x() * g(rng), sd.y() * g(rng), sd.z() * g(rng));
        const Mat3 r = rotation_matrix(gaussmap::testing::random_quat(rng));
        std::vector<Vec3> rotated, doubled;
        for (const auto &p : pts) {
            rotated.push_back(r * p + Vec3(3, -2, 1));
            doubled.push_back(2 * p);
        }
        const PlaneStats a = voxel_plane_stats(stats_of(pts));
        const PlaneStats b = voxel_plane_stats(stats_of(rotated));
        const PlaneStats c = voxel_plane_stats(stats_of(doubled));
        EXPECT_NEAR(a.eta, b.eta, 1e-9);
        EXPECT_NEAR(a.eta, c.eta, 1e-9);
        EXPECT_LE((4 * a.lambda - c.lambda).cwiseAbs().maxCoeff(), 1e-9 * c.lambda.maxCoeff());
        EXPECT_GE(a.eta, 0.0);
        EXPECT_LE(a.eta, 1 / std::sqrt(3.0) + 1e-15);
    }
}

TEST(VoxelMapBuild, ExactPlaneStaysOneLeaf) {
    std::mt19937_64 rng(4);
    PointCloud c;
    for (const auto &p : noisy_plane(rng, 1000, 0.0)) c.points.push_back(p);
    const VoxelMap m = build_voxel_map(c, VoxelParams{});
    ASSERT_EQ(m.leaves.size(), 1u);
    EXPECT_EQ(m.leaves[0].key.depth, 0);
    EXPECT_TRUE(m.leaves[0].planar());
    EXPECT_EQ(m.leaves[0].plane->eta, 0.0);
    EXPECT_EQ(m.leaves[0].stats.n, 1000u);
}

TEST(VoxelMapBuild, IsotropicBlobSubdivides) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.5, 0.1);
    PointCloud c;
    for (int i = 0; i < 4000; ++i) c.points.emplace_back(g(rng), g(rng), g(rng));
    for (double thr : {0.05, 0.3, 0.5}) {
        VoxelParams vp;
        vp.eta_threshold = thr;
        const VoxelMap m = build_voxel_map(c, vp);
        EXPECT_GT(m.leaves.size(), 8u) << thr;
    }
    VoxelParams vp;
    vp.eta_threshold = 0.58;
    EXPECT_EQ(build_voxel_map(c, vp).leaves.size(), 1u);
}

TEST(VoxelMapBuild, PerpendicularPlanesCorner) {
    // floor z = 0.74 for x <= 0.49 meeting a wall x = 0.49 for z >= 0.74
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PointCloud c;
    for (int i = 0; i < 6000; ++i) c.points.emplace_back(0.49 * u(rng), u(rng), 0.74);
    for (int i = 0; i < 3200; ++i) c.points.emplace_back(0.49, u(rng), 0.74 + 0.26 * u(rng));
    VoxelParams vp;
    vp.max_depth = 2;
    vp.eta_threshold = 0.03; // the whole L has eta near 0.04
    const VoxelMap m = build_voxel_map(c, vp);
    int depth2 = 0, planar2 = 0;
    for (const auto &leaf : m.leaves) {
        std::vector<Vec3> pts;
        for (auto i : leaf.points) pts.push_back(c.points[i]);
        ASSERT_EQ(pts.size(), leaf.stats.n);
        if (leaf.stats.n >= 10) {
            const bool oracle_planar = eta_oracle(batch_stats(pts).scatter) < vp.eta_threshold;
            EXPECT_EQ(leaf.planar(), oracle_planar);
        }
        if (leaf.key.depth == 2) {
            ++depth2;
            planar2 += leaf.planar();
        }
    }
    ASSERT_GT(depth2, 0);
    EXPECT_GE(planar2, 0.9 * depth2);
}

TEST(VoxelMapBuild, CrossingPlanesIntersectionLeavesAreThick) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PointCloud c;
    for (int i = 0; i < 8000; ++i) c.points.emplace_back(0.3, u(rng), u(rng));
    for (int i = 0; i < 8000; ++i) c.points.emplace_back(u(rng), u(rng), 0.6);
    VoxelParams vp;
    vp.max_depth = 2;
    const VoxelMap m = build_voxel_map(c, vp);
    for (const auto &leaf : m.leaves) {
        if (leaf.key.depth != 2) continue;
        const double e = m.edge(leaf);
        const bool holds_x = leaf.key.i * e <= 0.3 && 0.3 < (leaf.key.i + 1) * e;
        const bool holds_z = leaf.key.k * e <= 0.6 && 0.6 < (leaf.key.k + 1) * e;
        EXPECT_EQ(leaf.planar(), !(holds_x && holds_z));
    }
}

TEST(VoxelMapBuild, PointsConservedAndLeavesValid) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::normal_distribution<double> g(0.0, 0.02);
    PointCloud c;
    for (int i = 0; i < 5000; ++i) c.points.emplace_back(u(rng), u(rng), 0.3 * std::sin(u(rng)) + g(rng));
    for (int i = 0; i < 300; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
    const VoxelParams vp;
    const VoxelMap m = build_voxel_map(c, vp);
    EXPECT_EQ(m.point_count(), c.size());
    std::vector<int> seen(c.size(), 0);
    for (const auto &leaf : m.leaves) {
        const double e = m.edge(leaf);
        const Vec3 lo = m.center(leaf) - Vec3::Constant(0.5 * e);
        for (auto i : leaf.points) {
            ++seen[i];
            const Vec3 d = c.points[i] - lo;
            EXPECT_TRUE(d.minCoeff() >= 0 && d.maxCoeff() < e);
        }
        if (leaf.planar()) {
            EXPECT_GE(leaf.stats.n, static_cast<std::size_t>(vp.min_points));
            EXPECT_LT(leaf.plane->eta, vp.eta_threshold);
        } else {
            EXPECT_TRUE(leaf.key.depth == vp.max_depth || leaf.stats.n < static_cast<std::size_t>(vp.min_points));
        }
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    EXPECT_TRUE(std::is_sorted(m.leaves.begin(), m.leaves.end(),
                               [](const VoxelNode &a, const VoxelNode &b) { return a.key < b.key; }));
}

TEST(VoxelMapBuild, DumpFormat) {
    PointCloud c;
    for (int i = 0; i < 12; ++i) c.points.emplace_back(0.05 * i, 0.07 * (i % 5), 0.0);
    std::ostringstream os;
    dump_voxel_map(build_voxel_map(c, VoxelParams{}), os);
    std::istringstream in(os.str());
    int depth;
    std::string key;
    std::size_t n;
    double eta, l0, l1, l2, nx, ny, nz;
    ASSERT_TRUE(in >> depth >> key >> n >> eta >> l0 >> l1 >> l2 >> nx >> ny >> nz);
    EXPECT_EQ(depth, 0);
    EXPECT_EQ(key, "0,0,0");
    EXPECT_EQ(n, 12u);
    EXPECT_NEAR(nz, 1.0, 1e-12);
}

TEST(VoxelMapBuild, RejectsBadInput) {
    EXPECT_THROW(build_voxel_map(PointCloud{}, VoxelParams{}), Error);
    PointCloud c;
    c.points.emplace_back(0, 0, 0);
    VoxelParams vp;
    vp.min_points = 3;
    EXPECT_THROW(build_voxel_map(c, vp), Error);
    vp = {};
    vp.root_size = 0;
    EXPECT_THROW(build_voxel_map(c, vp), Error);
}
