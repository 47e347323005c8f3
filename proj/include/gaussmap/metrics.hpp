#pragma once

// Image metrics (PSNR, SSIM) and point-cloud structure metrics (Chamfer,
// EMD, F-score).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "gaussmap/core.hpp"
#include "gaussmap/loss.hpp"

namespace gaussmap {

inline constexpr double kPsnrCap = 99.0;

inline double mse(const ImageBuffer &a, const ImageBuffer &b) {
    ssim_detail::require_same_size(a, b, "mse");
    if (a.data().empty()) throw Error("mse: empty image");
    double s = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data().size());
}

inline double psnr(const ImageBuffer &a, const ImageBuffer &b) {
    const double m = mse(a, b);
    return m < 1e-10 ? kPsnrCap : 10.0 * std::log10(1.0 / m);
}

/// Exact nearest-neighbour queries over a uniform grid.
class PointGrid {
public:
    explicit PointGrid(const std::vector<Vec3> &pts) : pts_(pts) {
        if (pts.empty()) throw Error("PointGrid: empty cloud");
        lo_ = hi_ = pts[0];
        for (const auto &p : pts) {
            lo_ = lo_.cwiseMin(p);
            hi_ = hi_.cwiseMax(p);
        }
        const Vec3 ext = (hi_ - lo_).cwiseMax(1e-9);
        // about two points per occupied cell on surface-like data
        cell_ = std::max(std::sqrt(std::max({ext.x() * ext.y(), ext.y() * ext.z(), ext.x() * ext.z()}) /
                                   static_cast<double>(pts.size()) * 2.0),
                         ext.maxCoeff() / 1024.0);
        for (std::uint32_t i = 0; i < pts.size(); ++i) cells_[hash(cell_of(pts[i]))].push_back(i);
        for (int a = 0; a < 3; ++a) span_[a] = static_cast<std::int64_t>(std::floor(ext[a] / cell_)) + 1;
    }

    /// Index and distance of the closest point.
    std::pair<std::uint32_t, double> nearest(const Vec3 &q) const {
        // rings grow around the query's cell clamped into the grid; every
        // point outside ring r is at least r cells away from q
        Key c = cell_of(q);
        for (int a = 0; a < 3; ++a) c[a] = std::clamp<std::int64_t>(c[a], 0, span_[a] - 1);
        double best2 = std::numeric_limits<double>::infinity();
        std::uint32_t best = 0;
        auto visit = [&](const Key &k) {
            auto it = cells_.find(hash(k));
            if (it == cells_.end()) return;
            for (auto i : it->second) {
                const double d2 = (pts_[i] - q).squaredNorm();
                if (d2 < best2 || (d2 == best2 && i < best)) {
                    best2 = d2;
                    best = i;
                }
            }
        };
        const std::int64_t max_ring = std::max({span_[0], span_[1], span_[2]});
        for (std::int64_t r = 0; r <= max_ring; ++r) {
            std::int64_t lo[3], hi[3];
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::max(c[a] - r, std::int64_t{0});
                hi[a] = std::min(c[a] + r, span_[a] - 1);
            }
            for (std::int64_t x = lo[0]; x <= hi[0]; ++x)
                for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
                    if (std::abs(x - c[0]) == r || std::abs(y - c[1]) == r) {
                        for (std::int64_t z = lo[2]; z <= hi[2]; ++z) visit({x, y, z});
                    } else {
                        if (c[2] - r >= 0) visit({x, y, c[2] - r});
                        if (r > 0 && c[2] + r < span_[2]) visit({x, y, c[2] + r});
                    }
                }
            const double reach = static_cast<double>(r) * cell_;
            if (best2 <= reach * reach) break;
        }
        return {best, std::sqrt(best2)};
    }

private:
    using Key = std::array<std::int64_t, 3>;

    Key cell_of(const Vec3 &p) const {
        Key k;
        for (int a = 0; a < 3; ++a) k[a] = static_cast<std::int64_t>(std::floor((p[a] - lo_[a]) / cell_));
        return k;
    }
    static std::uint64_t hash(const Key &k) {
        return (static_cast<std::uint64_t>(k[0]) * 73856093ULL) ^ (static_cast<std::uint64_t>(k[1]) * 19349663ULL) ^
               (static_cast<std::uint64_t>(k[2]) * 83492791ULL) ^ (static_cast<std::uint64_t>(k[0]) << 42);
    }

    const std::vector<Vec3> &pts_;
    Vec3 lo_, hi_;
    double cell_ = 1.0;
    std::array<std::int64_t, 3> span_{};
    // hash collisions only merge buckets; distances are always recomputed
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

namespace metrics_detail {

inline void require_nonempty(const PointCloud &a, const PointCloud &b, const char *who) {
    if (a.empty() || b.empty()) throw Error(std::string(who) + ": empty cloud");
}

inline std::vector<double> nn_distances(const PointCloud &from, const PointCloud &to) {
    const PointGrid grid(to.points);
    std::vector<double> d(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) d[i] = grid.nearest(from.points[i]).second;
    return d;
}

inline double mean(const std::vector<double> &v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline PointCloud subsample(const PointCloud &c, std::size_t n, std::mt19937_64 &rng) {
    if (c.size() <= n) return c;
    std::vector<std::uint32_t> idx(c.size());
    for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    PointCloud out;
    for (std::size_t i = 0; i < n; ++i) out.points.push_back(c.points[idx[i]]);
    return out;
}

// Minimum-cost perfect matching on a dense n x n cost matrix (shortest
// augmenting paths with potentials). Returns row -> column.
template <typename CostFn>
std::vector<int> hungarian(int n, CostFn &&cost) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> match(n);
    for (int j = 1; j <= n; ++j) match[p[j] - 1] = j - 1;
    return match;
}

} // namespace metrics_detail

/// 0.5 (mean_p min_q |p - q| + mean_q min_p |q - p|), unsquared distances.
inline double chamfer(const PointCloud &pred, const PointCloud &gt) {
    metrics_detail::require_nonempty(pred, gt, "chamfer");
    return 0.5 * (metrics_detail::mean(metrics_detail::nn_distances(pred, gt)) +
                  metrics_detail::mean(metrics_detail::nn_distances(gt, pred)));
}

/// Mean matched distance of the optimal one-to-one assignment. Inputs larger
/// than max_points are uniformly subsampled (seeded); after subsampling both
/// clouds must have the same size.
inline double emd(const PointCloud &pred, const PointCloud &gt, std::size_t max_points = 2048, std::uint64_t seed = 0) {
    metrics_detail::require_nonempty(pred, gt, "emd");
    std::mt19937_64 rng(seed);
    const PointCloud a = metrics_detail::subsample(pred, max_points, rng);
    const PointCloud b = metrics_detail::subsample(gt, max_points, rng);
    if (a.size() != b.size())
        throw Error("emd: clouds differ in size (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    const int n = static_cast<int>(a.size());
    const auto match = metrics_detail::hungarian(n, [&](int i, int j) { return (a.points[i] - b.points[j]).norm(); });
    double s = 0;
    for (int i = 0; i < n; ++i) s += (a.points[i] - b.points[match[i]]).norm();
    return s / n;
}

struct FScore {
    double precision = 0, recall = 0, f = 0;
};

inline FScore fscore_detail(const PointCloud &pred, const PointCloud &gt, double tau) {
    metrics_detail::require_nonempty(pred, gt, "fscore");
    if (!(tau > 0)) throw Error("fscore: threshold must be positive");
    auto frac = [tau](const std::vector<double> &d) {
        std::size_t k = 0;
        for (double x : d) k += x <= tau;
        return static_cast<double>(k) / static_cast<double>(d.size());
    };
    FScore r;
    r.precision = frac(metrics_detail::nn_distances(pred, gt));
    r.recall = frac(metrics_detail::nn_distances(gt, pred));
    r.f = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

inline double fscore(const PointCloud &pred, const PointCloud &gt, double tau = 0.05) {
    return fscore_detail(pred, gt, tau).f;
}

struct StructureReport {
    double cd = 0, emd = 0, fscore = 0, precision = 0, recall = 0;
    std::size_t pred_points = 0, gt_points = 0, emd_points = 0;
};

/// EMD is taken on equal-size subsamples of min(|pred|, |gt|, emd_max_points).
inline StructureReport structure_report(const PointCloud &pred, const PointCloud &gt, double tau = 0.05,
                                        std::size_t emd_max_points = 2048, std::uint64_t seed = 0) {
    StructureReport r;
    r.pred_points = pred.size();
    r.gt_points = gt.size();
    r.cd = chamfer(pred, gt);
    const FScore f = fscore_detail(pred, gt, tau);
    r.fscore = f.f;
    r.precision = f.precision;
    r.recall = f.recall;
    r.emd_points = std::min({pred.size(), gt.size(), emd_max_points});
    r.emd = emd(pred, gt, r.emd_points, seed);
    return r;
}

/// Means when samples_per_gaussian == 1, else i.i.d. draws from each
/// Gaussian.
inline PointCloud gaussians_to_cloud(const Scene &scene, int samples_per_gaussian = 1, std::uint64_t seed = 0) {
    if (scene.empty()) throw Error("gaussians_to_cloud: empty scene");
    if (samples_per_gaussian < 1) throw Error("gaussians_to_cloud: samples_per_gaussian must be >= 1");
    PointCloud out;
    out.points.reserve(scene.size() * static_cast<std::size_t>(samples_per_gaussian));
    if (samples_per_gaussian == 1) {
        for (const auto &g : scene) out.points.push_back(g.mean);
        return out;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (const auto &g : scene) {
        const Mat3 r = rotation_matrix(g.rotation);
        const Vec3 sd = g.scale.array().exp();
        for (int s = 0; s < samples_per_gaussian; ++s) {
            const Vec3 z(n01(rng), n01(rng), n01(rng));
            out.points.push_back(g.mean + r * sd.cwiseProduct(z));
        }
    }
    return out;
}

} // namespace gaussmap
