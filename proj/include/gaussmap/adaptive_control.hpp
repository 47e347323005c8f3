#pragma once

// Densification (self-cloning of Gaussians with large screen-space positional
// gradients) and pruning of near-transparent Gaussians.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gaussmap/backward.hpp"

namespace gaussmap {

inline constexpr double kCloneShrink = 1.6;

struct ControlEvent {
    int iteration = 0;
    std::vector<std::uint32_t> cloned_from; // parent id for each clone
    std::vector<std::uint32_t> clone_ids;   // ids the clones received
    std::vector<double> clone_triggers;     // mean screen gradient of each parent
    std::vector<std::uint32_t> pruned;      // ids before removal
    std::vector<double> prune_triggers;     // opacity of each pruned Gaussian
    std::vector<std::int64_t> id_map;       // old id -> new id, -1 when pruned; empty when unchanged

    bool empty() const { return cloned_from.empty() && pruned.empty(); }
};

/// Screen-gradient norms summed over the views each Gaussian was visible in.
struct GradAccumulator {
    std::vector<double> sum;
    std::vector<std::uint32_t> count;

    explicit GradAccumulator(std::size_t n = 0) : sum(n, 0.0), count(n, 0) {}

    void add(const ParamGrads &g) {
        if (g.size() != sum.size()) throw Error("GradAccumulator: size mismatch");
        for (std::size_t i = 0; i < sum.size(); ++i)
            if (g.visible[i]) {
                sum[i] += g.screen_grad[i];
                ++count[i];
            }
    }
    double mean(std::size_t i) const { return count[i] ? sum[i] / count[i] : 0.0; }
    void reset(std::size_t n) { *this = GradAccumulator(n); }
};

/// Clones every Gaussian whose mean accumulated screen gradient exceeds tau.
/// Clones are appended in parent order; the accumulator is reset.
inline ControlEvent densify(Scene &scene, GradAccumulator &acc, double tau, std::mt19937_64 &rng) {
    if (acc.sum.size() != scene.size()) throw Error("densify: accumulator does not match scene");
    ControlEvent ev;
    std::normal_distribution<double> n01(0.0, 1.0);
    const std::size_t n = scene.size();
    for (std::uint32_t i = 0; i < n; ++i) {
        const double m = acc.mean(i);
        if (!(m > tau)) continue;
        SurfaceGaussian c = scene[i];
        const Vec3 z(n01(rng), n01(rng), n01(rng));
        c.mean += rotation_matrix(c.rotation) * c.scale.array().exp().matrix().cwiseProduct(z);
        c.scale.array() -= std::log(kCloneShrink);
        ev.cloned_from.push_back(i);
        ev.clone_ids.push_back(static_cast<std::uint32_t>(scene.size()));
        ev.clone_triggers.push_back(m);
        scene.push_back(c);
    }
    acc.reset(scene.size());
    return ev;
}

/// Removes every Gaussian with opacity below sigma_min, keeping survivor
/// order.
inline ControlEvent prune(Scene &scene, double sigma_min) {
    ControlEvent ev;
    std::vector<std::int64_t> map(scene.size(), -1);
    Scene kept;
    kept.reserve(scene.size());
    for (std::uint32_t i = 0; i < scene.size(); ++i) {
        const double o = scene[i].opacity();
        if (o < sigma_min) {
            ev.pruned.push_back(i);
            ev.prune_triggers.push_back(o);
        } else {
            map[i] = static_cast<std::int64_t>(kept.size());
            kept.push_back(scene[i]);
        }
    }
    if (!ev.pruned.empty()) {
        ev.id_map = std::move(map);
        scene = std::move(kept);
    }
    return ev;
}

} // namespace gaussmap
