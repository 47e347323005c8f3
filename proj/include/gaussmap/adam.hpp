#pragma once

#include <cmath>
#include <vector>

#include "gaussmap/adaptive_control.hpp"
#include "gaussmap/params.hpp"

namespace gaussmap {

/// Per-parameter Adam moments, one ParamBlock row per Gaussian.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
    long long step = 0;
    std::vector<ParamBlock> m, v;

    explicit AdamState(std::size_t n = 0) : m(n, ParamBlock{}), v(n, ParamBlock{}) {}
    std::size_t size() const { return m.size(); }

    /// Moves each row to its post-event position: clones copy their parent's
    /// moments, pruned rows are dropped.
    void apply(const ControlEvent &ev) {
        for (std::size_t c = 0; c < ev.cloned_from.size(); ++c) {
            if (ev.clone_ids[c] != m.size()) throw Error("AdamState: clone ids out of sequence");
            m.push_back(m[ev.cloned_from[c]]);
            v.push_back(v[ev.cloned_from[c]]);
        }
        if (ev.id_map.empty()) return;
        if (ev.id_map.size() != m.size()) throw Error("AdamState: id map does not match state size");
        std::vector<ParamBlock> m2, v2;
        for (std::size_t i = 0; i < ev.id_map.size(); ++i)
            if (ev.id_map[i] >= 0) {
                m2.push_back(m[i]);
                v2.push_back(v[i]);
            }
        m = std::move(m2);
        v = std::move(v2);
    }
};

/// One Adam update of the scene. lr[g] is the rate for ParamGroup g; a rate
/// of zero freezes the group (its moments are left untouched).
inline void adam_step(Scene &scene, AdamState &st, const ParamGrads &g, const std::array<double, 6> &lr) {
    if (scene.size() != st.size() || g.size() != st.size()) throw Error("adam_step: size mismatch");
    ++st.step;
    const double bc1 = 1 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1 - std::pow(st.beta2, static_cast<double>(st.step));
    std::array<double, kParamCount> rate;
    for (int i = 0; i < kParamCount; ++i) rate[i] = lr[static_cast<int>(param_group(i))];
    for (std::size_t k = 0; k < scene.size(); ++k) {
        ParamBlock b = to_block(scene[k]);
        ParamBlock &m = st.m[k], &v = st.v[k];
        const ParamBlock &d = g.d[k];
        for (int i = 0; i < kParamCount; ++i) {
            if (rate[i] == 0) continue;
            m[i] = st.beta1 * m[i] + (1 - st.beta1) * d[i];
            v[i] = st.beta2 * v[i] + (1 - st.beta2) * d[i] * d[i];
            b[i] -= rate[i] * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + st.eps);
        }
        scene[k] = from_block(b);
        scene[k].rotation.normalize();
    }
}

} // namespace gaussmap
