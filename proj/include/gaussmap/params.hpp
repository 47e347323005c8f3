#pragma once

// Flat view of a SurfaceGaussian's optimizable parameters. The layout is
// shared by the optimizer state, gradient buffers, and finite-difference
// checks.

#include <array>

#include "gaussmap/core.hpp"

namespace gaussmap {

enum class ParamGroup { Mean, Scale, Rotation, Opacity, ShDc, ShRest };

inline constexpr int kParamCount = 3 + 3 + 4 + 1 + kShCoeffCount; // 38

// offsets into the flat block
inline constexpr int kMeanOffset = 0;
inline constexpr int kScaleOffset = 3;
inline constexpr int kRotationOffset = 6;
inline constexpr int kOpacityOffset = 10;
inline constexpr int kShOffset = 11; // channel-major: sh(c, j) at kShOffset + 9 c + j

using ParamBlock = std::array<double, kParamCount>;

inline constexpr ParamGroup param_group(int i) {
    if (i < kScaleOffset) return ParamGroup::Mean;
    if (i < kRotationOffset) return ParamGroup::Scale;
    if (i < kOpacityOffset) return ParamGroup::Rotation;
    if (i < kShOffset) return ParamGroup::Opacity;
    return ((i - kShOffset) % kShCoeffsPerChannel) == 0 ? ParamGroup::ShDc : ParamGroup::ShRest;
}

/// SH degree of a flat sh index (0 for DC).
inline constexpr int param_sh_degree(int i) {
    const int j = (i - kShOffset) % kShCoeffsPerChannel;
    return j == 0 ? 0 : j < 4 ? 1 : 2;
}

inline const char *param_group_name(ParamGroup g) {
    switch (g) {
    case ParamGroup::Mean: return "mean";
    case ParamGroup::Scale: return "scale";
    case ParamGroup::Rotation: return "rotation";
    case ParamGroup::Opacity: return "opacity";
    case ParamGroup::ShDc: return "sh_dc";
    case ParamGroup::ShRest: return "sh_rest";
    }
    return "?";
}

inline ParamBlock to_block(const SurfaceGaussian &g) {
    ParamBlock b{};
    for (int i = 0; i < 3; ++i) {
        b[kMeanOffset + i] = g.mean[i];
        b[kScaleOffset + i] = g.scale[i];
    }
    for (int i = 0; i < 4; ++i) b[kRotationOffset + i] = g.rotation[i];
    b[kOpacityOffset] = g.opacity_logit;
    for (int c = 0; c < 3; ++c)
        for (int j = 0; j < kShCoeffsPerChannel; ++j) b[kShOffset + 9 * c + j] = g.sh(c, j);
    return b;
}

inline SurfaceGaussian from_block(const ParamBlock &b) {
    SurfaceGaussian g;
    for (int i = 0; i < 3; ++i) {
        g.mean[i] = b[kMeanOffset + i];
        g.scale[i] = b[kScaleOffset + i];
    }
    for (int i = 0; i < 4; ++i) g.rotation[i] = b[kRotationOffset + i];
    g.opacity_logit = b[kOpacityOffset];
    for (int c = 0; c < 3; ++c)
        for (int j = 0; j < kShCoeffsPerChannel; ++j) g.sh(c, j) = b[kShOffset + 9 * c + j];
    return g;
}

} // namespace gaussmap
