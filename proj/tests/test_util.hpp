#pragma once

// Shared fixtures for the test suites: random scene generators and a
// finite-difference gradient oracle that only uses the forward path.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "gaussmap/backward.hpp"
#include "gaussmap/loss.hpp"
#include "gaussmap/params.hpp"
#include "gaussmap/render.hpp"

namespace gaussmap::testing {

struct JacobiEigen {
    Vec3 values;  // ascending
    Mat3 vectors; // columns match values
};

// Cyclic Jacobi rotations; independent of the Eigen solver used by the
// library.
inline JacobiEigen jacobi_eigen(Mat3 a) {
    Mat3 v = Mat3::Identity();
    for (int sweep = 0; sweep < 100; ++sweep) {
        const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
        if (off < 1e-300) break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1), s = t * c;
                Mat3 j = Mat3::Identity();
                j(p, p) = c; j(q, q) = c; j(p, q) = s; j(q, p) = -s;
                a = j.transpose() * a * j;
                v = v * j;
            }
    }
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3, [&](int x, int y) { return a(x, x) < a(y, y); });
    JacobiEigen out;
    for (int k = 0; k < 3; ++k) {
        out.values[k] = a(order[k], order[k]);
        out.vectors.col(k) = v.col(order[k]);
    }
    return out;
}

inline Vec3 jacobi_eigenvalues(const Mat3 &a) { return jacobi_eigen(a).values; }

// Direct 2D-window SSIM with explicit symmetric padding, no separable
// filtering.
inline double reference_ssim(const ImageBuffer &a, const ImageBuffer &b) {
    const int w = a.width(), h = a.height();
    double g[11][11], sum = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            sum += g[i][j];
        }
    auto refl = [](int i, int n) { return i < 0 ? -i - 1 : i >= n ? 2 * n - i - 1 : i; };
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const int yy = refl(y + i - 5, h), xx = refl(x + j - 5, w);
                        const double wt = g[i][j] / sum;
                        const double va = a.at(xx, yy, c), vb = b.at(xx, yy, c);
                        mx += wt * va; my += wt * vb;
                        sxx += wt * va * va; syy += wt * vb * vb; sxy += wt * va * vb;
                    }
                const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
                total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
    return total / (3.0 * w * h);
}

inline CameraIntrinsics small_intrinsics(int size = 32, double f = 30.0) {
    return {f, f, size / 2.0, size / 2.0, size, size};
}

inline QuatWXYZ random_quat(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    QuatWXYZ q(n(rng), n(rng), n(rng), n(rng));
    return q / q.norm();
}

/// Gaussians scattered in the view frustum of an identity-pose camera.
inline Scene random_scene(std::mt19937_64 &rng, int count, double sh_rest_scale = 0.2) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Scene scene;
    for (int i = 0; i < count; ++i) {
        SurfaceGaussian g;
        const double z = 1.5 + 1.5 * u(rng);
        g.mean = {(u(rng) - 0.5) * 0.9 * z, (u(rng) - 0.5) * 0.9 * z, z};
        for (int a = 0; a < 3; ++a) g.scale[a] = std::log(0.04 + 0.12 * u(rng));
        g.rotation = random_quat(rng);
        g.opacity_logit = -1.0 + 3.0 * u(rng);
        for (int c = 0; c < 3; ++c) {
            g.sh(c, 0) = (u(rng) - 0.5) * 1.6;
            for (int j = 1; j < 9; ++j) g.sh(c, j) = (u(rng) - 0.5) * 2.0 * sh_rest_scale;
        }
        scene.push_back(g);
    }
    return scene;
}

inline ImageBuffer random_image(std::mt19937_64 &rng, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageBuffer img(w, h);
    for (double &v : img.data()) v = u(rng);
    return img;
}

/// Exact settings with a support wide enough that tile culling never drops
/// a contribution a finite-difference step could see.
inline RenderSettings gradient_check_settings() {
    RenderSettings rs = RenderSettings::exact();
    rs.support_sigmas = 12.0;
    return rs;
}

inline double scene_loss(const Scene &scene, const Camera &cam, const ImageBuffer &ref,
                         const RenderSettings &rs, const LossSettings &ls) {
    return photometric_loss(render(scene, cam, rs).image, ref, ls).value;
}

/// Central finite differences of the loss for every flat parameter.
inline std::vector<ParamBlock> finite_difference_grads(const Scene &scene, const Camera &cam,
                                                       const ImageBuffer &ref, const RenderSettings &rs,
                                                       const LossSettings &ls, double h = 1e-4) {
    std::vector<ParamBlock> fd(scene.size());
    Scene work = scene;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const ParamBlock base = to_block(scene[i]);
        for (int k = 0; k < kParamCount; ++k) {
            ParamBlock b = base;
            b[k] = base[k] + h;
            work[i] = from_block(b);
            const double lp = scene_loss(work, cam, ref, rs, ls);
            b[k] = base[k] - h;
            work[i] = from_block(b);
            const double lm = scene_loss(work, cam, ref, rs, ls);
            fd[i][k] = (lp - lm) / (2 * h);
        }
        work[i] = scene[i];
    }
    return fd;
}

/// Relative error |analytic - fd| / |fd| per parameter group, over all
/// Gaussians.
inline std::map<ParamGroup, double> group_relative_errors(const std::vector<ParamBlock> &analytic,
                                                          const std::vector<ParamBlock> &fd) {
    std::map<ParamGroup, double> diff2, ref2;
    for (std::size_t i = 0; i < fd.size(); ++i)
        for (int k = 0; k < kParamCount; ++k) {
            const ParamGroup g = param_group(k);
            diff2[g] += (analytic[i][k] - fd[i][k]) * (analytic[i][k] - fd[i][k]);
            ref2[g] += fd[i][k] * fd[i][k];
        }
    std::map<ParamGroup, double> out;
    for (auto &[g, d] : diff2) out[g] = std::sqrt(d) / std::max(std::sqrt(ref2[g]), 1e-300);
    return out;
}

// Per-pixel compositor with no tiling, no screen bounds and no skip rules.
inline ImageBuffer brute_force_render(const Scene &scene, const Camera &cam, const RenderSettings &rs,
                                      std::vector<double> *weights_plus_t = nullptr) {
    RenderSettings unbounded = rs;
    unbounded.support_sigmas = 1e9;
    std::vector<Splat2D> splats;
    for (std::uint32_t i = 0; i < scene.size(); ++i)
        if (auto s = project_gaussian(scene[i], i, cam, unbounded)) splats.push_back(*s);
    std::vector<std::uint32_t> order(splats.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        return std::make_pair(splats[a].depth, splats[a].gaussian_id) < std::make_pair(splats[b].depth, splats[b].gaussian_id);
    });
    const int w = cam.intrinsics.width, h = cam.intrinsics.height;
    ImageBuffer img(w, h);
    if (weights_plus_t) weights_plus_t->assign(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double t = 1.0, wsum = 0.0;
            Vec3 c = Vec3::Zero();
            for (auto i : order) {
                const double a = splats[i].opacity * splats[i].kernel(x, y);
                c += splats[i].color * a * t;
                wsum += a * t;
                t *= 1 - a;
            }
            img.set_pixel(x, y, c + t * rs.background);
            if (weights_plus_t) (*weights_plus_t)[static_cast<std::size_t>(y) * w + x] = wsum + t;
        }
    return img;
}

inline double max_abs_diff(const ImageBuffer &a, const ImageBuffer &b) {
    double m = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

struct Batch {
    Vec3 mean;
    Mat3 scatter;
};

// Two-pass mean and covariance over a point list.
inline Batch batch_stats(const std::vector<Vec3> &pts) {
    Batch b{Vec3::Zero(), Mat3::Zero()};
    for (const auto &p : pts) b.mean += p;
    b.mean /= static_cast<double>(pts.size());
    for (const auto &p : pts) b.scatter += (p - b.mean) * (p - b.mean).transpose();
    b.scatter /= static_cast<double>(pts.size());
    return b;
}

// volatile keeps gcc 11 at -O3 from vectorizing a loop of these calls,
// which drops the cast on the loop tail
inline double round_f32(double v) {
    volatile float f = static_cast<float>(v);
    return f;
}

} // namespace gaussmap::testing
