#pragma once

// Photometric training loss: (1 - lambda) * mean|I_hat - I| + lambda * D-SSIM,
// with D-SSIM = (1 - SSIM) / 2. SSIM uses an 11x11 Gaussian window
// (sigma 1.5), K1 = 0.01, K2 = 0.03, symmetric border padding, and is
// averaged over pixels and channels.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "gaussmap/core.hpp"

namespace gaussmap {

namespace ssim_detail {

inline constexpr int kRadius = 5;
inline constexpr int kWindow = 2 * kRadius + 1;
inline constexpr double kSigma = 1.5;
inline constexpr double kC1 = 0.01 * 0.01;
inline constexpr double kC2 = 0.03 * 0.03;

inline const std::array<double, kWindow> &window() {
    static const std::array<double, kWindow> w = [] {
        std::array<double, kWindow> v{};
        double sum = 0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kRadius;
            v[i] = std::exp(-d * d / (2 * kSigma * kSigma));
            sum += v[i];
        }
        for (double &x : v) x /= sum;
        return v;
    }();
    return w;
}

// symmetric padding: -1 -> 0, n -> n - 1
inline int reflect(int i, int n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - i - 1;
    return i;
}

/// Single-channel plane, row-major.
using Plane = std::vector<double>;

inline Plane blur(const Plane &src, int w, int h) {
    const auto &k = window();
    Plane tmp(src.size()), dst(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int t = 0; t < kWindow; ++t) acc += k[t] * src[y * w + reflect(x + t - kRadius, w)];
            tmp[y * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int t = 0; t < kWindow; ++t) acc += k[t] * tmp[reflect(y + t - kRadius, h) * w + x];
            dst[y * w + x] = acc;
        }
    return dst;
}

/// Adjoint of blur.
inline Plane blur_adjoint(const Plane &grad, int w, int h) {
    const auto &k = window();
    Plane tmp(grad.size(), 0.0), dst(grad.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int t = 0; t < kWindow; ++t)
                tmp[reflect(y + t - kRadius, h) * w + x] += k[t] * grad[y * w + x];
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int t = 0; t < kWindow; ++t)
                dst[y * w + reflect(x + t - kRadius, w)] += k[t] * tmp[y * w + x];
    return dst;
}

inline Plane channel(const ImageBuffer &img, int c) {
    Plane p(img.pixel_count());
    const auto &d = img.data();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = d[i * 3 + c];
    return p;
}

struct ChannelSsim {
    double mean = 0;
    Plane grad_x; // d mean / d x, filled on request
};

inline ChannelSsim channel_ssim(const Plane &x, const Plane &y, int w, int h, bool want_grad) {
    const std::size_t n = x.size();
    Plane xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const Plane mx = blur(x, w, h), my = blur(y, w, h);
    const Plane exx = blur(xx, w, h), eyy = blur(yy, w, h), exy = blur(xy, w, h);

    ChannelSsim out;
    Plane d_mx, d_exx, d_exy;
    if (want_grad) {
        d_mx.assign(n, 0.0);
        d_exx.assign(n, 0.0);
        d_exy.assign(n, 0.0);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a1 = 2 * mx[i] * my[i] + kC1;
        const double a2 = 2 * (exy[i] - mx[i] * my[i]) + kC2;
        const double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1;
        const double b2 = (exx[i] - mx[i] * mx[i]) + (eyy[i] - my[i] * my[i]) + kC2;
        const double s = (a1 * a2) / (b1 * b2);
        sum += s;
        if (want_grad) {
            const double bb = b1 * b2;
            d_mx[i] = inv_n * ((2 * my[i] * a2 - 2 * my[i] * a1) / bb - s * (2 * mx[i] / b1 - 2 * mx[i] / b2));
            d_exx[i] = inv_n * (-s / b2);
            d_exy[i] = inv_n * (2 * a1 / bb);
        }
    }
    out.mean = sum * inv_n;
    if (want_grad) {
        const Plane g_mx = blur_adjoint(d_mx, w, h);
        const Plane g_exx = blur_adjoint(d_exx, w, h);
        const Plane g_exy = blur_adjoint(d_exy, w, h);
        out.grad_x.resize(n);
        for (std::size_t i = 0; i < n; ++i) out.grad_x[i] = g_mx[i] + 2 * x[i] * g_exx[i] + y[i] * g_exy[i];
    }
    return out;
}

inline void require_same_size(const ImageBuffer &a, const ImageBuffer &b, const char *who) {
    if (!a.same_size(b)) throw Error(std::string(who) + ": image dimensions differ");
}

} // namespace ssim_detail

/// Mean SSIM over pixels and channels.
inline double ssim(const ImageBuffer &a, const ImageBuffer &b) {
    using namespace ssim_detail;
    require_same_size(a, b, "ssim");
    if (std::min(a.width(), a.height()) < kWindow) throw Error("ssim: image smaller than the 11x11 window");
    double total = 0;
    for (int c = 0; c < 3; ++c) total += channel_ssim(channel(a, c), channel(b, c), a.width(), a.height(), false).mean;
    return total / 3.0;
}

struct LossSettings {
    double lambda_dssim = 0.2;
    bool l2 = false; // squared error instead of L1
};

struct LossResult {
    double value = 0;
    double pixel_term = 0; // mean |r| (or mean r^2)
    double dssim = 0;
    ImageBuffer grad; // d value / d rendered image; empty unless requested
};

inline LossResult photometric_loss(const ImageBuffer &rendered, const ImageBuffer &reference,
                                   const LossSettings &ls, bool want_grad = false) {
    using namespace ssim_detail;
    require_same_size(rendered, reference, "loss");
    const double lambda = ls.lambda_dssim;
    const auto &r = rendered.data();
    const auto &g = reference.data();
    const std::size_t n = r.size();
    if (n == 0) throw Error("loss: empty image");
    const double inv_n = 1.0 / static_cast<double>(n);

    LossResult out;
    if (want_grad) out.grad = ImageBuffer(rendered.width(), rendered.height());
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = r[i] - g[i];
        if (ls.l2) {
            sum += d * d;
            if (want_grad) out.grad.data()[i] = (1 - lambda) * 2 * d * inv_n;
        } else {
            sum += std::abs(d);
            // subgradient 0 at d == 0
            if (want_grad) out.grad.data()[i] = (1 - lambda) * (d > 0 ? inv_n : d < 0 ? -inv_n : 0.0);
        }
    }
    out.pixel_term = sum * inv_n;

    if (lambda != 0) {
        const int w = rendered.width(), h = rendered.height();
        if (std::min(w, h) < kWindow) throw Error("loss: image smaller than the 11x11 window");
        double ssim_total = 0;
        for (int c = 0; c < 3; ++c) {
            const ChannelSsim cs = channel_ssim(channel(rendered, c), channel(reference, c), w, h, want_grad);
            ssim_total += cs.mean;
            if (want_grad) {
                // d/dx of lambda * (1 - mean_c ssim_c) / 2
                const double scale = -lambda / 2.0 / 3.0;
                for (std::size_t i = 0; i < cs.grad_x.size(); ++i) out.grad.data()[i * 3 + c] += scale * cs.grad_x[i];
            }
        }
        out.dssim = (1.0 - ssim_total / 3.0) / 2.0;
    }
    out.value = (1 - lambda) * out.pixel_term + lambda * out.dssim;
    return out;
}

} // namespace gaussmap
