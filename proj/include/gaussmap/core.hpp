#pragma once

// Shared geometric and appearance types. Everything here is a plain value
// type; algorithms live in the other headers.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "gaussmap/error.hpp"

namespace gaussmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Quaternion stored as (w, x, y, z).
using QuatWXYZ = Eigen::Vector4d;

/// 3 color channels x 9 real SH coefficients (degree <= 2).
using ShCoeffs = Eigen::Matrix<double, 3, 9>;

inline constexpr int kShCoeffsPerChannel = 9;
inline constexpr int kShCoeffCount = 27;
inline constexpr double kShY00 = 0.28209479177387814; // 1 / (2 sqrt(pi))

/// Eigenvalue floor applied when factoring degenerate covariances (m^2).
inline constexpr double kEigenFloor = 1e-12;

/// Symmetric 3x3 matrix storing only the upper triangle.
struct SymMat3 {
    double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;

    static SymMat3 identity() { return {1, 0, 0, 1, 0, 1}; }
    static SymMat3 diagonal(const Vec3 &d) { return {d.x(), 0, 0, d.y(), 0, d.z()}; }

    static SymMat3 from_matrix(const Mat3 &m) {
        // symmetrize so callers may pass a matrix with round-off asymmetry
        return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
                m(1, 1), 0.5 * (m(1, 2) + m(2, 1)), m(2, 2)};
    }

    Mat3 matrix() const {
        Mat3 m;
        m << xx, xy, xz, xy, yy, yz, xz, yz, zz;
        return m;
    }

    SymMat3 &operator+=(const SymMat3 &o) {
        xx += o.xx; xy += o.xy; xz += o.xz; yy += o.yy; yz += o.yz; zz += o.zz;
        return *this;
    }
    SymMat3 operator*(double s) const { return {xx * s, xy * s, xz * s, yy * s, yz * s, zz * s}; }

    bool all_finite() const {
        return std::isfinite(xx) && std::isfinite(xy) && std::isfinite(xz) && std::isfinite(yy) &&
               std::isfinite(yz) && std::isfinite(zz);
    }
};

/// Rotation matrix of q / |q|.
inline Mat3 rotation_matrix(const QuatWXYZ &q) {
    const double n = q.norm();
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

inline QuatWXYZ quat_from_matrix(const Mat3 &r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    return {q.w(), q.x(), q.y(), q.z()};
}

inline QuatWXYZ identity_quat() { return {1, 0, 0, 0}; }

/// Rigid transform; for a camera this is camera-to-world.
class Pose {
public:
    Pose() = default;
    Pose(const Eigen::Quaterniond &rotation, const Vec3 &translation)
        : rotation_(rotation.normalized()), translation_(translation) {}
    Pose(const Mat3 &rotation, const Vec3 &translation)
        : rotation_(Eigen::Quaterniond(rotation).normalized()), translation_(translation) {}

    static Pose identity() { return {}; }

    const Eigen::Quaterniond &rotation() const { return rotation_; }
    const Vec3 &translation() const { return translation_; }
    Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }

    Vec3 apply(const Vec3 &p) const { return rotation_ * p + translation_; }

    Pose inverse() const {
        const Eigen::Quaterniond inv = rotation_.conjugate();
        return Pose(inv, -(inv * translation_));
    }

    /// (*this) o other: apply other first.
    Pose operator*(const Pose &other) const {
        return Pose(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
    }

    Eigen::Matrix4d matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation_matrix();
        m.topRightCorner<3, 1>() = translation_;
        return m;
    }

private:
    Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
    Vec3 translation_ = Vec3::Zero();
};

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<double> timestamps; // empty, or one per point

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    bool all_finite() const {
        for (const auto &p : points)
            if (!p.allFinite()) return false;
        return true;
    }
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct SurfaceGaussian {
    Vec3 mean = Vec3::Zero();
    Vec3 scale = Vec3::Zero(); // log standard deviations along the local axes
    QuatWXYZ rotation = identity_quat();
    double opacity_logit = 0.0;
    ShCoeffs sh = ShCoeffs::Zero();

    double opacity() const { return logistic(opacity_logit); }
};

using Scene = std::vector<SurfaceGaussian>;

/// R diag(exp(2 scale)) R^T.
inline SymMat3 covariance_from_factors(const Vec3 &scale, const QuatWXYZ &rotation) {
    if (!scale.allFinite() || !rotation.allFinite())
        throw Error("covariance_from_factors: non-finite input");
    const Mat3 r = rotation_matrix(rotation);
    const Vec3 var = (2.0 * scale).array().exp();
    return SymMat3::from_matrix(r * var.asDiagonal() * r.transpose());
}

struct CovarianceFactors {
    Vec3 scale;
    QuatWXYZ rotation;
    int clamped = 0; // eigenvalues raised to kEigenFloor
};

/// Inverse of covariance_from_factors. Axis order follows ascending
/// eigenvalues; the frame is forced right-handed.
inline CovarianceFactors factors_from_covariance(const SymMat3 &cov) {
    if (!cov.all_finite()) throw Error("factors_from_covariance: non-finite covariance");
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov.matrix());
    Vec3 lambda = es.eigenvalues();
    Mat3 axes = es.eigenvectors();
    if (axes.determinant() < 0) axes.col(2) = -axes.col(2);
    CovarianceFactors f;
    for (int i = 0; i < 3; ++i) {
        if (!(lambda[i] >= kEigenFloor)) {
            lambda[i] = kEigenFloor;
            ++f.clamped;
        }
    }
    f.scale = 0.5 * lambda.array().log();
    f.rotation = quat_from_matrix(axes);
    return f;
}

struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    bool valid() const {
        return fx > 0 && fy > 0 && width > 0 && height > 0 && cx > 0 && cx < width && cy > 0 &&
               cy < height;
    }
    void validate() const {
        if (!valid()) throw Error("invalid camera intrinsics");
    }
};

/// Dense RGB raster, row-major, channels interleaved. Values are linear and
/// unclamped; clamping happens on export.
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, double fill = 0.0)
        : width_(width), height_(height),
          rgb_(static_cast<std::size_t>(width) * height * 3, fill) {
        if (width < 0 || height < 0) throw Error("ImageBuffer: negative dimensions");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    double &at(int x, int y, int c) { return rgb_[index(x, y) + c]; }
    double at(int x, int y, int c) const { return rgb_[index(x, y) + c]; }

    Vec3 pixel(int x, int y) const {
        const std::size_t i = index(x, y);
        return {rgb_[i], rgb_[i + 1], rgb_[i + 2]};
    }
    void set_pixel(int x, int y, const Vec3 &v) {
        const std::size_t i = index(x, y);
        rgb_[i] = v.x();
        rgb_[i + 1] = v.y();
        rgb_[i + 2] = v.z();
    }

    std::vector<double> &data() { return rgb_; }
    const std::vector<double> &data() const { return rgb_; }

    bool same_size(const ImageBuffer &o) const { return width_ == o.width_ && height_ == o.height_; }

    bool all_finite() const {
        for (double v : rgb_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const ImageBuffer &, const ImageBuffer &) = default;

private:
    std::size_t index(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> rgb_;
};

/// A posed camera plus its reference image.
struct View {
    Pose pose; // camera-to-world
    CameraIntrinsics intrinsics;
    ImageBuffer image;
    int id = 0;
    double timestamp = 0.0;

    void validate() const {
        intrinsics.validate();
        if (image.width() != intrinsics.width || image.height() != intrinsics.height)
            throw Error("view " + std::to_string(id) + ": image size differs from intrinsics");
    }
};

} // namespace gaussmap
