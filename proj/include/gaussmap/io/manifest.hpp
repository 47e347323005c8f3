#pragma once

// Dataset manifest: paths to the cloud, trajectory and image directory,
// camera intrinsics and the held-out split. Relative paths resolve against
// the manifest's directory.
//
//   point_cloud = "cloud.ply"
//   trajectory = "trajectory.txt"
//   images = "images"
//   [intrinsics]
//   fx = 64 ...
//   [split]
//   test = [6, 7, 8]
//   extrapolated = [8]

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "gaussmap/io/image.hpp"
#include "gaussmap/io/keyvalue.hpp"
#include "gaussmap/io/ply.hpp"
#include "gaussmap/io/trajectory.hpp"

namespace gaussmap {

inline constexpr double kImagePoseTolerance = 0.005; // seconds

struct DatasetManifest {
    std::filesystem::path point_cloud_path;
    std::filesystem::path trajectory_path;
    std::filesystem::path image_directory;
    std::filesystem::path gt_gaussians_path; // optional
    CameraIntrinsics intrinsics;
    std::vector<int> test_ids;
    std::vector<int> extrapolated_ids; // subset of test_ids
    double units_scale = 1.0;
};

inline DatasetManifest load_manifest(const std::string &path) {
    const KeyValueFile kv = KeyValueFile::load(path);
    const std::filesystem::path dir = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string &key, bool required) -> std::filesystem::path {
        if (!kv.has(key)) {
            if (required) throw Error(path + ": missing '" + key + "'");
            return {};
        }
        std::filesystem::path p = kv.get_string(key, "");
        if (p.is_relative()) p = dir / p;
        if (!std::filesystem::exists(p)) throw Error(path + ": '" + key + "' refers to missing " + p.string());
        return p;
    };
    DatasetManifest m;
    m.point_cloud_path = resolve("point_cloud", true);
    m.trajectory_path = resolve("trajectory", true);
    m.image_directory = resolve("images", true);
    m.gt_gaussians_path = resolve("gt_gaussians", false);
    m.units_scale = kv.get_double("units_scale", 1.0);
    if (!(m.units_scale > 0)) throw Error(path + ": units_scale must be positive");
    auto &k = m.intrinsics;
    k.fx = kv.get_double("intrinsics.fx", 0);
    k.fy = kv.get_double("intrinsics.fy", 0);
    k.cx = kv.get_double("intrinsics.cx", 0);
    k.cy = kv.get_double("intrinsics.cy", 0);
    k.width = static_cast<int>(kv.get_int("intrinsics.width", 0));
    k.height = static_cast<int>(kv.get_int("intrinsics.height", 0));
    k.validate();
    auto ids = [&](const std::string &key) {
        std::vector<int> out;
        for (double d : kv.get_list(key, {})) {
            if (d < 0 || d != std::floor(d)) throw Error(path + ": " + key + " must hold non-negative integers");
            out.push_back(static_cast<int>(d));
        }
        return out;
    };
    m.test_ids = ids("split.test");
    m.extrapolated_ids = ids("split.extrapolated");
    for (int e : m.extrapolated_ids)
        if (std::find(m.test_ids.begin(), m.test_ids.end(), e) == m.test_ids.end())
            throw Error(path + ": extrapolated id " + std::to_string(e) + " is not in split.test");
    kv.require_all_used();
    return m;
}

struct Dataset {
    DatasetManifest manifest;
    PointCloud cloud;
    std::vector<View> views; // id = trajectory index of the bound pose
    std::vector<std::string> warnings;

    bool is_test(int id) const {
        return std::find(manifest.test_ids.begin(), manifest.test_ids.end(), id) != manifest.test_ids.end();
    }
    bool is_extrapolated(int id) const {
        return std::find(manifest.extrapolated_ids.begin(), manifest.extrapolated_ids.end(), id) !=
               manifest.extrapolated_ids.end();
    }
    std::vector<View> train_views() const {
        std::vector<View> out;
        for (const auto &v : views)
            if (!is_test(v.id)) out.push_back(v);
        return out;
    }
    std::vector<View> test_views() const {
        std::vector<View> out;
        for (const auto &v : views)
            if (is_test(v.id)) out.push_back(v);
        return out;
    }
};

/// Image names are "<timestamp>.png"; each binds to the nearest trajectory
/// timestamp within 5 ms or is dropped with a warning.
inline Dataset load_dataset(const std::string &manifest_path) {
    Dataset ds;
    ds.manifest = load_manifest(manifest_path);
    const DatasetManifest &m = ds.manifest;
    ds.cloud = load_point_cloud(m.point_cloud_path.string());
    for (auto &p : ds.cloud.points) p *= m.units_scale;
    const Trajectory traj = load_trajectory(m.trajectory_path.string());

    std::vector<std::pair<double, std::filesystem::path>> images;
    for (const auto &entry : std::filesystem::directory_iterator(m.image_directory)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        const std::string stem = entry.path().stem().string();
        try {
            std::size_t used = 0;
            const double t = std::stod(stem, &used);
            if (used != stem.size()) throw std::invalid_argument(stem);
            images.push_back({t, entry.path()});
        } catch (const std::exception &) {
            ds.warnings.push_back("skipping image without a timestamp name: " + entry.path().filename().string());
        }
    }
    std::sort(images.begin(), images.end());
    for (const auto &[t, p] : images) {
        auto it = std::lower_bound(traj.begin(), traj.end(), t,
                                   [](const StampedPose &sp, double x) { return sp.timestamp < x; });
        std::size_t best = traj.size();
        double best_dt = kImagePoseTolerance;
        for (auto cand : {it, it == traj.begin() ? traj.end() : std::prev(it)}) {
            if (cand == traj.end()) continue;
            const double dt = std::abs(cand->timestamp - t);
            if (dt <= best_dt) {
                best_dt = dt;
                best = static_cast<std::size_t>(cand - traj.begin());
            }
        }
        if (best == traj.size()) {
            ds.warnings.push_back("no pose within 5 ms of image " + p.filename().string() + "; dropped");
            continue;
        }
        View v;
        v.id = static_cast<int>(best);
        v.timestamp = traj[best].timestamp;
        v.pose = Pose(traj[best].pose.rotation(), traj[best].pose.translation() * m.units_scale);
        v.intrinsics = m.intrinsics;
        v.image = load_image(p.string());
        v.validate();
        ds.views.push_back(std::move(v));
    }
    std::stable_sort(ds.views.begin(), ds.views.end(), [](const View &a, const View &b) { return a.id < b.id; });
    return ds;
}

} // namespace gaussmap
