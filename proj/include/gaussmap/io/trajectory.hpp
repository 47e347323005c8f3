#pragma once

// TUM trajectory text: "t tx ty tz qx qy qz qw" per line, camera-to-world.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gaussmap/core.hpp"

namespace gaussmap {

struct StampedPose {
    double timestamp = 0.0;
    Pose pose;
};

using Trajectory = std::vector<StampedPose>;

inline Trajectory parse_trajectory(std::istream &in, const std::string &src) {
    Trajectory traj;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
            throw ParseError(src, line_no, 0, "expected 8 numbers: t tx ty tz qx qy qz qw");
        std::string extra;
        if (ls >> extra) throw ParseError(src, line_no, 0, "trailing text '" + extra + "'");
        const Eigen::Quaterniond q(qw, qx, qy, qz);
        const Vec3 trans(tx, ty, tz);
        if (!std::isfinite(t) || !trans.allFinite() || !q.coeffs().allFinite())
            throw ParseError(src, line_no, 0, "non-finite value");
        const double n = q.norm();
        if (n < 0.9 || n > 1.1)
            throw ParseError(src, line_no, 0, "quaternion norm " + std::to_string(n) + " outside [0.9, 1.1]");
        if (!traj.empty() && !(t > traj.back().timestamp))
            throw ParseError(src, line_no, 0, "timestamps must be strictly increasing");
        traj.push_back({t, Pose(q, trans)});
    }
    return traj;
}

inline Trajectory load_trajectory(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return parse_trajectory(in, path);
}

inline void save_trajectory(const Trajectory &traj, const std::string &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    char buf[512];
    for (const auto &sp : traj) {
        const auto &q = sp.pose.rotation();
        const Vec3 &t = sp.pose.translation();
        std::snprintf(buf, sizeof buf, "%.9f %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", sp.timestamp, t.x(),
                      t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
        out << buf;
    }
    if (!out) throw Error("write failed for '" + path + "'");
}

} // namespace gaussmap
