// gaussmap command-line front end.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "gaussmap/io/image.hpp"
#include "gaussmap/synth.hpp"
#include "gaussmap/train.hpp"
#include "gaussmap/voxel_map.hpp"

using namespace gaussmap;
namespace fs = std::filesystem;

namespace {

// Gaussian PLYs are reduced to their means; anything else is read as a cloud.
PointCloud load_structure(const std::string &path, int samples) {
    try {
        return gaussians_to_cloud(load_gaussians(path), samples);
    } catch (const ParseError &) {
        return load_point_cloud(path);
    }
}

Json structure_json(const StructureReport &r, double tau) {
    Json j;
    j["cd"] = r.cd;
    j["emd"] = r.emd;
    j["fscore"] = r.fscore;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["tau"] = tau;
    j["pred_points"] = r.pred_points;
    j["gt_points"] = r.gt_points;
    j["emd_points"] = r.emd_points;
    return j;
}

Pose parse_pose(const std::string &s) {
    std::istringstream in(s);
    double v[7];
    for (double &x : v)
        if (!(in >> x)) throw Error("--pose expects 'tx ty tz qx qy qz qw'");
    const Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
    if (std::abs(q.norm() - 1) > 1e-3) throw Error("--pose quaternion is not unit length");
    return Pose(q.normalized(), Vec3(v[0], v[1], v[2]));
}

void write_json(const Json &j, const std::string &out) {
    if (out.empty() || out == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out, std::ios::trunc);
    f << j.dump(2) << '\n';
    if (!f) throw Error("cannot write " + out);
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"LiDAR-seeded Gaussian splatting maps"};
    app.require_subcommand(1);

    std::string manifest, config, out, gaussians, preset, pred, gt, pose_str, cloud;
    std::uint64_t seed = 0;
    int iterations = 0, view = -1, samples = 1;
    double tau = 0.05;

    auto *train = app.add_subcommand("train", "Initialize from LiDAR and optimize against the images");
    train->add_option("--manifest", manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
    train->add_option("--config", config, "training config (key = value)")->check(CLI::ExistingFile);
    train->add_option("--out", out, "output directory")->required();
    train->add_option("--iterations", iterations, "override config iterations");
    train->add_option("--seed", seed, "override config seed");

    auto *eval = app.add_subcommand("eval", "PSNR/SSIM of a Gaussian map on the held-out views");
    eval->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    eval->add_option("--gaussians", gaussians)->required()->check(CLI::ExistingFile);
    eval->add_option("--config", config, "render settings source")->check(CLI::ExistingFile);
    eval->add_option("--out", out, "JSON report path (stdout by default)");
    bool eval_all = false;
    eval->add_flag("--all", eval_all, "evaluate every view, not only the held-out ones");

    auto *synth = app.add_subcommand("synth", "Write a synthetic dataset");
    synth->add_option("--preset", preset)->required()->check(CLI::IsMember(preset_names()));
    synth->add_option("--seed", seed);
    synth->add_option("--out", out)->required();
    double noise = -1;
    synth->add_option("--noise", noise, "override LiDAR noise sigma (m)");

    auto *rend = app.add_subcommand("render", "Render a Gaussian map to PNG");
    rend->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    rend->add_option("--gaussians", gaussians)->required()->check(CLI::ExistingFile);
    rend->add_option("--config", config)->check(CLI::ExistingFile);
    auto *view_opt = rend->add_option("--view", view, "trajectory index");
    rend->add_option("--pose", pose_str, "camera-to-world 'tx ty tz qx qy qz qw'")->excludes(view_opt);
    rend->add_option("--out", out, "PNG path")->required();

    auto *structure = app.add_subcommand("eval-structure", "CD, EMD and F-score between two clouds");
    structure->add_option("--pred", pred)->required()->check(CLI::ExistingFile);
    structure->add_option("--gt", gt)->required()->check(CLI::ExistingFile);
    structure->add_option("--tau", tau)->check(CLI::PositiveNumber);
    structure->add_option("--samples", samples, "draws per Gaussian (1 = means)")->check(CLI::PositiveNumber);
    structure->add_option("--out", out);

    auto *voxel = app.add_subcommand("voxel-dump", "Leaf table of the adaptive voxel map");
    voxel->add_option("--cloud", cloud)->required()->check(CLI::ExistingFile);
    voxel->add_option("--config", config)->check(CLI::ExistingFile);
    voxel->add_option("--out", out);

    CLI11_PARSE(app, argc, argv);

    try {
        TrainConfig cfg;
        if (!config.empty()) cfg = load_train_config(config);

        if (*train) {
            if (train->count("--iterations")) cfg.iterations = iterations;
            if (train->count("--seed")) cfg.seed = cfg.init_params.seed = seed;
            const Dataset ds = load_dataset(manifest);
            for (const auto &w : ds.warnings) std::cerr << "warning: " << w << '\n';
            const TrainResult r = run_training(ds, cfg, out);
            std::cerr << "gaussians " << r.scene.size() << ", held-out psnr " << r.eval.mean_psnr() << " dB\n";
        } else if (*eval) {
            const Dataset ds = load_dataset(manifest);
            const Scene scene = load_gaussians(gaussians);
            const auto views = eval_all ? ds.views : ds.test_views();
            write_json(evaluate(scene, views, render_settings_for(cfg), split_tagger(ds)).to_json(), out);
        } else if (*synth) {
            ScenePreset p = make_preset(preset);
            if (noise >= 0) p.lidar_noise = noise;
            write_synth(generate(p, seed), out);
            std::cerr << "wrote " << (fs::path(out) / "manifest.toml").string() << '\n';
        } else if (*rend) {
            const DatasetManifest m = load_manifest(manifest);
            Pose pose;
            if (!pose_str.empty()) {
                pose = parse_pose(pose_str);
            } else {
                if (view < 0) throw Error("render needs --view or --pose");
                const Trajectory traj = load_trajectory(m.trajectory_path.string());
                if (view >= static_cast<int>(traj.size())) throw Error("--view beyond the trajectory");
                pose = traj[view].pose;
                pose = Pose(pose.rotation(), pose.translation() * m.units_scale);
            }
            const Scene scene = load_gaussians(gaussians);
            save_image(render(scene, Camera{pose, m.intrinsics}, render_settings_for(cfg)).image, out);
        } else if (*structure) {
            const StructureReport r = structure_report(load_structure(pred, samples), load_structure(gt, 1), tau);
            write_json(structure_json(r, tau), out);
        } else if (*voxel) {
            const VoxelMap map = build_voxel_map(load_point_cloud(cloud), cfg.voxel);
            if (out.empty()) {
                dump_voxel_map(map, std::cout);
            } else {
                std::ofstream f(out, std::ios::trunc);
                dump_voxel_map(map, f);
                if (!f) throw Error("cannot write " + out);
            }
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
