#pragma once

// Training configuration. Every field has a default, so an empty file is a
// valid configuration.

#include <cstdint>
#include <string>

#include "gaussmap/gauss_init.hpp"
#include "gaussmap/io/keyvalue.hpp"
#include "gaussmap/voxel_map.hpp"

namespace gaussmap {

struct LearningRates {
    double mean = 1.6e-4; // multiplied by the scene extent
    double mean_final = 1.6e-6; // exponential decay target for the mean rate
    double scale = 5e-3;
    double rotation = 1e-3;
    double opacity = 5e-2;
    double sh_dc = 2.5e-3;
    double sh_rest = 1.25e-4;
};

enum class InitMode { Lidar, Random };

struct TrainConfig {
    int iterations = 7000;
    std::uint64_t seed = 0;
    double lambda_dssim = 0.2;
    bool l2_loss = false;
    int max_sh_degree = 2;
    ShFrame sh_frame = ShFrame::Camera;
    int sh_warmup = 1000; // sh_rest frozen before this iteration
    Vec3 background = Vec3::Zero();

    LearningRates lr;
    double extent = 0.0; // scene extent for the mean rate; 0 derives it from the cameras

    bool optimize_structure = true; // false freezes mean, scale and rotation and disables control
    double densify_grad_threshold = 2e-4;
    int densify_interval = 100;
    int densify_from = 500;
    double densify_until = 0.8; // fraction of iterations
    double prune_opacity_threshold = 0.005;

    InitMode init = InitMode::Lidar;
    std::size_t random_init_count = 0; // 0: same count as the LiDAR initialization
    double random_opacity_init = 0.1;
    VoxelParams voxel;
    InitParams init_params;

    int checkpoint_interval = 0; // 0 disables
    int eval_interval = 0;       // 0 evaluates only at the end

    void validate() const {
        if (!(lambda_dssim >= 0 && lambda_dssim <= 1)) throw Error("lambda_dssim must be in [0, 1]");
        if (iterations <= 0) throw Error("iterations must be positive");
        if (max_sh_degree < 0 || max_sh_degree > 2) throw Error("max_sh_degree must be 0, 1 or 2");
        if (densify_interval <= 0) throw Error("densify_interval must be positive");
        if (!(prune_opacity_threshold >= 0 && prune_opacity_threshold < 1))
            throw Error("prune_opacity_threshold must be in [0, 1)");
        voxel.validate();
        init_params.validate();
    }
};

inline TrainConfig parse_train_config(const KeyValueFile &kv) {
    TrainConfig c;
    c.iterations = static_cast<int>(kv.get_int("iterations", c.iterations));
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
    c.lambda_dssim = kv.get_double("lambda_dssim", c.lambda_dssim);
    c.l2_loss = kv.get_bool("l2_loss", c.l2_loss);
    c.max_sh_degree = static_cast<int>(kv.get_int("max_sh_degree", c.max_sh_degree));
    const std::string frame = kv.get_string("sh_frame", "camera");
    if (frame == "camera") c.sh_frame = ShFrame::Camera;
    else if (frame == "world") c.sh_frame = ShFrame::World;
    else throw Error("sh_frame must be camera or world");
    c.sh_warmup = static_cast<int>(kv.get_int("sh_warmup", c.sh_warmup));
    const auto bg = kv.get_list("background", {0, 0, 0});
    if (bg.size() != 3) throw Error("background needs three values");
    c.background = Vec3(bg[0], bg[1], bg[2]);

    c.lr.mean = kv.get_double("lr.mean", c.lr.mean);
    c.lr.mean_final = kv.get_double("lr.mean_final", c.lr.mean_final);
    c.lr.scale = kv.get_double("lr.scale", c.lr.scale);
    c.lr.rotation = kv.get_double("lr.rotation", c.lr.rotation);
    c.lr.opacity = kv.get_double("lr.opacity", c.lr.opacity);
    c.lr.sh_dc = kv.get_double("lr.sh_dc", c.lr.sh_dc);
    c.lr.sh_rest = kv.get_double("lr.sh_rest", c.lr.sh_rest);
    c.extent = kv.get_double("lr.extent", c.extent);

    c.optimize_structure = kv.get_bool("optimize_structure", c.optimize_structure);
    c.densify_grad_threshold = kv.get_double("densify_grad_threshold", c.densify_grad_threshold);
    c.densify_interval = static_cast<int>(kv.get_int("densify_interval", c.densify_interval));
    c.densify_from = static_cast<int>(kv.get_int("densify_from", c.densify_from));
    c.densify_until = kv.get_double("densify_until", c.densify_until);
    c.prune_opacity_threshold = kv.get_double("prune_opacity_threshold", c.prune_opacity_threshold);

    const std::string init = kv.get_string("init", "lidar");
    if (init == "lidar") c.init = InitMode::Lidar;
    else if (init == "random") c.init = InitMode::Random;
    else throw Error("init must be lidar or random");
    c.random_init_count = static_cast<std::size_t>(kv.get_int("random_init_count", 0));
    c.random_opacity_init = kv.get_double("random_opacity_init", c.random_opacity_init);

    c.voxel.root_size = kv.get_double("voxel.root_size", c.voxel.root_size);
    c.voxel.max_depth = static_cast<int>(kv.get_int("voxel.max_depth", c.voxel.max_depth));
    c.voxel.eta_threshold = kv.get_double("voxel.eta_threshold", c.voxel.eta_threshold);
    c.voxel.min_points = static_cast<int>(kv.get_int("voxel.min_points", c.voxel.min_points));
    if (kv.has("voxel.sensor_origin")) {
        const auto o = kv.get_list("voxel.sensor_origin", {});
        if (o.size() != 3) throw Error("voxel.sensor_origin needs three values");
        c.voxel.sensor_origin = Vec3(o[0], o[1], o[2]);
    }

    c.init_params.point_budget = static_cast<int>(kv.get_int("init.point_budget", c.init_params.point_budget));
    c.init_params.alpha_min = kv.get_double("init.alpha_min", c.init_params.alpha_min);
    c.init_params.alpha_max = kv.get_double("init.alpha_max", c.init_params.alpha_max);
    c.init_params.opacity_init = kv.get_double("init.opacity_init", c.init_params.opacity_init);

    c.checkpoint_interval = static_cast<int>(kv.get_int("checkpoint_interval", c.checkpoint_interval));
    c.eval_interval = static_cast<int>(kv.get_int("eval_interval", c.eval_interval));
    kv.require_all_used();
    c.init_params.seed = c.seed;
    c.validate();
    return c;
}

inline TrainConfig load_train_config(const std::string &path) { return parse_train_config(KeyValueFile::load(path)); }

} // namespace gaussmap
