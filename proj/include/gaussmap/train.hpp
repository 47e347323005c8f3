#pragma once

// Optimization loop: one view per iteration from a seeded per-epoch
// permutation, render, loss, backward, Adam, periodic densify/prune.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaussmap/adam.hpp"
#include "gaussmap/config.hpp"
#include "gaussmap/gauss_init.hpp"
#include "gaussmap/io/manifest.hpp"
#include "gaussmap/io/ply.hpp"
#include "gaussmap/metrics.hpp"

namespace gaussmap {

using Json = nlohmann::ordered_json;

inline RenderSettings render_settings_for(const TrainConfig &cfg) {
    RenderSettings rs;
    rs.background = cfg.background;
    rs.sh_frame = cfg.sh_frame;
    rs.sh_degree = cfg.max_sh_degree;
    return rs;
}

/// 1.1 x the largest camera-center distance from their centroid.
inline double camera_extent(const std::vector<View> &views) {
    if (views.empty()) return 1.0;
    Vec3 c = Vec3::Zero();
    for (const auto &v : views) c += v.pose.translation();
    c /= static_cast<double>(views.size());
    double r = 0;
    for (const auto &v : views) r = std::max(r, (v.pose.translation() - c).norm());
    return r > 1e-6 ? 1.1 * r : 1.0;
}

inline Json event_json(const ControlEvent &ev, const char *kind) {
    Json j;
    j["event"] = kind;
    j["iter"] = ev.iteration;
    if (!ev.cloned_from.empty()) {
        j["cloned_from"] = ev.cloned_from;
        j["clone_ids"] = ev.clone_ids;
        j["grad"] = ev.clone_triggers;
    }
    if (!ev.pruned.empty()) {
        j["pruned"] = ev.pruned;
        j["opacity"] = ev.prune_triggers;
    }
    return j;
}

class TrainingError : public Error {
public:
    using Error::Error;
};

class Trainer {
public:
    using Sink = std::function<void(const Json &)>;

    Trainer(Scene initial, std::vector<View> views, TrainConfig cfg, Sink sink = {})
        : cfg_(std::move(cfg)), scene_(std::move(initial)), views_(std::move(views)), adam_(scene_.size()),
          acc_(scene_.size()), rng_(cfg_.seed), sink_(std::move(sink)) {
        cfg_.validate();
        if (views_.empty()) throw Error("Trainer: no training views");
        for (const auto &v : views_) v.validate();
        rs_ = render_settings_for(cfg_);
        ls_ = {cfg_.lambda_dssim, cfg_.l2_loss};
        extent_ = cfg_.extent > 0 ? cfg_.extent : camera_extent(views_);
        order_.resize(views_.size());
    }

    const Scene &scene() const { return scene_; }
    const AdamState &adam() const { return adam_; }
    const GradAccumulator &accumulator() const { return acc_; }
    const TrainConfig &config() const { return cfg_; }
    const RenderSettings &render_settings() const { return rs_; }
    int iteration() const { return iter_; }
    double extent() const { return extent_; }
    const std::vector<ControlEvent> &last_events() const { return events_; }

    double mean_lr(int it) const {
        const double f = std::clamp(static_cast<double>(it) / cfg_.iterations, 0.0, 1.0);
        return extent_ * std::exp((1 - f) * std::log(cfg_.lr.mean) + f * std::log(cfg_.lr.mean_final));
    }

    bool control_due(int it) const {
        return cfg_.optimize_structure && it >= cfg_.densify_from &&
               it <= static_cast<int>(cfg_.densify_until * cfg_.iterations) && it % cfg_.densify_interval == 0;
    }

    /// One iteration; returns the loss measured before the update.
    double step() {
        events_.clear();
        if (next_ == 0) {
            std::iota(order_.begin(), order_.end(), std::size_t{0});
            std::shuffle(order_.begin(), order_.end(), rng_);
        }
        const View &view = views_[order_[next_]];
        next_ = (next_ + 1) % order_.size();
        ++iter_;

        const RenderOutput out = render(scene_, view, rs_);
        const LossResult loss = photometric_loss(out.image, view.image, ls_, true);
        if (!std::isfinite(loss.value)) throw TrainingError(diagnose(view, loss.value));
        const ParamGrads g = backward(out, loss.grad, scene_);
        acc_.add(g);

        std::array<double, 6> lr{};
        if (cfg_.optimize_structure) {
            lr[static_cast<int>(ParamGroup::Mean)] = mean_lr(iter_);
            lr[static_cast<int>(ParamGroup::Scale)] = cfg_.lr.scale;
            lr[static_cast<int>(ParamGroup::Rotation)] = cfg_.lr.rotation;
        }
        lr[static_cast<int>(ParamGroup::Opacity)] = cfg_.lr.opacity;
        lr[static_cast<int>(ParamGroup::ShDc)] = cfg_.lr.sh_dc;
        if (iter_ > cfg_.sh_warmup) lr[static_cast<int>(ParamGroup::ShRest)] = cfg_.lr.sh_rest;
        adam_step(scene_, adam_, g, lr);

        Json rec;
        rec["iter"] = iter_;
        rec["view"] = view.id;
        rec["loss"] = loss.value;
        rec["gaussians"] = scene_.size();
        emit(rec);

        if (control_due(iter_)) run_control();
        return loss.value;
    }

    /// Densify then prune at the current iteration.
    void run_control() {
        ControlEvent d = densify(scene_, acc_, cfg_.densify_grad_threshold, rng_);
        d.iteration = iter_;
        adam_.apply(d);
        ControlEvent p = prune(scene_, cfg_.prune_opacity_threshold);
        p.iteration = iter_;
        adam_.apply(p);
        if (!p.id_map.empty()) acc_.reset(scene_.size());
        emit(event_json(d, "densify"));
        emit(event_json(p, "prune"));
        events_.push_back(std::move(d));
        events_.push_back(std::move(p));
    }

private:
    void emit(const Json &j) const {
        if (sink_) sink_(j);
    }

    std::string diagnose(const View &view, double value) const {
        std::ostringstream os;
        os << "non-finite loss " << value << " at iteration " << iter_ << " on view " << view.id << "; extrema:";
        for (int grp = 0; grp < 6; ++grp) {
            double lo = INFINITY, hi = -INFINITY;
            for (const auto &gs : scene_) {
                const ParamBlock b = to_block(gs);
                for (int i = 0; i < kParamCount; ++i)
                    if (static_cast<int>(param_group(i)) == grp) {
                        lo = std::min(lo, b[i]);
                        hi = std::max(hi, b[i]);
                    }
            }
            os << ' ' << param_group_name(static_cast<ParamGroup>(grp)) << "=[" << lo << ", " << hi << "]";
        }
        return os.str();
    }

    TrainConfig cfg_;
    Scene scene_;
    std::vector<View> views_;
    AdamState adam_;
    GradAccumulator acc_;
    std::mt19937_64 rng_;
    Sink sink_;
    RenderSettings rs_;
    LossSettings ls_;
    double extent_ = 1.0;
    int iter_ = 0;
    std::vector<std::size_t> order_;
    std::size_t next_ = 0;
    std::vector<ControlEvent> events_;
};

struct ViewMetrics {
    int id = 0;
    std::string tag;
    double psnr = 0, ssim = 0;
};

struct EvalReport {
    std::vector<ViewMetrics> views;

    /// Mean PSNR over views with this tag (all views when tag is empty);
    /// NaN when none match.
    double mean_psnr(const std::string &tag = "") const { return mean_of(tag, &ViewMetrics::psnr); }
    double mean_ssim(const std::string &tag = "") const { return mean_of(tag, &ViewMetrics::ssim); }

    Json to_json() const {
        Json j;
        j["views"] = Json::array();
        for (const auto &v : views) j["views"].push_back({{"id", v.id}, {"tag", v.tag}, {"psnr", v.psnr}, {"ssim", v.ssim}});
        for (const char *t : {"interpolated", "extrapolated", "train"}) {
            const double p = mean_psnr(t);
            if (!std::isnan(p)) j[std::string("mean_psnr_") + t] = p, j[std::string("mean_ssim_") + t] = mean_ssim(t);
        }
        j["mean_psnr"] = mean_psnr();
        j["mean_ssim"] = mean_ssim();
        return j;
    }

private:
    double mean_of(const std::string &tag, double ViewMetrics::*f) const {
        double s = 0;
        int n = 0;
        for (const auto &v : views)
            if (tag.empty() || v.tag == tag) {
                s += v.*f;
                ++n;
            }
        return n ? s / n : NAN;
    }
};

/// Renders each view and scores it against its reference image. `tag_of`
/// labels views (interpolated / extrapolated / train).
inline EvalReport evaluate(const Scene &scene, const std::vector<View> &views, const RenderSettings &rs,
                           const std::function<std::string(int)> &tag_of) {
    EvalReport r;
    for (const auto &v : views) {
        const RenderOutput out = render(scene, v, rs);
        r.views.push_back({v.id, tag_of(v.id), psnr(out.image, v.image), ssim(out.image, v.image)});
    }
    return r;
}

/// Initial scene from the cloud (LiDAR mode) or from random positions,
/// colored from the training views.
inline Scene initialize_scene(const PointCloud &cloud, const std::vector<View> &train_views, const TrainConfig &cfg,
                              InitReport *report = nullptr) {
    InitReport rep;
    const Scene lidar = seed_geometry(build_voxel_map(cloud, cfg.voxel), cloud, cfg.init_params, &rep);
    Scene scene;
    if (cfg.init == InitMode::Lidar) {
        scene = lidar;
        seed_colors(scene, train_views, cfg.init_params.opacity_init);
    } else {
        const std::size_t n = cfg.random_init_count ? cfg.random_init_count : lidar.size();
        scene = random_init(cloud, n, cfg.seed ^ 0x5eedULL);
        seed_colors(scene, train_views, cfg.random_opacity_init);
        rep = InitReport{};
        rep.gaussians_created = scene.size();
        rep.sparse_count = scene.size();
    }
    if (report) *report = rep;
    return scene;
}

inline std::function<std::string(int)> split_tagger(const Dataset &ds) {
    return [&ds](int id) -> std::string {
        if (ds.is_extrapolated(id)) return "extrapolated";
        return ds.is_test(id) ? "interpolated" : "train";
    };
}

inline void save_adam_state(const AdamState &st, const std::string &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    const std::uint64_t n = st.size();
    out.write(reinterpret_cast<const char *>(&st.step), sizeof st.step);
    out.write(reinterpret_cast<const char *>(&n), sizeof n);
    for (std::size_t i = 0; i < st.size(); ++i) {
        out.write(reinterpret_cast<const char *>(st.m[i].data()), sizeof(double) * kParamCount);
        out.write(reinterpret_cast<const char *>(st.v[i].data()), sizeof(double) * kParamCount);
    }
    if (!out) throw Error("write failed for '" + path + "'");
}

inline AdamState load_adam_state(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    AdamState st;
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char *>(&st.step), sizeof st.step);
    in.read(reinterpret_cast<char *>(&n), sizeof n);
    if (!in || n > (1ULL << 32)) throw Error("'" + path + "': bad optimizer state header");
    st.m.resize(n);
    st.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char *>(st.m[i].data()), sizeof(double) * kParamCount);
        in.read(reinterpret_cast<char *>(st.v[i].data()), sizeof(double) * kParamCount);
    }
    if (!in) throw Error("'" + path + "': truncated optimizer state");
    return st;
}

struct TrainResult {
    Scene initial;
    Scene scene;
    InitReport init;
    EvalReport eval;
};

/// Full run into `out`: log.jsonl (deterministic), timing.jsonl,
/// gaussians.ply, eval.json and optional checkpoints/.
inline TrainResult run_training(const Dataset &ds, const TrainConfig &cfg, const std::filesystem::path &out) {
    namespace fs = std::filesystem;
    cfg.validate();
    const std::vector<View> train_views = ds.train_views();
    if (train_views.empty()) throw Error("no training views in the manifest split");
    fs::create_directories(out);
    std::ofstream log(out / "log.jsonl", std::ios::trunc);
    std::ofstream timing(out / "timing.jsonl", std::ios::trunc);
    if (!log || !timing) throw Error("cannot write logs in " + out.string());

    TrainResult res;
    res.initial = initialize_scene(ds.cloud, train_views, cfg, &res.init);
    {
        Json j;
        j["event"] = "init";
        j["gaussians"] = res.init.gaussians_created;
        j["planar"] = res.init.planar_count;
        j["sparse"] = res.init.sparse_count;
        j["mean_alpha"] = res.init.mean_alpha;
        j["dropped"] = res.init.points_dropped;
        for (const auto &w : ds.warnings) j["warnings"].push_back(w);
        log << j.dump() << '\n';
    }
    Trainer tr(res.initial, train_views, cfg, [&log](const Json &j) { log << j.dump() << '\n'; });
    const RenderSettings rs = tr.render_settings();
    const auto tagger = split_tagger(ds);
    const auto t0 = std::chrono::steady_clock::now();
    for (int it = 1; it <= cfg.iterations; ++it) {
        tr.step();
        if (cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0) {
            fs::create_directories(out / "checkpoints");
            char name[64];
            std::snprintf(name, sizeof name, "iter_%06d", it);
            export_gaussians(tr.scene(), (out / "checkpoints" / (std::string(name) + ".ply")).string());
            save_adam_state(tr.adam(), (out / "checkpoints" / (std::string(name) + ".adam")).string());
        }
        if (cfg.eval_interval > 0 && it % cfg.eval_interval == 0 && it != cfg.iterations) {
            Json j = evaluate(tr.scene(), ds.test_views(), rs, tagger).to_json();
            j.erase("views");
            j["event"] = "eval";
            j["iter"] = it;
            log << j.dump() << '\n';
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timing << Json{{"iter", it}, {"seconds", secs}}.dump() << '\n';
    }
    res.scene = tr.scene();
    export_gaussians(res.scene, (out / "gaussians.ply").string());
    std::vector<View> eval_views = ds.test_views();
    res.eval = evaluate(res.scene, eval_views, rs, tagger);
    Json ej = res.eval.to_json();
    ej["train_psnr"] = evaluate(res.scene, train_views, rs, tagger).mean_psnr();
    {
        Json j = ej;
        j.erase("views");
        j["event"] = "eval";
        j["iter"] = cfg.iterations;
        log << j.dump() << '\n';
    }
    std::ofstream ef(out / "eval.json", std::ios::trunc);
    ef << ej.dump(2) << '\n';
    if (!log || !ef) throw Error("write failed in " + out.string());
    return res;
}

} // namespace gaussmap
