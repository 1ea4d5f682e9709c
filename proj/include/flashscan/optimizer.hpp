#pragma once

#include "flashscan/dataset.hpp"

#include <functional>
#include <memory>
#include <span>

namespace flashscan {

struct TrainConfig {
    int total_iters = 40000;
    int stage1_iters = 30000;
    double lr0 = 0.001;
    double lr_decay_factor = 0.3;
    int lr_decay_every = 15000;
    int rays_per_batch = 256;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    int workers = 1;
    int samples_per_ray = 64;
    double beta_init = 0.1;
    double smooth_eps = 0.0;  // 0: half the finest sdf voxel
    int snapshot_every = 0;   // 0: never
    std::vector<int> holdout;
    double bbox_margin = 0.2;  // face bounding box expansion per side
    // Ambient SH coefficients stay frozen this many iterations so the light
    // does not absorb early geometry error as anisotropy.
    int light_warmup_iters = 0;
    // Decoupled decay pulling the ambient SH toward its initial (dim-room
    // prior) values. Directions of the normal sphere that the capture barely
    // observes otherwise drift freely.
    double ambient_decay = 0.0;
    // When positive, training rays are clipped to |t - dist(origin)| <= this
    // radius, concentrating the stratified samples around the subject instead
    // of the whole cube chord.
    double ray_clip_radius = 0.0;

    void validate() const {
        if (stage1_iters > total_iters) throw ConfigError("stage1_iters must not exceed total_iters");
        if (rays_per_batch < 1) throw ConfigError("rays_per_batch must be positive");
        if (workers < 1) throw ConfigError("workers must be positive");
    }
};

inline double lr_at(const TrainConfig& cfg, int iter) {
    return cfg.lr0 * std::pow(cfg.lr_decay_factor, double(iter / cfg.lr_decay_every));
}

inline Stage stage_at(const TrainConfig& cfg, int iter) {
    return iter < cfg.stage1_iters ? Stage::One : Stage::Two;
}

// Adam with per-parameter step counts: untouched parameters keep their state,
// touched ones get the standard bias-corrected update.
class Adam {
  public:
    void init(size_t n) {
        m_.assign(n, 0.0);
        v_.assign(n, 0.0);
        t_.assign(n, 0);
    }
    size_t size() const { return m_.size(); }

    // Applies one step over the touched gradients. A group with any non-finite
    // gradient is skipped entirely (and counted in diagnostics).
    void step(ParamStore& store, const GradBuffer& grads, double lr, double beta1, double beta2, double eps);

  private:
    std::vector<double> m_, v_;
    std::vector<int64_t> t_;
};

// Thrown when the divergence guard trips.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything fit owns: the parameter store, the hybrid scene, the light, the
// reflectance scale compensator and the density sharpness.
struct FitSession {
    ParamStore store;
    Scene scene;
    CombinedLight light;
    ScaleCompensator k;
    int beta_group = -1;

    double beta() const { return 1e-4 + std::exp(store.at(store.group(beta_group).offset)); }
    Ad beta_ad(Tape& tape) const { return 1e-4 + exp(store.ad(store.group(beta_group).offset, tape)); }
    void set_beta(double beta) {
        if (beta <= 1e-4) throw ConfigError("beta must exceed 1e-4");
        store.group_values(beta_group)[0] = std::log(beta - 1e-4);
    }

    RenderConfig render_config(int samples_per_ray = 64, uint64_t seed = 0) const {
        RenderConfig rc;
        rc.samples_per_ray = samples_per_ray;
        rc.density_beta = beta();
        rc.density_alpha = 1.0 / rc.density_beta;
        rc.rng_seed = seed;
        return rc;
    }
};

// Builds a session from a scene config: sphere-initialized SDF, neutral
// reflectance, zero ambient, s_L from the argument.
FitSession make_session(const SceneConfig& config, double s_l = 8.0, int n_views = 0, bool occlusion = false,
                        double beta_init = 0.1);

struct FitReport {
    int iters_run = 0;
    LossBreakdown first;
    LossBreakdown last;
    int stage_switch_iter = -1;
};

// One training ray, fully described before any evaluation so batches are
// deterministic for a fixed seed regardless of the worker count.
struct RayTask {
    int frame = 0;
    int px = 0, py = 0;
    int subray = 0;
    Vec3 target;
    double mask = 0, mask_e = 0, mask_s = 0;
    RayLabel label = RayLabel::Background;
    double pseudo_spec = 0;
};

// Fills everything except frame/px/py/subray from the dataset.
void finish_ray_task(RayTask& task, const CaptureDataset& data);

// Forward (and optionally backward) evaluation of the training objective on an
// explicit ray batch. Owns per-worker tapes and gradient buffers so repeated
// calls reuse their capacity; per-worker partials are reduced in worker order.
class BatchRunner {
  public:
    BatchRunner(int workers, size_t n_params);
    ~BatchRunner();

    struct Result {
        double total = 0;
        LossBreakdown breakdown;
    };

    Result run(FitSession& session, const CaptureDataset& data, std::span<const RayTask> tasks, Stage stage,
               const LossWeights& weights, const RenderConfig& rc, double smooth_eps, GradBuffer* grads,
               double ray_clip_radius = 0.0);

  private:
    struct Ctx;
    int workers_;
    std::vector<std::unique_ptr<Ctx>> ctx_;
};

struct GradCheckResult {
    double max_rel_err = 0;
    std::vector<std::pair<std::string, double>> group_errors;  // worst per parameter group
    int params_checked = 0;
};

// Analytic-vs-central-finite-difference check of the full training objective on
// random miniature scenes (16^3 grids, random materials/light/targets).
GradCheckResult gradient_check(uint64_t seed, int n_scenes = 20, int rays_per_scene = 8, int params_per_group = 12,
                               double fd_h = 1e-5);

// Two-stage fit. Stage 1 volume-renders with the full loss set; stage 2
// freezes geometry and beta, switches to surface rendering, and keeps only the
// photometric and reflectance-prior terms. The CSV log gets one row per step.
FitReport fit(FitSession& session, const CaptureDataset& data, const TrainConfig& cfg,
              const std::string& csv_path = "",
              const std::function<void(int, const FitSession&)>& snapshot_cb = nullptr);

// Surface-rendered image of the fitted scene (stage-2 shading path).
Image render_surface_image(const FitSession& session, const Camera& camera, std::optional<int> view, int spp = 1,
                           int workers = 1);

// Per-frame bounding box of non-background labels, expanded by `margin`.
struct PixelBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
};
PixelBox face_bbox(const Frame& frame, double margin);

}  // namespace flashscan
