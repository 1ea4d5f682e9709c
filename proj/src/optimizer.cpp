#include "flashscan/optimizer.hpp"

#include <fstream>
#include <thread>

namespace flashscan {

void Adam::step(ParamStore& store, const GradBuffer& grads, double lr, double beta1, double beta2, double eps) {
    if (m_.size() != store.size()) throw InvariantError("Adam state size disagrees with parameter store");

    // A single non-finite gradient poisons its whole group for this step.
    std::vector<uint8_t> group_bad(store.group_count(), 0);
    for (uint32_t pid : grads.touched()) {
        if (!std::isfinite(grads[pid])) {
            int gid = store.group_of(pid);
            if (!group_bad[size_t(gid)]) {
                group_bad[size_t(gid)] = 1;
                diag().skipped_adam_groups.fetch_add(1, std::memory_order_relaxed);
            }
        }
    }

    for (uint32_t pid : grads.touched()) {
        int gid = store.group_of(pid);
        if (!store.group(gid).trainable || group_bad[size_t(gid)]) continue;
        double g = grads[pid];
        int64_t t = ++t_[pid];
        m_[pid] = beta1 * m_[pid] + (1.0 - beta1) * g;
        v_[pid] = beta2 * v_[pid] + (1.0 - beta2) * g * g;
        double m_hat = m_[pid] / (1.0 - std::pow(beta1, double(t)));
        double v_hat = v_[pid] / (1.0 - std::pow(beta2, double(t)));
        store.at(pid) -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

FitSession make_session(const SceneConfig& config, double s_l, int n_views, bool occlusion, double beta_init) {
    FitSession s;
    s.scene.sdf = SdfGridField::create(s.store, config.sdf_levels);
    s.scene.refl = ReflectanceField::create(s.store, config.refl_levels);
    s.scene.eyes = config.eyes;
    s.scene.prior = config.prior;
    s.light = CombinedLight::create(s.store, s_l, n_views, occlusion);
    // Dim-room ambient prior: the capture protocol assumes the flashlight
    // dominates, so start the SoftPlus ambient near 0.04 instead of ln 2.
    for (int ch = 0; ch < 3; ++ch) s.store.at(s.light.klm_pid(s.store, 0, ch)) = -11.3;
    // Dielectric-leaning specular prior (s ~ 0.25): starting the specular
    // albedo at 0.5 leaves the scale-ambiguous (s, rho, k) ridge far from
    // plausible skin and the crawl along it dominates fitting time.
    {
        const GridField& rg = s.scene.refl.grid();
        const GridLevel& coarse = rg.levels().front();
        for (int iz = 0; iz < coarse.res; ++iz)
            for (int iy = 0; iy < coarse.res; ++iy)
                for (int ix = 0; ix < coarse.res; ++ix) s.store.at(rg.vertex_param(coarse, ix, iy, iz, 3)) = -1.1;
    }
    s.k = ScaleCompensator::create(s.store);
    s.beta_group = s.store.add_group("beta_raw", 1);
    s.set_beta(beta_init);
    s.scene.sdf.init_sphere(s.store, config.r0);
    return s;
}

PixelBox face_bbox(const Frame& frame, double margin) {
    int w = frame.camera.width, h = frame.camera.height;
    int x0 = w, y0 = h, x1 = 0, y1 = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (frame.labels[size_t(y) * size_t(w) + size_t(x)] != uint8_t(RayLabel::Background)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x + 1);
                y1 = std::max(y1, y + 1);
            }
    if (x0 >= x1) return {0, 0, w, h};  // no foreground: sample everywhere
    int mx = int(std::ceil((x1 - x0) * margin));
    int my = int(std::ceil((y1 - y0) * margin));
    return {std::max(0, x0 - mx), std::max(0, y0 - my), std::min(w, x1 + mx), std::min(h, y1 + my)};
}

void finish_ray_task(RayTask& t, const CaptureDataset& data) {
    const Frame& f = data.frames[size_t(t.frame)];
    // Per-subray targets, when the capture carries them, keep supervision
    // exactly consistent with the sampled subray; the pixel mean otherwise.
    t.target = f.has_subrays() ? f.subray(t.px, t.py, t.subray) : f.rgb.rgb(t.px, t.py);
    t.label = data.label_at(size_t(t.frame), t.px, t.py);
    t.mask = t.label != RayLabel::Background ? 1.0 : 0.0;
    t.mask_e = t.label == RayLabel::Eye ? 1.0 : 0.0;
    t.mask_s = (t.label == RayLabel::Skin || t.label == RayLabel::Hair) ? 1.0 : 0.0;
    t.pseudo_spec = f.pseudo_spec.at(t.px, t.py, 0);
}

namespace {

// Per-ray differentiable outputs from the march/trace phase.
struct RayOut {
    Vec3T<Ad> rgb;
    Ad opacity{0.0};
    Ad opacity_E{0.0};
    Ad opacity_S{0.0};
    Ad spec{0.0};
    std::vector<Ad> grad_norms;
    std::vector<Ad> normal_dots;
};

struct BatchCounts {
    size_t rays = 0;
    size_t eik_samples = 0;
    size_t dots_hair = 0;
    size_t dots_other = 0;
    size_t ref_rays = 0;
};

void run_workers(int workers, const std::function<void(int)>& body) {
    if (workers <= 1) {
        body(0);
        return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
}

class CsvLogger {
  public:
    explicit CsvLogger(const std::string& path) {
        if (path.empty()) return;
        file_.open(path);
        if (!file_) throw ConfigError("cannot open loss log for writing: " + path);
        file_ << "step,stage,l1,mask,eikonal,smooth_hair,smooth_other,comp,ref,total,lr\n";
    }
    void row(int step, Stage stage, const LossBreakdown& bd, double lr) {
        if (!file_.is_open()) return;
        file_ << step << "," << (stage == Stage::One ? 1 : 2) << "," << bd.l1 << "," << bd.mask << "," << bd.eikonal
              << "," << bd.smooth_hair << "," << bd.smooth_other << "," << bd.comp << "," << bd.ref << "," << bd.total
              << "," << lr << "\n";
    }

  private:
    std::ofstream file_;
};

}  // namespace

struct BatchRunner::Ctx {
    Tape tape;
    GradBuffer grads;
    std::vector<RayOut> outs;
    double loss_value = 0;
};

BatchRunner::~BatchRunner() = default;

BatchRunner::BatchRunner(int workers, size_t n_params) : workers_(std::max(1, workers)) {
    for (int w = 0; w < workers_; ++w) {
        ctx_.push_back(std::make_unique<Ctx>());
        ctx_.back()->grads.resize(n_params);
    }
}

BatchRunner::Result BatchRunner::run(FitSession& session, const CaptureDataset& data,
                                     std::span<const RayTask> tasks, Stage stage, const LossWeights& weights,
                                     const RenderConfig& rc, double smooth_eps, GradBuffer* grads,
                                     double ray_clip_radius) {
    auto offsets = subpixel_pattern(data.spp);
    size_t per_worker = (tasks.size() + size_t(workers_) - 1) / size_t(workers_);

    // Phase A: march/trace rays, each worker on its own tape.
    run_workers(workers_, [&](int w) {
        Ctx& c = *ctx_[size_t(w)];
        c.tape.clear();
        c.grads.clear();
        size_t begin = size_t(w) * per_worker;
        size_t end = std::min(tasks.size(), begin + per_worker);
        c.outs.assign(end > begin ? end - begin : 0, RayOut{});
        Ad beta = session.beta_ad(c.tape);
        for (size_t i = begin; i < end; ++i) {
            const RayTask& t = tasks[i];
            const Frame& f = data.frames[size_t(t.frame)];
            Ray ray{f.camera.center, f.camera.ray_direction(t.px, t.py, offsets[size_t(t.subray)].first,
                                                            offsets[size_t(t.subray)].second)};
            uint64_t key = ray_key_for(t.frame, t.px, t.py, f.camera.width, t.subray);
            RenderConfig rc_ray = rc;
            if (ray_clip_radius > 0.0) {
                double d0 = norm(f.camera.center);
                rc_ray.near = std::max(rc.near, d0 - ray_clip_radius);
                rc_ray.far = std::min(rc.far, d0 + ray_clip_radius);
            }
            RayOut& out = c.outs[i - begin];
            if (stage == Stage::One) {
                TrainAux aux;
                aux.smooth_eps = smooth_eps;
                PixelRenderT<Ad> px = march_ray_ad(c.tape, ray, session.scene, session.light, session.store, rc_ray,
                                                   beta, t.frame, key, &aux);
                out.rgb = px.rgb;
                out.opacity = px.opacity;
                out.opacity_E = px.opacity_E;
                out.opacity_S = px.opacity_S;
                out.spec = px.spec_albedo;
                out.grad_norms = std::move(aux.grad_norms);
                out.normal_dots = std::move(aux.normal_dots);
            } else {
                std::optional<SurfaceHit> hit = surface_trace(ray.origin, ray.direction, session.scene, session.store);
                if (hit) {
                    UnionSdf u = union_sdf(hit->x, session.scene.sdf, session.scene.eyes, session.store);
                    Material<Ad> m = material_at_ad(c.tape, hit->x, session.scene.refl, session.scene.prior, u.sdf_E,
                                                    u.sdf_S, session.store);
                    Vec3T<Ad> n(Ad(hit->n.x), Ad(hit->n.y), Ad(hit->n.z));
                    out.rgb =
                        shade(hit->x, ray.origin, n, m.c, m.s, m.rho, session.light, session.store, &c.tape, t.frame);
                    out.opacity = Ad(1.0);
                    out.spec = m.s;
                } else {
                    out.rgb = Vec3T<Ad>(Ad(0.0), Ad(0.0), Ad(0.0));
                }
            }
        }
    });

    // Global denominators for the batch means.
    BatchCounts counts;
    counts.rays = tasks.size();
    for (int w = 0; w < workers_; ++w) {
        size_t begin = size_t(w) * per_worker;
        for (size_t j = 0; j < ctx_[size_t(w)]->outs.size(); ++j) {
            const RayOut& out = ctx_[size_t(w)]->outs[j];
            counts.eik_samples += out.grad_norms.size();
            if (tasks[begin + j].label == RayLabel::Hair)
                counts.dots_hair += out.normal_dots.size();
            else
                counts.dots_other += out.normal_dots.size();
            if (tasks[begin + j].label != RayLabel::Eye) ++counts.ref_rays;
        }
    }

    // Phase B: per-worker weighted partial loss; one backward pass each when
    // gradients are requested.
    run_workers(workers_, [&](int w) {
        Ctx& c = *ctx_[size_t(w)];
        size_t begin = size_t(w) * per_worker;
        Ad local(0.0);
        Ad k_ad = session.k.k_as<Ad>(session.store, &c.tape);
        for (size_t j = 0; j < c.outs.size(); ++j) {
            const RayTask& t = tasks[begin + j];
            const RayOut& out = c.outs[j];
            Ad term(0.0);
            for (int chn = 0; chn < 3; ++chn)
                term = term + abs(out.rgb[chn] - t.target[chn]) * (weights.w_l1 / (3.0 * double(counts.rays)));
            if (stage == Stage::One) {
                term = term + abs(out.opacity - t.mask) * (weights.w_mask / double(counts.rays));
                term = term + (abs(out.opacity_E - t.mask_e) + abs(out.opacity_S - t.mask_s)) *
                                  (weights.w_comp / double(counts.rays));
                if (counts.eik_samples > 0) {
                    Ad eik(0.0);
                    for (const Ad& g : out.grad_norms) eik = eik + sq(g - 1.0);
                    term = term + eik * (weights.w_eikonal / double(counts.eik_samples));
                }
                bool hair = t.label == RayLabel::Hair;
                size_t dot_count = hair ? counts.dots_hair : counts.dots_other;
                double w_eps = hair ? weights.w_eps_hair : weights.w_eps_other;
                if (dot_count > 0 && !out.normal_dots.empty()) {
                    Ad smooth(0.0);
                    for (const Ad& d : out.normal_dots) smooth = smooth + (1.0 - d);
                    term = term + smooth * (w_eps / double(dot_count));
                }
            }
            if (t.label != RayLabel::Eye && counts.ref_rays > 0) {
                double pseudo = t.label == RayLabel::Hair ? 0.0 : t.pseudo_spec;
                term = term + abs(k_ad * out.spec - pseudo) * (weights.w_ref / double(counts.ref_rays));
            }
            local = local + term;
        }
        c.loss_value = val(local);
        if (grads) c.tape.backward(local.idx, c.grads);
    });

    Result res;
    if (grads) {
        // Fixed-order reduction keeps results independent of scheduling.
        for (int w = 0; w < workers_; ++w) grads->reduce_from(ctx_[size_t(w)]->grads);
    }
    for (int w = 0; w < workers_; ++w) res.total += ctx_[size_t(w)]->loss_value;

    // Plain breakdown for logs and guards.
    {
        double l1 = 0, mask = 0, comp = 0, eik = 0, sm_h = 0, sm_o = 0, ref = 0;
        double k_val = session.k.k(session.store);
        for (int w = 0; w < workers_; ++w) {
            size_t begin = size_t(w) * per_worker;
            for (size_t j = 0; j < ctx_[size_t(w)]->outs.size(); ++j) {
                const RayTask& t = tasks[begin + j];
                const RayOut& out = ctx_[size_t(w)]->outs[j];
                for (int chn = 0; chn < 3; ++chn) l1 += std::fabs(val(out.rgb[chn]) - t.target[chn]);
                mask += std::fabs(val(out.opacity) - t.mask);
                comp += std::fabs(val(out.opacity_E) - t.mask_e) + std::fabs(val(out.opacity_S) - t.mask_s);
                for (const Ad& g : out.grad_norms) eik += sq(val(g) - 1.0);
                for (const Ad& d : out.normal_dots) (t.label == RayLabel::Hair ? sm_h : sm_o) += 1.0 - val(d);
                if (t.label != RayLabel::Eye)
                    ref += std::fabs(k_val * val(out.spec) - (t.label == RayLabel::Hair ? 0.0 : t.pseudo_spec));
            }
        }
        LossBreakdown& bd = res.breakdown;
        bd.l1 = counts.rays ? l1 / (3.0 * double(counts.rays)) : 0.0;
        bd.mask = counts.rays ? mask / double(counts.rays) : 0.0;
        bd.comp = counts.rays ? comp / double(counts.rays) : 0.0;
        bd.eikonal = counts.eik_samples ? eik / double(counts.eik_samples) : 0.0;
        bd.smooth_hair = counts.dots_hair ? sm_h / double(counts.dots_hair) : 0.0;
        bd.smooth_other = counts.dots_other ? sm_o / double(counts.dots_other) : 0.0;
        bd.ref = counts.ref_rays ? ref / double(counts.ref_rays) : 0.0;
        bd.total = res.total;
    }
    return res;
}

FitReport fit(FitSession& session, const CaptureDataset& data, const TrainConfig& cfg, const std::string& csv_path,
              const std::function<void(int, const FitSession&)>& snapshot_cb) {
    cfg.validate();
    if (data.frames.empty()) throw ConfigError("fit needs a non-empty dataset");

    std::vector<int> train_frames;
    for (int i = 0; i < int(data.frames.size()); ++i) {
        bool held = false;
        for (int hv : cfg.holdout) held = held || hv == i;
        if (!held) train_frames.push_back(i);
    }
    if (train_frames.empty()) throw ConfigError("holdout list leaves no training frames");

    std::vector<PixelBox> bboxes;
    bboxes.reserve(data.frames.size());
    for (const Frame& f : data.frames) bboxes.push_back(face_bbox(f, cfg.bbox_margin));

    double smooth_eps = cfg.smooth_eps;
    if (smooth_eps <= 0.0) {
        int finest = session.scene.sdf.grid().levels().back().res;
        smooth_eps = 1.0 / (finest - 1);  // half of the finest voxel edge (2/(res-1))
    }

    BatchRunner runner(cfg.workers, session.store.size());
    Adam adam;
    adam.init(session.store.size());
    GradBuffer grads(session.store.size());

    CsvLogger log(csv_path);
    FitReport report;

    double guard_reference = -1.0;
    int guard_strikes = 0;

    const LossWeights weights_one = LossWeights::stage_defaults(Stage::One);
    const LossWeights weights_two = LossWeights::stage_defaults(Stage::Two);

    if (cfg.light_warmup_iters > 0) session.store.set_trainable(session.light.klm_group, false);

    std::array<double, 27> ambient_prior{};
    for (int j = 0; j < 9; ++j)
        for (int ch = 0; ch < 3; ++ch)
            ambient_prior[size_t(j * 3 + ch)] = session.store.at(session.light.klm_pid(session.store, j, ch));

    for (int iter = 0; iter < cfg.total_iters; ++iter) {
        Stage stage = stage_at(cfg, iter);
        if (iter == cfg.light_warmup_iters && cfg.light_warmup_iters > 0)
            session.store.set_trainable(session.light.klm_group, true);
        if (stage == Stage::Two && report.stage_switch_iter < 0) {
            report.stage_switch_iter = iter;
            session.store.set_trainable(session.scene.sdf.group(), false);
            session.store.set_trainable(session.beta_group, false);
            guard_reference = -1.0;
            guard_strikes = 0;
        }

        // Deterministic batch plan: uniform over the training frames' face boxes.
        Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL, uint64_t(iter));
        std::vector<RayTask> tasks(size_t(cfg.rays_per_batch));
        for (RayTask& t : tasks) {
            t.frame = train_frames[rng.below(uint32_t(train_frames.size()))];
            const PixelBox& box = bboxes[size_t(t.frame)];
            t.px = box.x0 + int(rng.below(uint32_t(box.width())));
            t.py = box.y0 + int(rng.below(uint32_t(box.height())));
            t.subray = int(rng.below(uint32_t(data.spp)));
            finish_ray_task(t, data);
        }

        RenderConfig rc;
        rc.samples_per_ray = cfg.samples_per_ray;
        rc.rng_seed = cfg.seed;
        rc.density_beta = session.beta();
        rc.density_alpha = 1.0 / rc.density_beta;

        grads.clear();
        BatchRunner::Result res = runner.run(session, data, tasks, stage,
                                             stage == Stage::One ? weights_one : weights_two, rc, smooth_eps, &grads,
                                             cfg.ray_clip_radius);

        double lr = lr_at(cfg, iter);
        log.row(iter, stage, res.breakdown, lr);
        if (iter == 0) report.first = res.breakdown;
        report.last = res.breakdown;

        if (guard_reference < 0.0) guard_reference = res.total;
        if (res.total > 10.0 * guard_reference) {
            if (++guard_strikes >= 100)
                throw DivergenceError("fit diverged: loss " + std::to_string(res.total) + " exceeds 10x initial " +
                                      std::to_string(guard_reference) + " at iter " + std::to_string(iter));
        } else {
            guard_strikes = 0;
        }

        adam.step(session.store, grads, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        if (cfg.ambient_decay > 0.0 && session.store.group(session.light.klm_group).trainable) {
            // Pull every coefficient toward its initial (dim-room prior) value.
            double shrink = 1.0 - lr * cfg.ambient_decay;
            for (int j = 0; j < 9; ++j)
                for (int ch = 0; ch < 3; ++ch) {
                    uint32_t pid = session.light.klm_pid(session.store, j, ch);
                    double prior = ambient_prior[size_t(j * 3 + ch)];
                    session.store.at(pid) = prior + (session.store.at(pid) - prior) * shrink;
                }
        }
        report.iters_run = iter + 1;

        if (snapshot_cb && cfg.snapshot_every > 0 && (iter + 1) % cfg.snapshot_every == 0)
            snapshot_cb(iter + 1, session);
    }

    if (report.stage_switch_iter < 0 && cfg.stage1_iters < cfg.total_iters)
        report.stage_switch_iter = cfg.stage1_iters;
    return report;
}

Image render_surface_image(const FitSession& session, const Camera& camera, std::optional<int> view, int spp,
                           int workers) {
    Image out(camera.width, camera.height, 3);
    auto offsets = subpixel_pattern(spp);
    auto rows = [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < camera.width; ++x) {
                Vec3 acc{0, 0, 0};
                for (auto [ox, oy] : offsets) {
                    Ray ray{camera.center, camera.ray_direction(x, y, ox, oy)};
                    std::optional<SurfaceHit> hit =
                        surface_trace(ray.origin, ray.direction, session.scene, session.store);
                    if (!hit) continue;
                    UnionSdf u = union_sdf(hit->x, session.scene.sdf, session.scene.eyes, session.store);
                    Material<double> m = material_at(hit->x, session.scene.refl, session.scene.prior, u.sdf_E,
                                                     u.sdf_S, session.store);
                    acc = acc + shade<double>(hit->x, ray.origin, hit->n, m.c, m.s, m.rho, session.light,
                                              session.store, nullptr, view);
                }
                out.set_rgb(x, y, acc * (1.0 / spp));
            }
    };
    workers = std::max(1, workers);
    if (workers == 1) {
        rows(0, camera.height);
    } else {
        std::vector<std::thread> pool;
        int per = (camera.height + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            int y0 = w * per, y1 = std::min(camera.height, y0 + per);
            if (y0 >= y1) break;
            pool.emplace_back(rows, y0, y1);
        }
        for (auto& t : pool) t.join();
    }
    return out;
}

GradCheckResult gradient_check(uint64_t seed, int n_scenes, int rays_per_scene, int params_per_group, double fd_h) {
    GradCheckResult result;
    std::map<std::string, double> group_worst;

    for (int scene_idx = 0; scene_idx < n_scenes; ++scene_idx) {
        Rng rng(seed, uint64_t(scene_idx) + 1);

        // Random miniature problem: 16^3 grids, randomized around the sphere
        // init, random light/material/targets, all loss terms active.
        SceneConfig cfg;
        cfg.sdf_levels = {16};
        cfg.refl_levels = {16};
        cfg.r0 = 0.45;
        cfg.eyes.p_l = {-0.2, 0.1, 0.35};
        cfg.eyes.p_r = {0.2, 0.1, 0.35};
        cfg.eyes.r = 0.12;
        bool occlusion = scene_idx % 2 == 0;
        FitSession session = make_session(cfg, 8.0, 2, occlusion, 0.05 + 0.1 * rng.uniform());

        for (double& v : session.store.group_values(session.scene.sdf.group())) v += rng.uniform(-0.05, 0.05);
        for (double& v : session.store.group_values(session.scene.refl.group())) v = rng.uniform(-0.8, 0.8);
        for (double& v : session.store.group_values(session.light.klm_group)) v = rng.uniform(-0.6, 0.6);
        if (occlusion)
            for (double& v : session.store.group_values(session.light.occ_group)) v = rng.uniform(-0.5, 0.5);
        session.store.group_values(session.k.group)[0] = rng.uniform(-0.3, 0.3);

        // Two tiny frames with random targets, labels and pseudo-spec.
        CaptureDataset data;
        data.spp = 1;
        for (int f = 0; f < 2; ++f) {
            Frame frame;
            frame.id = f == 0 ? "0000" : "0001";
            double az = rng.uniform(0.0, 2.0 * kPi);
            Vec3 eye{2.0 * std::sin(az), rng.uniform(-0.4, 0.4), 2.0 * std::cos(az)};
            frame.camera = Camera::look_at(eye, {0, 0, 0}, {0, 1, 0}, 8.0, 8, 8);
            frame.rgb = Image(8, 8, 3);
            frame.pseudo_spec = Image(8, 8, 1);
            frame.labels.assign(64, 0);
            for (size_t i = 0; i < frame.rgb.data.size(); ++i) frame.rgb.data[i] = float(rng.uniform());
            for (size_t i = 0; i < 64; ++i) {
                frame.labels[i] = uint8_t(rng.below(4));
                frame.pseudo_spec.data[i] = float(rng.uniform());
            }
            data.frames.push_back(std::move(frame));
        }

        auto tasks = std::vector<RayTask>(size_t(rays_per_scene));
        for (RayTask& t : tasks) {
            t.frame = int(rng.below(2));
            t.px = int(rng.below(8));
            t.py = int(rng.below(8));
            t.subray = 0;
            finish_ray_task(t, data);
        }

        RenderConfig rc;
        rc.samples_per_ray = 32;
        rc.rng_seed = seed;
        rc.density_beta = session.beta();
        rc.density_alpha = 1.0 / rc.density_beta;

        LossWeights weights = LossWeights::stage_defaults(Stage::One);
        const double smooth_eps = 0.03;

        BatchRunner runner(1, session.store.size());
        GradBuffer grads(session.store.size());
        auto forward = [&]() {
            rc.density_beta = session.beta();
            rc.density_alpha = 1.0 / rc.density_beta;
            return runner.run(session, data, tasks, Stage::One, weights, rc, smooth_eps, nullptr).total;
        };

        grads.clear();
        rc.density_beta = session.beta();
        rc.density_alpha = 1.0 / rc.density_beta;
        runner.run(session, data, tasks, Stage::One, weights, rc, smooth_eps, &grads);

        // Per group: check the largest-magnitude touched gradients plus a few
        // random ones; finite differences re-run the full forward pass.
        for (size_t gid = 0; gid < session.store.group_count(); ++gid) {
            const ParamStore::Group& group = session.store.group(int(gid));
            std::vector<uint32_t> touched;
            for (uint32_t pid : grads.touched())
                if (pid >= group.offset && pid < group.offset + group.size) touched.push_back(pid);
            if (touched.empty()) continue;
            std::sort(touched.begin(), touched.end(), [&](uint32_t a, uint32_t b) {
                return std::fabs(grads[a]) > std::fabs(grads[b]) || (std::fabs(grads[a]) == std::fabs(grads[b]) && a < b);
            });
            size_t n_check = std::min(touched.size(), size_t(params_per_group));
            for (size_t i = 0; i < n_check; ++i) {
                uint32_t pid = touched[i];
                double orig = session.store.at(pid);
                session.store.at(pid) = orig + fd_h;
                double fp = forward();
                session.store.at(pid) = orig - fd_h;
                double fm = forward();
                session.store.at(pid) = orig;
                double fd = (fp - fm) / (2.0 * fd_h);
                double an = grads[pid];
                double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-6});
                result.max_rel_err = std::max(result.max_rel_err, rel);
                auto [it, inserted] = group_worst.emplace(group.name, rel);
                if (!inserted) it->second = std::max(it->second, rel);
                ++result.params_checked;
            }
        }
    }

    for (const auto& [name, err] : group_worst) result.group_errors.emplace_back(name, err);
    return result;
}

}  // namespace flashscan
