// Acceptance suite: one check per numbered criterion, each printing a single
// [PASS]/[FAIL] line. `--criterion prepare` runs the synthetic fit once and
// leaves its artifacts in the work directory for criteria 2 and 3.

#include "flashscan/export.hpp"
#include "flashscan/image_io.hpp"
#include "flashscan/optimizer.hpp"
#include "flashscan/relight.hpp"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace flashscan;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string criterion = "all";
    std::string work_dir = "acceptance_work";
    int stage1 = 4000;
    int stage2 = 1000;
    int rays = 192;
    int views = 16;
    int resolution = 64;
    int spp = 4;
    uint64_t seed = 2024;
};

struct Outcome {
    bool pass = true;
    std::string detail;
};

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void report(int criterion, const char* name, const Outcome& o) {
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << name;
    if (!o.detail.empty()) std::cout << " (" << o.detail << ")";
    std::cout << "\n";
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// The shared synthetic fit (criteria 2 and 3 consume its artifacts).

SceneConfig accept_scene_config(const SyntheticScene& gt) {
    SceneConfig cfg;
    cfg.sdf_levels = {16, 32, 64};
    cfg.refl_levels = {16, 32, 64};
    cfg.r0 = 0.65;  // init sphere containing the whole head: fitting carves inward
    cfg.eyes = gt.eyes;  // eyeball placement is manual in the capture protocol
    cfg.prior = gt.prior;
    return cfg;
}

TrainConfig accept_train_config(const Options& opt, int holdout_view) {
    TrainConfig cfg;
    cfg.total_iters = opt.stage1 + opt.stage2;
    cfg.stage1_iters = opt.stage1;
    cfg.lr0 = 5e-3;
    cfg.lr_decay_factor = 0.3;
    cfg.lr_decay_every = std::max(1, (opt.stage1 + opt.stage2) * 15000 / 40000);
    cfg.rays_per_batch = opt.rays;
    cfg.samples_per_ray = 64;
    cfg.seed = opt.seed;
    cfg.beta_init = 0.08;
    cfg.ambient_decay = 0.5;
    cfg.holdout = {holdout_view};
    return cfg;
}

void run_prepare(const Options& opt) {
    fs::create_directories(opt.work_dir);
    SyntheticScene gt = SyntheticScene::default_head();
    CaptureDataset data = generate_synthetic(gt, opt.views, opt.resolution, opt.seed, opt.spp);
    save_dataset(data, opt.work_dir + "/dataset");

    const int holdout = opt.views - 1;
    FitSession session = make_session(accept_scene_config(gt), 8.0, opt.views, false, 0.08);
    TrainConfig cfg = accept_train_config(opt, holdout);

    double t0 = now_seconds();
    FitReport rep = fit(session, data, cfg, opt.work_dir + "/loss_log.csv");
    double elapsed = now_seconds() - t0;

    save_sdf_grid(opt.work_dir + "/sdf.hirg", session.scene.sdf, session.store);
    save_refl_grid(opt.work_dir + "/refl.hirr", session.scene.refl, session.store);
    std::vector<std::string> ids;
    for (const Frame& f : data.frames) ids.push_back(f.id);
    save_light(opt.work_dir + "/light.txt", session.light, session.store, ids);
    save_fit_state(opt.work_dir + "/state.txt", session.beta(), session.k.k(session.store));
    save_scene_config(opt.work_dir + "/scene.cfg", accept_scene_config(gt));
    std::ofstream meta(opt.work_dir + "/fit_meta.txt");
    meta << "holdout " << holdout << "\nstage_switch " << rep.stage_switch_iter << "\nelapsed_s " << elapsed
         << "\nfinal_l1 " << rep.last.l1 << "\n";
    std::cout << "fit finished: " << rep.iters_run << " iters in " << fmt(elapsed) << " s, final l1 "
              << fmt(rep.last.l1) << "\n";
}

FitSession load_fitted(const Options& opt, int n_views) {
    SceneConfig cfg = load_scene_config(opt.work_dir + "/scene.cfg");
    FitSession session = make_session(cfg, 8.0, n_views, false, 0.08);
    load_sdf_grid(opt.work_dir + "/sdf.hirg", session.scene.sdf, session.store);
    load_refl_grid(opt.work_dir + "/refl.hirr", session.scene.refl, session.store);
    CaptureDataset data = load_dataset(opt.work_dir + "/dataset");
    std::vector<std::string> ids;
    for (const Frame& f : data.frames) ids.push_back(f.id);
    load_light(opt.work_dir + "/light.txt", session.light, session.store, ids);
    double beta = 0.08, k = 1.0;
    load_fit_state(opt.work_dir + "/state.txt", &beta, &k);
    session.set_beta(beta);
    session.store.group_values(session.k.group)[0] = std::log(k);
    return session;
}

// ---------------------------------------------------------------------------

Outcome criterion_1(const Options&) {
    double t0 = now_seconds();
    GradCheckResult res = gradient_check(/*seed=*/7, /*n_scenes=*/20, /*rays_per_scene=*/8, /*params_per_group=*/10);
    double elapsed = now_seconds() - t0;
    Outcome o;
    o.pass = res.max_rel_err < 1e-3 && elapsed < 60.0;
    o.detail = "max rel err " + fmt(res.max_rel_err) + " over " + std::to_string(res.params_checked) + " params, " +
               fmt(elapsed) + " s";
    return o;
}

Outcome criterion_2(const Options& opt) {
    CaptureDataset data = load_dataset(opt.work_dir + "/dataset");
    FitSession session = load_fitted(opt, int(data.frames.size()));
    SyntheticScene gt = SyntheticScene::default_head();

    int holdout = int(data.frames.size()) - 1;
    const Frame& held = data.frames[size_t(holdout)];

    Image rendered = render_surface_image(session, held.camera, holdout, data.spp);
    double mse = 0;
    for (size_t i = 0; i < rendered.data.size(); ++i) {
        double d = double(rendered.data[i]) - double(held.rgb.data[i]);
        mse += d * d;
    }
    mse /= double(rendered.data.size());
    double psnr = -10.0 * std::log10(std::max(mse, 1e-300));

    // Albedo errors inside the S mask, against the analytic ground truth.
    double diffuse_err = 0, spec_err = 0;
    size_t n_px = 0;
    double k_val = session.k.k(session.store);
    for (int y = 0; y < held.camera.height; ++y)
        for (int x = 0; x < held.camera.width; ++x) {
            RayLabel label = RayLabel(held.labels[size_t(y) * size_t(held.camera.width) + size_t(x)]);
            if (label != RayLabel::Skin && label != RayLabel::Hair) continue;
            Ray ray{held.camera.center, held.camera.ray_direction(x, y)};
            auto fit_hit = surface_trace(ray.origin, ray.direction, session.scene, session.store);
            auto gt_hit = gt.trace(ray);
            if (!fit_hit || !gt_hit) continue;
            UnionSdf u = union_sdf(fit_hit->x, session.scene.sdf, session.scene.eyes, session.store);
            Material<double> m =
                material_at(fit_hit->x, session.scene.refl, session.scene.prior, u.sdf_E, u.sdf_S, session.store);
            Material<double> m_gt = gt.classify(gt_hit->x).material;
            diffuse_err +=
                (std::fabs(m.c.x - m_gt.c.x) + std::fabs(m.c.y - m_gt.c.y) + std::fabs(m.c.z - m_gt.c.z)) / 3.0;
            spec_err += std::fabs(k_val * m.s - m_gt.s);
            ++n_px;
        }
    diffuse_err /= std::max<size_t>(n_px, 1);
    spec_err /= std::max<size_t>(n_px, 1);

    Outcome o;
    o.pass = psnr >= 32.0 && diffuse_err < 0.05 && spec_err < 0.05 && n_px > 100;
    o.detail = "held-out PSNR " + fmt(psnr) + " dB, diffuse MAE " + fmt(diffuse_err) + ", specular MAE " +
               fmt(spec_err) + ", k " + fmt(k_val) + ", " + std::to_string(n_px) + " S px";
    return o;
}

Outcome criterion_3(const Options& opt) {
    CaptureDataset data = load_dataset(opt.work_dir + "/dataset");
    FitSession session = load_fitted(opt, int(data.frames.size()));
    int holdout = int(data.frames.size()) - 1;
    const Frame& held = data.frames[size_t(holdout)];

    RenderConfig rc = session.render_config(64, opt.seed);
    RenderedImage img = render_image(held.camera, session.scene, session.light, session.store, rc, holdout);

    size_t eye_total = 0, eye_good = 0, skin_total = 0, skin_good = 0;
    for (int y = 0; y < held.camera.height; ++y)
        for (int x = 0; x < held.camera.width; ++x) {
            RayLabel label = RayLabel(held.labels[size_t(y) * size_t(held.camera.width) + size_t(x)]);
            double op_e = img.opacity_E.at(x, y, 0);
            if (label == RayLabel::Eye) {
                ++eye_total;
                if (op_e >= 0.9) ++eye_good;
            } else if (label == RayLabel::Skin) {
                ++skin_total;
                if (op_e <= 0.05) ++skin_good;
            }
        }
    double eye_frac = eye_total ? double(eye_good) / double(eye_total) : 0.0;
    double skin_frac = skin_total ? double(skin_good) / double(skin_total) : 0.0;

    Outcome o;
    o.pass = eye_frac >= 0.95 && skin_frac >= 0.95 && eye_total > 20;
    o.detail = "opacity_E>=0.9 on " + fmt(100 * eye_frac) + "% of " + std::to_string(eye_total) +
               " eye px; <=0.05 on " + fmt(100 * skin_frac) + "% of " + std::to_string(skin_total) + " skin px";
    return o;
}

Outcome criterion_4(const Options&) {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {16, 32});
    Rng rng(404, 1);
    grid.init_sphere(store, 0.45);
    for (double& v : store.group_values(grid.group())) v += rng.uniform(-0.1, 0.1);
    SphereEyeballs eyes;

    size_t bad_union = 0, bad_select = 0;
    for (int i = 0; i < 100000; ++i) {
        Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        UnionSdf u = union_sdf(x, grid, eyes, store);
        if (u.sdf != std::min(u.sdf_E, u.sdf_S)) ++bad_union;

        double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
        double se = rng.uniform(-1, 1), ss = rng.uniform(-1, 1);
        if (rng.below(16) == 0) ss = se;  // exercise ties
        double indicator = a * (se <= ss ? 1.0 : 0.0) + b * (se > ss ? 1.0 : 0.0);
        if (select(a, b, se, ss) != indicator) ++bad_select;
    }
    Outcome o;
    o.pass = bad_union == 0 && bad_select == 0;
    o.detail = std::to_string(bad_union) + " union mismatches, " + std::to_string(bad_select) +
               " select mismatches over 1e5 points";
    return o;
}

Outcome criterion_5(const Options&) {
    Outcome o;
    const double alpha = 17.0, beta = 0.05;
    if (sdf_to_density(0.0, alpha, beta) != alpha / 2.0) {
        o.pass = false;
        o.detail = "sigma(0) != alpha/2";
        return o;
    }
    double prev = std::numeric_limits<double>::infinity();
    for (double x = -1.0; x <= 1.0; x += 1e-3) {
        double d = sdf_to_density(x, alpha, beta);
        if (d > prev) {
            o.pass = false;
            o.detail = "density not monotone at sdf " + fmt(x);
            return o;
        }
        prev = d;
    }

    // Weight sums on random rays through random scenes.
    double worst = 0;
    Rng rng(505, 2);
    for (int scene_i = 0; scene_i < 10; ++scene_i) {
        SceneConfig c;
        c.sdf_levels = {12};
        c.refl_levels = {8};
        c.r0 = 0.4;
        FitSession s = make_session(c, 8.0, 0, false, 0.02 + 0.05 * rng.uniform());
        for (double& v : s.store.group_values(s.scene.sdf.group())) v += rng.uniform(-0.2, 0.2);
        RenderConfig rc = s.render_config(32, rng.next_u32());
        for (int r = 0; r < 1000; ++r) {
            Vec3 o3 = rng.unit_vector() * rng.uniform(1.5, 3.0);
            Vec3 target{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
            Ray ray{o3, normalized(target - o3)};
            PixelRender px = march_ray(ray, s.scene, s.light, s.store, rc, std::nullopt, uint64_t(r));
            worst = std::max(worst, px.opacity);
        }
    }
    o.pass = worst <= 1.0 + 1e-6;
    o.detail = "sigma(0)=alpha/2 exact, monotone sweep ok, max opacity " + fmt(worst) + " over 1e4 rays";
    return o;
}

Outcome criterion_6(const Options&) {
    // Fitted-scene-independent: a sphere scene with varying albedo.
    SceneConfig cfg;
    cfg.sdf_levels = {24};
    cfg.refl_levels = {8};
    cfg.r0 = 0.5;
    cfg.eyes.p_l = cfg.eyes.p_r = {0.9, 0.9, 0.9};
    cfg.eyes.r = 0.02;
    FitSession s = make_session(cfg);
    Rng rng(606, 3);
    for (double& v : s.store.group_values(s.scene.refl.group())) v = rng.uniform(-0.5, 0.5);

    Camera cam = Camera::look_at({0, 0, 2.2}, {0, 0, 0}, {0, 1, 0}, 24, 24, 24);
    ShBasisRenders basis = render_sh_basis(s, cam);

    std::array<std::array<double, 9>, 3> truth{};
    for (int ch = 0; ch < 3; ++ch)
        for (int j = 0; j < 9; ++j) truth[size_t(ch)][size_t(j)] = rng.uniform(-1.0, 2.0);
    DImage target = combine_basis(basis, truth);
    ShSolve solve = solve_sh_weights(basis, target, {});

    double worst = 0;
    for (int ch = 0; ch < 3; ++ch)
        for (int j = 0; j < 9; ++j) {
            double rel = std::fabs(solve.weights[size_t(ch)][size_t(j)] - truth[size_t(ch)][size_t(j)]) /
                         std::max({std::fabs(truth[size_t(ch)][size_t(j)]), 1e-9});
            worst = std::max(worst, rel);
        }

    // Ratio identity case.
    DImage perf(16, 16, 3), src(16, 16, 3);
    for (size_t i = 0; i < perf.data.size(); ++i) {
        perf.data[i] = rng.uniform(0.0, 1.0);
        src.data[i] = rng.uniform(0.01, 1.0);
    }
    DImage identity = ratio_relight(src, src, perf, 1e-3);
    double worst_ratio = 0;
    for (size_t i = 0; i < perf.data.size(); ++i)
        worst_ratio = std::max(worst_ratio, std::fabs(identity.data[i] - perf.data[i]));

    Outcome o;
    o.pass = worst < 1e-6 && worst_ratio <= 1e-7;
    o.detail = "weight recovery rel err " + fmt(worst) + ", ratio identity err " + fmt(worst_ratio);
    return o;
}

Outcome criterion_7(const Options&) {
    Outcome o;
    ScalarField sphere = [](const Vec3& x) { return norm(x) - 0.5; };
    MeshData mesh = marching_cubes(sphere, 128, 0.001);
    double voxel = 2.0 / 128;
    double worst_r = 0, mean_r = 0;
    for (const Vec3& v : mesh.vertices) {
        worst_r = std::max(worst_r, std::fabs(norm(v) - 0.5));
        mean_r += norm(v);
    }
    mean_r /= double(mesh.vertices.size());
    bool radius_ok = worst_r <= 1.5 * voxel;
    bool iso_ok = mean_r > 0.5;  // the 0.001 iso shifts outward

    // Full chain on a hybrid scene: cull -> largest component -> bake -> write -> re-parse.
    SceneConfig cfg;
    cfg.sdf_levels = {32};
    cfg.refl_levels = {8};
    cfg.r0 = 0.45;
    cfg.eyes.p_l = {-0.2, 0.1, 0.40};
    cfg.eyes.p_r = {0.2, 0.1, 0.40};
    cfg.eyes.r = 0.1;
    FitSession s = make_session(cfg);
    Rng rng(707, 4);
    for (double& v : s.store.group_values(s.scene.refl.group())) v = rng.uniform(-0.6, 0.6);

    MeshData scene_mesh = marching_cubes_scene(s.scene, s.store, 64, 0.001);
    ScalarField field = [&](const Vec3& x) { return union_sdf(x, s.scene.sdf, s.scene.eyes, s.store).sdf; };
    std::vector<Camera> cams;
    for (double el : {-0.8, 0.0, 0.8})
        for (int i = 0; i < 8; ++i) {
            double a = 2.0 * kPi * i / 8;
            Vec3 eye{2.3 * std::cos(el) * std::sin(a), 2.3 * std::sin(el), 2.3 * std::cos(el) * std::cos(a)};
            cams.push_back(Camera::look_at(eye, {0, 0, 0}, {0, 1, 0}, 48, 48, 48));
        }
    MeshData culled = cull_unseen(scene_mesh, cams, field);
    MeshData final_mesh = largest_component(culled);
    bool one_component = connected_component_count(final_mesh) == 1;

    ExportedAssets assets = atlas_and_bake(final_mesh, scene_sampler(s.scene, s.store), 1024);
    std::string dir = "acceptance_export";
    write_assets(assets, dir);
    ParsedObj obj = parse_obj(dir + "/mesh.obj");
    bool topology_ok =
        obj.vertices.size() == final_mesh.vertices.size() && obj.faces.size() == final_mesh.triangles.size();
    for (size_t t = 0; t < obj.faces.size() && topology_ok; t += 7)
        for (int c = 0; c < 3; ++c) topology_ok &= obj.faces[t][size_t(c)] == final_mesh.triangles[t][size_t(c)];

    // Baked diffuse matches field queries within 8-bit quantization (encoded space).
    PngImage diffuse = read_png(dir + "/diffuse.png");
    double worst_q = 0;
    for (size_t t = 0; t < final_mesh.triangles.size(); t += 5) {
        auto uv = assets.uvs[t * 3];
        int px = int(uv[0] * assets.texture_size);
        int py = int((1.0 - uv[1]) * assets.texture_size);
        Vec3 v0 = final_mesh.vertices[size_t(final_mesh.triangles[t][0])];
        UnionSdf u = union_sdf(v0, s.scene.sdf, s.scene.eyes, s.store);
        Material<double> m = material_at(v0, s.scene.refl, s.scene.prior, u.sdf_E, u.sdf_S, s.store);
        for (int ch = 0; ch < 3; ++ch) {
            double stored =
                diffuse.pixels[(size_t(py) * size_t(assets.texture_size) + size_t(px)) * 3 + size_t(ch)] / 255.0;
            worst_q = std::max(worst_q, std::fabs(stored - srgb_encode(m.c[ch])));
        }
    }
    bool bake_ok = worst_q <= 0.5 / 255 + 1e-9;

    o.pass = radius_ok && iso_ok && one_component && topology_ok && bake_ok;
    o.detail = "mc worst |r-0.5| " + fmt(worst_r) + " (<= " + fmt(1.5 * voxel) + "), mean r " + fmt(mean_r) +
               ", components " + std::to_string(connected_component_count(final_mesh)) + ", topo " +
               (topology_ok ? "ok" : "BAD") + ", bake quantization " + fmt(worst_q);
    return o;
}

Outcome criterion_8(const Options&) {
    TrainConfig paper;  // defaults are the published schedule
    bool lr_ok = true;
    for (int i = 0; i < 40000; ++i) {
        double expected = 0.001 * std::pow(0.3, std::floor(double(i) / 15000.0));
        if (std::fabs(lr_at(paper, i) - expected) > 1e-15 * expected) {
            lr_ok = false;
            break;
        }
    }
    bool switch_ok = stage_at(paper, 29999) == Stage::One && stage_at(paper, 30000) == Stage::Two &&
                     paper.stage1_iters == 30000 && paper.total_iters == 40000;

    // Geometry bit-frozen through stage 2, exercised on a scaled fit.
    SyntheticScene gt = SyntheticScene::default_head();
    CaptureDataset data = generate_synthetic(gt, 6, 24, 3, 1);
    SceneConfig sc;
    sc.sdf_levels = {12, 24};
    sc.refl_levels = {12};
    FitSession session = make_session(sc, 8.0, 6);
    TrainConfig cfg;
    cfg.total_iters = 40;
    cfg.stage1_iters = 25;
    cfg.rays_per_batch = 16;
    cfg.samples_per_ray = 16;
    cfg.seed = 8;
    std::vector<double> frozen;
    double beta_frozen = 0;
    auto snap = [&](int iter, const FitSession& s) {
        if (iter == 25) {
            auto vals = s.store.group_values(s.scene.sdf.group());
            frozen.assign(vals.begin(), vals.end());
            beta_frozen = s.beta();
        }
    };
    cfg.snapshot_every = 25;
    fit(session, data, cfg, "", snap);
    auto after = session.store.group_values(session.scene.sdf.group());
    bool frozen_ok = !frozen.empty() && std::equal(after.begin(), after.end(), frozen.begin()) &&
                     session.beta() == beta_frozen;

    Outcome o;
    o.pass = lr_ok && switch_ok && frozen_ok;
    o.detail = std::string("lr trace ") + (lr_ok ? "ok" : "BAD") + ", stage switch at 30000/40000 " +
               (switch_ok ? "ok" : "BAD") + ", geometry bit-frozen " + (frozen_ok ? "ok" : "BAD");
    return o;
}

Outcome criterion_9(const Options& opt) {
    SyntheticScene gt = SyntheticScene::default_head();
    CaptureDataset data = generate_synthetic(gt, 6, 24, 5, 1);
    SceneConfig sc;
    sc.sdf_levels = {12, 24};
    sc.refl_levels = {12};
    TrainConfig cfg;
    cfg.total_iters = 60;
    cfg.stage1_iters = 45;
    cfg.rays_per_batch = 24;
    cfg.samples_per_ray = 24;
    cfg.seed = 99;
    cfg.workers = 2;

    std::string dir = opt.work_dir + "/determinism";
    fs::create_directories(dir);

    auto run_once = [&](const std::string& tag) {
        FitSession session = make_session(sc, 8.0, 6);
        fit(session, data, cfg);
        save_sdf_grid(dir + "/sdf_" + tag + ".hirg", session.scene.sdf, session.store);
        save_refl_grid(dir + "/refl_" + tag + ".hirr", session.scene.refl, session.store);
        RenderConfig rc = session.render_config(32, cfg.seed);
        RenderedImage img =
            render_image(data.frames[0].camera, session.scene, session.light, session.store, rc, 0, 1, 2);
        write_raw_image(dir + "/render_" + tag + ".raw", img.rgb);
    };
    run_once("a");
    run_once("b");

    auto same_bytes = [](const std::string& a, const std::string& b) {
        std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
        std::vector<char> da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        std::vector<char> db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        return !da.empty() && da == db;
    };
    bool sdf_same = same_bytes(dir + "/sdf_a.hirg", dir + "/sdf_b.hirg");
    bool refl_same = same_bytes(dir + "/refl_a.hirr", dir + "/refl_b.hirr");
    bool render_same = same_bytes(dir + "/render_a.raw", dir + "/render_b.raw");

    Outcome o;
    o.pass = sdf_same && refl_same && render_same;
    o.detail = std::string("snapshots ") + (sdf_same && refl_same ? "bit-identical" : "DIFFER") + ", renders " +
               (render_same ? "bit-identical" : "DIFFER");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) throw ConfigError("missing value for " + arg);
            return argv[++i];
        };
        if (arg == "--criterion")
            opt.criterion = next();
        else if (arg == "--work-dir")
            opt.work_dir = next();
        else if (arg == "--stage1")
            opt.stage1 = std::stoi(next());
        else if (arg == "--stage2")
            opt.stage2 = std::stoi(next());
        else if (arg == "--rays")
            opt.rays = std::stoi(next());
        else if (arg == "--spp")
            opt.spp = std::stoi(next());
        else if (arg == "--views")
            opt.views = std::stoi(next());
        else if (arg == "--resolution")
            opt.resolution = std::stoi(next());
        else if (arg == "--seed")
            opt.seed = uint64_t(std::stoull(next()));
        else {
            std::cerr << "unknown flag " << arg << "\n";
            return 1;
        }
    }

    struct Entry {
        int id;
        const char* name;
        Outcome (*run)(const Options&);
    };
    const Entry entries[] = {
        {1, "gradient correctness vs central finite differences", criterion_1},
        {2, "forward/inverse synthetic round trip", criterion_2},
        {3, "region separation via per-region opacities", criterion_3},
        {4, "union SDF min property and select indicator form", criterion_4},
        {5, "Laplace-CDF density and compositing weight bounds", criterion_5},
        {6, "SH relight solve round trip and ratio identity", criterion_6},
        {7, "export chain: marching cubes, culling, atlas, OBJ round trip", criterion_7},
        {8, "schedule fidelity: lr annealing, stage switch, frozen geometry", criterion_8},
        {9, "determinism: bit-identical snapshots and renders", criterion_9},
    };

    try {
        if (opt.criterion == "prepare") {
            run_prepare(opt);
            return 0;
        }
        bool all_pass = true;
        for (const Entry& e : entries) {
            if (opt.criterion != "all" && opt.criterion != std::to_string(e.id)) continue;
            if ((e.id == 2 || e.id == 3) && !file_exists(opt.work_dir + "/state.txt")) run_prepare(opt);
            Outcome o = e.run(opt);
            report(e.id, e.name, o);
            all_pass = all_pass && o.pass;
        }
        return all_pass ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "acceptance run failed: " << e.what() << "\n";
        return 2;
    }
}
