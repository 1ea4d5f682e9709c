// flashscan: hybrid SDF + eyeball-sphere inverse rendering pipeline.
// Subcommands: synth, fit, render, export, relight, gradcheck.

#include "flashscan/export.hpp"
#include "flashscan/image_io.hpp"
#include "flashscan/optimizer.hpp"
#include "flashscan/relight.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

using namespace flashscan;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int default_workers() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : int(n);
}

// Every run echoes its resolved configuration for reproducibility.
void write_run_json(const std::string& out_dir, const std::string& subcommand, const json& config) {
    fs::create_directories(out_dir);
    json run;
    run["subcommand"] = subcommand;
    run["config"] = config;
    std::ofstream f(out_dir + "/run.json");
    if (!f) throw ConfigError("cannot write " + out_dir + "/run.json");
    f << run.dump(2) << "\n";
}

struct FittedArtifacts {
    FitSession session;
    CaptureDataset data;
};

// Loads the artifacts a `fit` run leaves in its output directory.
FittedArtifacts load_fitted_dir(const std::string& scene_dir, const std::string& data_dir) {
    FittedArtifacts out;
    out.data = load_dataset(data_dir);
    SceneConfig cfg = load_scene_config(scene_dir + "/scene.cfg");
    bool occlusion = false;
    {
        std::ifstream lf(scene_dir + "/light.txt");
        std::string line;
        while (std::getline(lf, line))
            if (line.rfind("O ", 0) == 0) occlusion = true;
    }
    out.session = make_session(cfg, 8.0, int(out.data.frames.size()), occlusion, 0.08);
    load_sdf_grid(scene_dir + "/sdf.hirg", out.session.scene.sdf, out.session.store);
    load_refl_grid(scene_dir + "/refl.hirr", out.session.scene.refl, out.session.store);
    std::vector<std::string> ids;
    for (const Frame& f : out.data.frames) ids.push_back(f.id);
    load_light(scene_dir + "/light.txt", out.session.light, out.session.store, ids);
    double beta = 0.05, k = 1.0;
    load_fit_state(scene_dir + "/state.txt", &beta, &k);
    out.session.set_beta(beta);
    out.session.store.group_values(out.session.k.group)[0] = std::log(k);
    return out;
}

SyntheticScene preset_scene(const std::string& preset) {
    if (preset != "small" && preset != "tiny" && preset != "accept")
        throw ConfigError("unknown preset '" + preset + "' (expected tiny, small or accept)");
    return SyntheticScene::default_head();
}

Vec3 patch_mean(const PngImage& img, int x, int y, int w, int h) {
    double scale = img.bit_depth == 16 ? 65535.0 : 255.0;
    Vec3 acc{0, 0, 0};
    size_t n = 0;
    for (int py = y; py < y + h; ++py)
        for (int px = x; px < x + w; ++px) {
            if (px < 0 || py < 0 || px >= img.width || py >= img.height) continue;
            for (int c = 0; c < 3; ++c)
                acc[c] += linearize_gamma22(img.pixels[(size_t(py) * img.width + px) * img.channels + c] / scale);
            ++n;
        }
    if (n == 0) throw ConfigError("flash calibration patch is empty");
    return acc * (1.0 / double(n));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid SDF + eyeball-sphere inverse rendering pipeline"};
    app.require_subcommand(1);

    int exit_code = 0;

    // -------------------------------------------------------------- synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic capture dataset");
    struct {
        std::string preset = "small";
        std::string out;
        int views = 16;
        int resolution = 64;
        int spp = 1;
        uint64_t seed = 1;
    } sy;
    synth->add_option("--preset", sy.preset, "scene preset: tiny, small, accept")->capture_default_str();
    synth->add_option("--out", sy.out, "output dataset directory")->required();
    synth->add_option("--views", sy.views, "number of orbit views")->capture_default_str();
    synth->add_option("--res", sy.resolution, "image resolution")->capture_default_str();
    synth->add_option("--spp", sy.spp, "subpixel samples per pixel (square number)")->capture_default_str();
    synth->add_option("--seed", sy.seed, "rng seed")->capture_default_str();
    synth->callback([&] {
        if (sy.preset == "tiny") {
            sy.views = std::min(sy.views, 8);
            sy.resolution = std::min(sy.resolution, 48);
        }
        SyntheticScene gt = preset_scene(sy.preset);
        CaptureDataset data = generate_synthetic(gt, sy.views, sy.resolution, sy.seed, sy.spp);
        save_dataset(data, sy.out);
        write_run_json(sy.out, "synth",
                       json{{"preset", sy.preset},
                            {"views", sy.views},
                            {"res", sy.resolution},
                            {"spp", sy.spp},
                            {"seed", sy.seed}});
        std::cout << "wrote " << data.frames.size() << " frames to " << sy.out << "\n";
    });

    // -------------------------------------------------------------- fit
    auto* fit_cmd = app.add_subcommand("fit", "fit the hybrid scene to a dataset");
    struct {
        std::string data;
        std::string out;
        std::string scene_config;
        std::string flash_calib;
        std::vector<int> calib_rect{0, 0, 16, 16};
        int iters = 5000;
        int stage1 = 4000;
        int rays = 192;
        int samples = 64;
        double lr0 = 5e-3;
        double lr_decay = 0.3;
        int lr_decay_every = 0;
        double s_l = 8.0;
        double beta_init = 0.08;
        double ambient_decay = 0.5;
        bool occlusion = false;
        std::vector<int> holdout;
        uint64_t seed = 0;
        int workers = default_workers();
        int snapshot_every = 0;
    } ft;
    fit_cmd->add_option("--data", ft.data, "dataset directory")->required();
    fit_cmd->add_option("--out", ft.out, "output directory")->required();
    fit_cmd->add_option("--scene-config", ft.scene_config, "scene config file (grid sizes, eyeballs)");
    fit_cmd->add_option("--iters", ft.iters, "total iterations")->capture_default_str();
    fit_cmd->add_option("--stage1", ft.stage1, "stage-1 iterations")->capture_default_str();
    fit_cmd->add_option("--rays", ft.rays, "rays per batch")->capture_default_str();
    fit_cmd->add_option("--samples", ft.samples, "samples per ray")->capture_default_str();
    fit_cmd->add_option("--lr0", ft.lr0, "initial learning rate")->capture_default_str();
    fit_cmd->add_option("--lr-decay", ft.lr_decay, "learning-rate decay factor")->capture_default_str();
    fit_cmd->add_option("--lr-decay-every", ft.lr_decay_every, "decay interval (0: scale the published 15000)")
        ->capture_default_str();
    fit_cmd->add_option("--flash-scale", ft.s_l, "flashlight intensity scale s_L")->capture_default_str();
    fit_cmd->add_option("--flash-calib", ft.flash_calib, "white-page PNG for flash color calibration");
    fit_cmd->add_option("--flash-calib-rect", ft.calib_rect, "calibration patch x y w h")->expected(4);
    fit_cmd->add_option("--beta-init", ft.beta_init, "initial density beta")->capture_default_str();
    fit_cmd->add_option("--ambient-decay", ft.ambient_decay, "weight decay on ambient SH bands 1-2")
        ->capture_default_str();
    fit_cmd->add_flag("--occlusion", ft.occlusion, "enable per-view photographer occlusion masks");
    fit_cmd->add_option("--holdout", ft.holdout, "frame indices excluded from training");
    fit_cmd->add_option("--seed", ft.seed, "rng seed")->capture_default_str();
    fit_cmd->add_option("--workers", ft.workers, "worker threads")->capture_default_str();
    fit_cmd->add_option("--snapshot-every", ft.snapshot_every, "write snapshots every N iters")
        ->capture_default_str();
    fit_cmd->callback([&] {
        CaptureDataset data = load_dataset(ft.data);
        SceneConfig scene_cfg = ft.scene_config.empty() ? SceneConfig{} : load_scene_config(ft.scene_config);
        FitSession session = make_session(scene_cfg, ft.s_l, int(data.frames.size()), ft.occlusion, ft.beta_init);
        if (!ft.flash_calib.empty()) {
            PngImage page = read_png(ft.flash_calib);
            Vec3 mean = patch_mean(page, ft.calib_rect[0], ft.calib_rect[1], ft.calib_rect[2], ft.calib_rect[3]);
            double peak = std::max({mean.x, mean.y, mean.z, 1e-6});
            session.light.c_l = mean * (1.0 / peak);  // color only; s_L carries the scale
        }

        TrainConfig cfg;
        cfg.total_iters = ft.iters;
        cfg.stage1_iters = ft.stage1;
        cfg.lr0 = ft.lr0;
        cfg.lr_decay_factor = ft.lr_decay;
        cfg.lr_decay_every =
            ft.lr_decay_every > 0 ? ft.lr_decay_every : std::max(1, int(int64_t(ft.iters) * 15000 / 40000));
        cfg.rays_per_batch = ft.rays;
        cfg.samples_per_ray = ft.samples;
        cfg.seed = ft.seed;
        cfg.workers = ft.workers;
        cfg.beta_init = ft.beta_init;
        cfg.ambient_decay = ft.ambient_decay;
        cfg.holdout = ft.holdout;
        cfg.snapshot_every = ft.snapshot_every;

        fs::create_directories(ft.out);
        std::vector<std::string> ids;
        for (const Frame& f : data.frames) ids.push_back(f.id);
        auto snapshot = [&](int iter, const FitSession& s) {
            std::string tag = ft.out + "/iter_" + std::to_string(iter);
            save_sdf_grid(tag + "_sdf.hirg", s.scene.sdf, s.store);
            save_refl_grid(tag + "_refl.hirr", s.scene.refl, s.store);
        };

        write_run_json(ft.out, "fit",
                       json{{"data", ft.data},
                            {"iters", ft.iters},
                            {"stage1", ft.stage1},
                            {"rays", ft.rays},
                            {"samples", ft.samples},
                            {"lr0", ft.lr0},
                            {"lr_decay", ft.lr_decay},
                            {"lr_decay_every", cfg.lr_decay_every},
                            {"flash_scale", ft.s_l},
                            {"beta_init", ft.beta_init},
                            {"ambient_decay", ft.ambient_decay},
                            {"occlusion", ft.occlusion},
                            {"holdout", ft.holdout},
                            {"seed", ft.seed},
                            {"workers", ft.workers}});

        FitReport rep = fit(session, data, cfg, ft.out + "/loss_log.csv",
                            ft.snapshot_every > 0 ? std::function<void(int, const FitSession&)>(snapshot) : nullptr);

        save_sdf_grid(ft.out + "/sdf.hirg", session.scene.sdf, session.store);
        save_refl_grid(ft.out + "/refl.hirr", session.scene.refl, session.store);
        save_light(ft.out + "/light.txt", session.light, session.store, ids);
        save_fit_state(ft.out + "/state.txt", session.beta(), session.k.k(session.store));
        save_scene_config(ft.out + "/scene.cfg", scene_cfg);
        std::cout << "fit: " << rep.iters_run << " iters, stage switch at " << rep.stage_switch_iter
                  << ", final total loss " << rep.last.total << "\n";
    });

    // -------------------------------------------------------------- render
    auto* render_cmd = app.add_subcommand("render", "render a fitted scene");
    struct {
        std::string scene;
        std::string data;
        std::string out;
        int view = 0;
        std::string mode = "surface";
        int spp = 1;
        uint64_t seed = 0;
        int workers = default_workers();
    } rd;
    render_cmd->add_option("--scene", rd.scene, "fitted scene directory (fit output)")->required();
    render_cmd->add_option("--data", rd.data, "dataset directory (cameras)")->required();
    render_cmd->add_option("--out", rd.out, "output directory")->required();
    render_cmd->add_option("--view", rd.view, "camera/frame index")->capture_default_str();
    render_cmd->add_option("--mode", rd.mode, "surface or volume")->capture_default_str();
    render_cmd->add_option("--spp", rd.spp, "subpixel samples per pixel")->capture_default_str();
    render_cmd->add_option("--seed", rd.seed, "rng seed")->capture_default_str();
    render_cmd->add_option("--workers", rd.workers, "worker threads")->capture_default_str();
    render_cmd->callback([&] {
        FittedArtifacts art = load_fitted_dir(rd.scene, rd.data);
        if (rd.view < 0 || rd.view >= int(art.data.frames.size()))
            throw ConfigError("view index out of range: " + std::to_string(rd.view));
        write_run_json(rd.out, "render",
                       json{{"scene", rd.scene},
                            {"data", rd.data},
                            {"view", rd.view},
                            {"mode", rd.mode},
                            {"spp", rd.spp},
                            {"seed", rd.seed},
                            {"workers", rd.workers}});
        const Camera& cam = art.data.frames[size_t(rd.view)].camera;
        if (rd.mode == "volume") {
            RenderConfig rc = art.session.render_config(64, rd.seed);
            RenderedImage img = render_image(cam, art.session.scene, art.session.light, art.session.store, rc,
                                             rd.view, rd.spp, rd.workers);
            write_png_srgb16(rd.out + "/rgb.png", img.rgb);
            write_raw_image(rd.out + "/rgb.raw", img.rgb);
            write_raw_image(rd.out + "/opacity.raw", img.opacity);
            write_raw_image(rd.out + "/opacity_E.raw", img.opacity_E);
            write_raw_image(rd.out + "/opacity_S.raw", img.opacity_S);
            write_raw_image(rd.out + "/depth.raw", img.depth);
        } else if (rd.mode == "surface") {
            Image img = render_surface_image(art.session, cam, rd.view, rd.spp, rd.workers);
            write_png_srgb16(rd.out + "/rgb.png", img);
            write_raw_image(rd.out + "/rgb.raw", img);
        } else {
            throw ConfigError("unknown render mode '" + rd.mode + "'");
        }
        std::cout << "rendered view " << rd.view << " to " << rd.out << "\n";
    });

    // -------------------------------------------------------------- export
    auto* export_cmd = app.add_subcommand("export", "extract mesh + baked maps from a fitted scene");
    struct {
        std::string scene;
        std::string data;
        std::string out;
        int mc_res = 128;
        double iso = 0.001;
        int texture = 1024;
        double clearance = 0.04;
    } ex;
    export_cmd->add_option("--scene", ex.scene, "fitted scene directory")->required();
    export_cmd->add_option("--data", ex.data, "dataset directory (training cameras for culling)")->required();
    export_cmd->add_option("--out", ex.out, "output directory")->required();
    export_cmd->add_option("--mc-res", ex.mc_res, "marching cubes resolution")->capture_default_str();
    export_cmd->add_option("--iso", ex.iso, "iso level")->capture_default_str();
    export_cmd->add_option("--texture", ex.texture, "texture atlas size")->capture_default_str();
    export_cmd->add_option("--clearance", ex.clearance, "visibility trace clearance")->capture_default_str();
    export_cmd->callback([&] {
        FittedArtifacts art = load_fitted_dir(ex.scene, ex.data);
        write_run_json(ex.out, "export",
                       json{{"scene", ex.scene},
                            {"data", ex.data},
                            {"mc_res", ex.mc_res},
                            {"iso", ex.iso},
                            {"texture", ex.texture},
                            {"clearance", ex.clearance}});
        const Scene& scene = art.session.scene;
        const ParamStore& store = art.session.store;
        ScalarField field = [&](const Vec3& x) { return union_sdf(x, scene.sdf, scene.eyes, store).sdf; };

        MeshData mesh = marching_cubes(field, ex.mc_res, ex.iso);
        std::vector<Camera> cameras;
        for (const Frame& f : art.data.frames) cameras.push_back(f.camera);
        MeshData culled = cull_unseen(mesh, cameras, field, ex.clearance);
        MeshData final_mesh = largest_component(culled);
        ExportedAssets assets = atlas_and_bake(final_mesh, scene_sampler(scene, store), ex.texture);
        write_assets(assets, ex.out);
        std::cout << "exported " << final_mesh.triangles.size() << " triangles ("
                  << mesh.triangles.size() - culled.triangles.size() << " culled) to " << ex.out << "\n";
    });

    // -------------------------------------------------------------- relight
    auto* relight_cmd = app.add_subcommand("relight", "SH-basis relighting of aligned performance frames");
    struct {
        std::string scene;
        std::string data;
        int camera = 0;
        std::string target_env;
        std::string performance;
        std::string out;
        double floor = 1e-3;
        int spp = 1;
    } rl;
    relight_cmd->add_option("--scene", rl.scene, "fitted scene directory")->required();
    relight_cmd->add_option("--camera", rl.camera, "camera index into the performance dataset")
        ->capture_default_str();
    relight_cmd->add_option("--target-env", rl.target_env, "target SH coefficients json")->required();
    relight_cmd->add_option("--performance", rl.performance, "performance dataset directory")->required();
    relight_cmd->add_option("--out", rl.out, "output directory")->required();
    relight_cmd->add_option("--floor", rl.floor, "ratio denominator floor")->capture_default_str();
    relight_cmd->add_option("--spp", rl.spp, "subpixel samples per pixel")->capture_default_str();
    relight_cmd->callback([&] {
        FittedArtifacts art = load_fitted_dir(rl.scene, rl.performance);
        if (rl.camera < 0 || rl.camera >= int(art.data.frames.size()))
            throw ConfigError("camera index out of range: " + std::to_string(rl.camera));
        write_run_json(rl.out, "relight",
                       json{{"scene", rl.scene},
                            {"camera", rl.camera},
                            {"target_env", rl.target_env},
                            {"performance", rl.performance},
                            {"floor", rl.floor},
                            {"spp", rl.spp}});

        std::ifstream envf(rl.target_env);
        if (!envf) throw ConfigError("cannot open target env: " + rl.target_env);
        json env;
        envf >> env;
        std::array<std::array<double, 9>, 3> target_coeffs{};
        const json& coeffs = env.at("coefficients");
        if (!coeffs.is_array() || coeffs.size() != 3)
            throw ConfigError("target env must hold 3 channels of 9 coefficients");
        for (int ch = 0; ch < 3; ++ch)
            for (int j = 0; j < 9; ++j) target_coeffs[size_t(ch)][size_t(j)] = coeffs[size_t(ch)].at(size_t(j));

        const Camera& cam = art.data.frames[size_t(rl.camera)].camera;
        ShBasisRenders basis = render_sh_basis(art.session, cam, rl.spp);
        DImage tgt_render = combine_basis(basis, target_coeffs);

        fs::create_directories(rl.out);
        json solves = json::array();
        for (size_t i = 0; i < art.data.frames.size(); ++i) {
            const Frame& frame = art.data.frames[i];
            DImage perf = to_dimage(frame.rgb);
            ShSolve solve = solve_sh_weights(basis, perf, {});
            DImage src_render = combine_basis(basis, solve.weights);
            DImage relit = ratio_relight(src_render, tgt_render, perf, rl.floor);

            Image out_img(relit.width, relit.height, 3);
            for (size_t p = 0; p < relit.data.size(); ++p) out_img.data[p] = float(relit.data[p]);
            write_raw_image(rl.out + "/" + frame.id + ".raw", out_img);
            write_png_srgb16(rl.out + "/" + frame.id + ".png", out_img);

            json entry;
            entry["frame"] = frame.id;
            entry["residual_rms"] = solve.residual_rms;
            entry["rank_deficient"] = solve.rank_deficient;
            for (int ch = 0; ch < 3; ++ch) entry["weights"].push_back(solve.weights[size_t(ch)]);
            solves.push_back(entry);
            if (solve.rank_deficient)
                std::cerr << "warning: rank-deficient SH solve for frame " << frame.id << "\n";
        }
        std::ofstream sf(rl.out + "/solved_lighting.json");
        sf << solves.dump(2) << "\n";
        std::cout << "relit " << art.data.frames.size() << " frames to " << rl.out << "\n";
    });

    // -------------------------------------------------------------- gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the training gradients");
    struct {
        uint64_t seed = 7;
        int scenes = 20;
        int rays = 8;
        int per_group = 10;
        std::string out;
    } gc;
    grad_cmd->add_option("--seed", gc.seed, "rng seed")->capture_default_str();
    grad_cmd->add_option("--scenes", gc.scenes, "number of random scenes")->capture_default_str();
    grad_cmd->add_option("--rays", gc.rays, "rays per scene")->capture_default_str();
    grad_cmd->add_option("--per-group", gc.per_group, "parameters checked per group")->capture_default_str();
    grad_cmd->add_option("--out", gc.out, "optional output directory for run.json");
    grad_cmd->callback([&] {
        if (!gc.out.empty())
            write_run_json(
                gc.out, "gradcheck",
                json{{"seed", gc.seed}, {"scenes", gc.scenes}, {"rays", gc.rays}, {"per_group", gc.per_group}});
        GradCheckResult res = gradient_check(gc.seed, gc.scenes, gc.rays, gc.per_group);
        std::cout << "max relative error " << res.max_rel_err << " over " << res.params_checked << " parameters\n";
        for (const auto& [name, err] : res.group_errors) std::cout << "  " << name << ": " << err << "\n";
        if (res.max_rel_err >= 1e-3) {
            std::cout << "FAIL: exceeds 1e-3\n";
            exit_code = 1;
        } else {
            std::cout << "OK\n";
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
