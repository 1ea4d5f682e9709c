// Python bindings for the core operations: SDF queries, shading, rendering,
// synthetic data generation, mesh extraction and SH relighting.

#include "flashscan/export.hpp"
#include "flashscan/image_io.hpp"
#include "flashscan/optimizer.hpp"
#include "flashscan/relight.hpp"
#include "flashscan/serialize.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

namespace py = pybind11;
using namespace flashscan;

namespace {

Vec3 to_vec3(py::array_t<double> a) {
    auto r = a.unchecked<1>();
    if (r.shape(0) != 3) throw ConfigError("expected a 3-vector");
    return {r(0), r(1), r(2)};
}

py::array_t<float> image_to_numpy(const Image& img) {
    py::array_t<float> out({img.height, img.width, img.channels});
    std::memcpy(out.mutable_data(), img.data.data(), img.data.size() * sizeof(float));
    return out;
}

// A fitted (or freshly initialized) scene plus its parameters, exposed as one
// handle so queries stay simple from python.
struct PyScene {
    FitSession session;

    static PyScene create(const std::vector<int>& sdf_levels, const std::vector<int>& refl_levels, double r0,
                          py::array_t<double> eye_l, py::array_t<double> eye_r, double eye_radius) {
        SceneConfig cfg;
        cfg.sdf_levels = sdf_levels;
        cfg.refl_levels = refl_levels;
        cfg.r0 = r0;
        cfg.eyes.p_l = to_vec3(eye_l);
        cfg.eyes.p_r = to_vec3(eye_r);
        cfg.eyes.r = eye_radius;
        return PyScene{make_session(cfg)};
    }

    static PyScene load(const std::string& dir, int n_views) {
        SceneConfig cfg = load_scene_config(dir + "/scene.cfg");
        PyScene s{make_session(cfg, 8.0, n_views)};
        load_sdf_grid(dir + "/sdf.hirg", s.session.scene.sdf, s.session.store);
        load_refl_grid(dir + "/refl.hirr", s.session.scene.refl, s.session.store);
        double beta = 0.05, k = 1.0;
        load_fit_state(dir + "/state.txt", &beta, &k);
        s.session.set_beta(beta);
        return s;
    }

    py::array_t<double> sdf(py::array_t<double> points) {
        auto pts = points.unchecked<2>();
        if (pts.shape(1) != 3) throw ConfigError("points must be (N,3)");
        py::array_t<double> out(pts.shape(0));
        auto o = out.mutable_unchecked<1>();
        for (py::ssize_t i = 0; i < pts.shape(0); ++i)
            o(i) =
                union_sdf({pts(i, 0), pts(i, 1), pts(i, 2)}, session.scene.sdf, session.scene.eyes, session.store)
                    .sdf;
        return out;
    }

    py::array_t<double> normals(py::array_t<double> points) {
        auto pts = points.unchecked<2>();
        if (pts.shape(1) != 3) throw ConfigError("points must be (N,3)");
        py::array_t<double> out({pts.shape(0), py::ssize_t(3)});
        auto o = out.mutable_unchecked<2>();
        for (py::ssize_t i = 0; i < pts.shape(0); ++i) {
            Vec3 n = normal({pts(i, 0), pts(i, 1), pts(i, 2)}, session.scene.sdf, session.scene.eyes, session.store);
            o(i, 0) = n.x;
            o(i, 1) = n.y;
            o(i, 2) = n.z;
        }
        return out;
    }

    py::dict material(py::array_t<double> point) {
        Vec3 x = to_vec3(point);
        UnionSdf u = union_sdf(x, session.scene.sdf, session.scene.eyes, session.store);
        Material<double> m = material_at(x, session.scene.refl, session.scene.prior, u.sdf_E, u.sdf_S, session.store);
        py::dict out;
        out["diffuse"] = py::make_tuple(m.c.x, m.c.y, m.c.z);
        out["specular"] = m.s;
        out["roughness"] = m.rho;
        out["region"] = u.sdf_E <= u.sdf_S ? "E" : "S";
        return out;
    }

    void init_sphere(double r0) { session.scene.sdf.init_sphere(session.store, r0); }
};

}  // namespace

PYBIND11_MODULE(flashscan, m) {
    m.doc() = "hybrid SDF + eyeball-sphere inverse rendering core";

    m.def(
        "sphere_sdf",
        [](py::array_t<double> x, py::array_t<double> p_l, py::array_t<double> p_r, double r) {
            SphereEyeballs eyes{to_vec3(p_l), to_vec3(p_r), r};
            return sphere_sdf(to_vec3(x), eyes);
        },
        py::arg("x"), py::arg("p_l"), py::arg("p_r"), py::arg("r"),
        "exact SDF of the two-eyeball sphere union");

    m.def(
        "sh_basis",
        [](py::array_t<double> normals) {
            auto n = normals.unchecked<2>();
            if (n.shape(1) != 3) throw ConfigError("normals must be (N,3)");
            py::array_t<double> out({n.shape(0), py::ssize_t(9)});
            auto o = out.mutable_unchecked<2>();
            for (py::ssize_t i = 0; i < n.shape(0); ++i) {
                auto sh = sh_basis(Vec3{n(i, 0), n(i, 1), n(i, 2)});
                for (int j = 0; j < 9; ++j) o(i, j) = sh[size_t(j)];
            }
            return out;
        },
        py::arg("normals"), "real SH bands 0-2 in (0,0),(1,-1),(1,0),(1,1),(2,-2)... order");

    m.def(
        "eval_brdf",
        [](py::array_t<double> l, py::array_t<double> v, py::array_t<double> n, py::array_t<double> diffuse,
           double specular, double roughness) {
            Vec3 f = eval_brdf<double>(to_vec3(l), to_vec3(v), to_vec3(n), to_vec3(diffuse), specular, roughness);
            return py::make_tuple(f.x, f.y, f.z);
        },
        py::arg("l"), py::arg("v"), py::arg("n"), py::arg("diffuse"), py::arg("specular"), py::arg("roughness"),
        "Lambertian + GGX/Smith/Schlick reflectance per steradian");

    m.def(
        "sdf_to_density",
        [](py::array_t<double> sdf, double alpha, double beta) {
            auto s = sdf.unchecked<1>();
            py::array_t<double> out(s.shape(0));
            auto o = out.mutable_unchecked<1>();
            for (py::ssize_t i = 0; i < s.shape(0); ++i) o(i) = sdf_to_density(s(i), alpha, beta);
            return out;
        },
        py::arg("sdf"), py::arg("alpha"), py::arg("beta"), "Laplace-CDF density conversion");

    m.def("smooth_min", &smooth_min, py::arg("a"), py::arg("b"), py::arg("sharpness") = 8.0);

    py::class_<PyScene>(m, "Scene")
        .def_static("create", &PyScene::create, py::arg("sdf_levels") = std::vector<int>{16, 32, 64},
                    py::arg("refl_levels") = std::vector<int>{16, 32}, py::arg("r0") = 0.5,
                    py::arg("eye_l"), py::arg("eye_r"), py::arg("eye_radius") = 0.10)
        .def_static("load", &PyScene::load, py::arg("dir"), py::arg("n_views") = 0)
        .def("sdf", &PyScene::sdf, py::arg("points"))
        .def("normals", &PyScene::normals, py::arg("points"))
        .def("material", &PyScene::material, py::arg("point"))
        .def("init_sphere", &PyScene::init_sphere, py::arg("r0"));

    m.def(
        "generate_synthetic",
        [](const std::string& out_dir, int views, int resolution, uint64_t seed, int spp) {
            SyntheticScene gt = SyntheticScene::default_head();
            CaptureDataset data = generate_synthetic(gt, views, resolution, seed, spp);
            save_dataset(data, out_dir);
            return int(data.frames.size());
        },
        py::arg("out_dir"), py::arg("views") = 8, py::arg("resolution") = 48, py::arg("seed") = 1,
        py::arg("spp") = 1, "generate the synthetic head dataset and save it");

    m.def(
        "render",
        [](PyScene& scene, py::array_t<double> eye, py::array_t<double> target, double focal, int width,
           int height, int samples_per_ray, uint64_t seed) {
            Camera cam = Camera::look_at(to_vec3(eye), to_vec3(target), {0, 1, 0}, focal, width, height);
            CombinedLight light = scene.session.light;  // flash-only copy
            light.ambient_enabled = false;
            RenderConfig rc = scene.session.render_config(samples_per_ray, seed);
            RenderedImage img = render_image(cam, scene.session.scene, light, scene.session.store, rc, std::nullopt);
            py::dict out;
            out["rgb"] = image_to_numpy(img.rgb);
            out["opacity"] = image_to_numpy(img.opacity);
            out["opacity_E"] = image_to_numpy(img.opacity_E);
            out["opacity_S"] = image_to_numpy(img.opacity_S);
            return out;
        },
        py::arg("scene"), py::arg("eye"), py::arg("target"), py::arg("focal"), py::arg("width"),
        py::arg("height"), py::arg("samples_per_ray") = 64, py::arg("seed") = 0,
        "flash-only volume render from a look-at camera");

    m.def(
        "marching_cubes",
        [](PyScene& scene, int resolution, double iso) {
            MeshData mesh = marching_cubes_scene(scene.session.scene, scene.session.store, resolution, iso);
            py::array_t<double> verts({py::ssize_t(mesh.vertices.size()), py::ssize_t(3)});
            auto v = verts.mutable_unchecked<2>();
            for (size_t i = 0; i < mesh.vertices.size(); ++i) {
                v(py::ssize_t(i), 0) = mesh.vertices[i].x;
                v(py::ssize_t(i), 1) = mesh.vertices[i].y;
                v(py::ssize_t(i), 2) = mesh.vertices[i].z;
            }
            py::array_t<int> tris({py::ssize_t(mesh.triangles.size()), py::ssize_t(3)});
            auto t = tris.mutable_unchecked<2>();
            for (size_t i = 0; i < mesh.triangles.size(); ++i)
                for (int k = 0; k < 3; ++k) t(py::ssize_t(i), k) = mesh.triangles[i][size_t(k)];
            return py::make_tuple(verts, tris);
        },
        py::arg("scene"), py::arg("resolution") = 64, py::arg("iso") = 0.001,
        "triangulate the union SDF iso-surface");

    m.def(
        "ratio_relight",
        [](py::array_t<double> src, py::array_t<double> tgt, py::array_t<double> performance, double floor) {
            auto s = src.unchecked<3>();
            auto t = tgt.unchecked<3>();
            auto p = performance.unchecked<3>();
            DImage si(int(s.shape(1)), int(s.shape(0)), 3);
            DImage ti = si, pi = si;
            for (py::ssize_t y = 0; y < s.shape(0); ++y)
                for (py::ssize_t x = 0; x < s.shape(1); ++x)
                    for (int c = 0; c < 3; ++c) {
                        si.at(int(x), int(y), c) = s(y, x, c);
                        ti.at(int(x), int(y), c) = t(y, x, c);
                        pi.at(int(x), int(y), c) = p(y, x, c);
                    }
            DImage out = ratio_relight(si, ti, pi, floor);
            py::array_t<double> res({s.shape(0), s.shape(1), py::ssize_t(3)});
            auto r = res.mutable_unchecked<3>();
            for (py::ssize_t y = 0; y < s.shape(0); ++y)
                for (py::ssize_t x = 0; x < s.shape(1); ++x)
                    for (int c = 0; c < 3; ++c) r(y, x, c) = out.at(int(x), int(y), c);
            return res;
        },
        py::arg("src_render"), py::arg("tgt_render"), py::arg("performance"), py::arg("floor") = 1e-3,
        "ratio-image relighting of an aligned frame");

    m.def(
        "gradient_check",
        [](uint64_t seed, int scenes, int rays, int per_group) {
            GradCheckResult res = gradient_check(seed, scenes, rays, per_group);
            py::dict out;
            out["max_rel_err"] = res.max_rel_err;
            out["params_checked"] = res.params_checked;
            py::dict groups;
            for (const auto& [name, err] : res.group_errors) groups[name.c_str()] = err;
            out["groups"] = groups;
            return out;
        },
        py::arg("seed") = 7, py::arg("scenes") = 3, py::arg("rays") = 4, py::arg("per_group") = 6,
        "finite-difference check of the training gradients");
}
