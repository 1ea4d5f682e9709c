#include "flashscan/rendering.hpp"

#include <thread>

namespace flashscan {

namespace {

// Stratified depths over [t0, t1]: one uniform draw per bin.
void stratified_samples(double t0, double t1, int k, Rng& rng, std::vector<double>& out) {
    out.resize(size_t(k));
    double bin = (t1 - t0) / k;
    for (int j = 0; j < k; ++j) out[size_t(j)] = t0 + (j + rng.uniform()) * bin;
}

// One implementation for both the plain and the differentiated ray march.
template <class T>
PixelRenderT<T> march_ray_impl(Tape* tape, const Ray& ray, const Scene& scene, const CombinedLight& light,
                               const ParamStore& store, const RenderConfig& config, const T& alpha, const T& beta,
                               std::optional<int> view_index, uint64_t ray_key, TrainAux* aux) {
    PixelRenderT<T> px;
    px.rgb = Vec3T<T>(T(0.0), T(0.0), T(0.0));

    double t0, t1;
    if (!intersect_unit_cube(ray, t0, t1)) return px;
    t0 = std::max(t0, config.near);
    t1 = std::min(t1, config.far);
    if (t1 <= t0) return px;

    Rng rng(config.rng_seed, ray_key);
    thread_local std::vector<double> ts;
    stratified_samples(t0, t1, config.samples_per_ray, rng, ts);

    T transmittance(1.0);
    for (size_t j = 0; j < ts.size(); ++j) {
        double t = ts[j];
        double delta = (j + 1 < ts.size() ? ts[j + 1] : t1) - t;
        Vec3 x = ray.origin + ray.direction * t;

        double sdf_E = sphere_sdf(x, scene.eyes);
        T sdf_S;
        Vec3T<T> grad_S;
        if constexpr (std::is_same_v<T, Ad>) {
            GridField::EvalAd e = scene.sdf.eval_ad(*tape, store, x);
            sdf_S = e.value;
            grad_S = e.grad;
        } else {
            GridField::Eval e = scene.sdf.eval(store, x);
            sdf_S = e.value;
            grad_S = e.grad;
        }
        bool in_E = sdf_E <= val(sdf_S);
        T sdf = in_E ? T(sdf_E) : sdf_S;

        // Normal: analytic sphere gradient in E (unit by construction), grid
        // gradient in S. The eikonal term sees the S-branch gradient norm.
        Vec3T<T> n;
        T grad_norm(1.0);
        if (in_E) {
            Vec3 sn = sphere_normal(x, scene.eyes);
            n = Vec3T<T>(T(sn.x), T(sn.y), T(sn.z));
        } else {
            grad_norm = norm(grad_S);
            n = val(grad_norm) < 1e-12 ? Vec3T<T>(T(0.0), T(0.0), T(1.0)) : grad_S / grad_norm;
            if (val(grad_norm) < 1e-12) diag().degenerate_normals.fetch_add(1, std::memory_order_relaxed);
        }

        Material<T> m;
        if constexpr (std::is_same_v<T, Ad>) {
            m = material_at_ad(*tape, x, scene.refl, scene.prior, sdf_E, val(sdf_S), store);
        } else {
            m = material_at(x, scene.refl, scene.prior, sdf_E, val(sdf_S), store);
        }

        Vec3T<T> radiance = shade(x, ray.origin, n, m.c, m.s, m.rho, light, store, tape, view_index);

        T sigma = sdf_to_density(sdf, alpha, beta);
        T absorb = exp(-sigma * delta);
        T weight = transmittance * (1.0 - absorb);
        transmittance = transmittance * absorb;

        px.rgb = px.rgb + radiance * weight;
        px.opacity = px.opacity + weight;
        if (in_E)
            px.opacity_E = px.opacity_E + weight;
        else
            px.opacity_S = px.opacity_S + weight;
        px.expected_depth = px.expected_depth + weight * t;
        px.spec_albedo = px.spec_albedo + weight * m.s;

        if constexpr (std::is_same_v<T, Ad>) {
            if (aux) {
                aux->grad_norms.push_back(in_E ? Ad(1.0) : grad_norm);
                if (j % size_t(aux->smooth_stride) == 0) {
                    Vec3 u = rng.unit_vector();  // per-ray stream keeps worker counts irrelevant
                    Vec3 x_eps = x + u * aux->smooth_eps;
                    double eps_sdf_E = sphere_sdf(x_eps, scene.eyes);
                    GridField::EvalAd e2 = scene.sdf.eval_ad(*tape, store, x_eps);
                    Vec3T<Ad> n2;
                    if (eps_sdf_E <= e2.value.v) {
                        Vec3 sn2 = sphere_normal(x_eps, scene.eyes);
                        n2 = Vec3T<Ad>(Ad(sn2.x), Ad(sn2.y), Ad(sn2.z));
                    } else {
                        n2 = normalized_safe(e2.grad);
                    }
                    aux->normal_dots.push_back(dot(n, n2));
                }
            }
        }
    }
    return px;
}

}  // namespace

PixelRender march_ray(const Ray& ray, const Scene& scene, const CombinedLight& light, const ParamStore& store,
                      const RenderConfig& config, std::optional<int> view_index, uint64_t ray_key) {
    return march_ray_impl<double>(nullptr, ray, scene, light, store, config, config.density_alpha,
                                  config.density_beta, view_index, ray_key, nullptr);
}

PixelRenderT<Ad> march_ray_ad(Tape& tape, const Ray& ray, const Scene& scene, const CombinedLight& light,
                              const ParamStore& store, const RenderConfig& config, Ad beta,
                              std::optional<int> view_index, uint64_t ray_key, TrainAux* aux) {
    Ad alpha = 1.0 / beta;
    return march_ray_impl<Ad>(&tape, ray, scene, light, store, config, alpha, beta, view_index, ray_key, aux);
}

std::vector<std::pair<double, double>> subpixel_pattern(int spp) {
    int side = int(std::lround(std::sqrt(double(spp))));
    if (side * side != spp || spp < 1) throw ConfigError("spp must be a positive square number");
    std::vector<std::pair<double, double>> offsets;
    offsets.reserve(size_t(spp));
    for (int sy = 0; sy < side; ++sy)
        for (int sx = 0; sx < side; ++sx) offsets.emplace_back((sx + 0.5) / side, (sy + 0.5) / side);
    return offsets;
}

RenderedImage render_image(const Camera& camera, const Scene& scene, const CombinedLight& light,
                           const ParamStore& store, const RenderConfig& config, std::optional<int> view_index,
                           int spp, int workers) {
    config.validate();
    RenderedImage out;
    out.rgb = Image(camera.width, camera.height, 3);
    out.opacity = Image(camera.width, camera.height, 1);
    out.opacity_E = Image(camera.width, camera.height, 1);
    out.opacity_S = Image(camera.width, camera.height, 1);
    out.depth = Image(camera.width, camera.height, 1);

    auto offsets = subpixel_pattern(spp);

    auto render_rows = [&](int y_begin, int y_end) {
        for (int y = y_begin; y < y_end; ++y)
            for (int x = 0; x < camera.width; ++x) {
                Vec3 rgb{0, 0, 0};
                double op = 0, op_e = 0, op_s = 0, depth = 0;
                for (int s = 0; s < spp; ++s) {
                    Ray ray{camera.center, camera.ray_direction(x, y, offsets[size_t(s)].first, offsets[size_t(s)].second)};
                    uint64_t key = ray_key_for(view_index, x, y, camera.width, s);
                    PixelRender px = march_ray(ray, scene, light, store, config, view_index, key);
                    rgb = rgb + px.rgb;
                    op += px.opacity;
                    op_e += px.opacity_E;
                    op_s += px.opacity_S;
                    depth += px.expected_depth;
                }
                double inv = 1.0 / spp;
                out.rgb.set_rgb(x, y, rgb * inv);
                out.opacity.at(x, y, 0) = float(op * inv);
                out.opacity_E.at(x, y, 0) = float(op_e * inv);
                out.opacity_S.at(x, y, 0) = float(op_s * inv);
                out.depth.at(x, y, 0) = float(depth * inv);
            }
    };

    workers = std::max(1, workers);
    if (workers == 1) {
        render_rows(0, camera.height);
    } else {
        // Each pixel is written by exactly one worker, so the image is
        // independent of scheduling.
        std::vector<std::thread> pool;
        int rows_per = (camera.height + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            int y0 = w * rows_per;
            int y1 = std::min(camera.height, y0 + rows_per);
            if (y0 >= y1) break;
            pool.emplace_back(render_rows, y0, y1);
        }
        for (auto& t : pool) t.join();
    }
    return out;
}

std::optional<SurfaceHit> surface_trace(const Vec3& origin, const Vec3& direction, const Scene& scene,
                                        const ParamStore& store, double eps, double far) {
    Ray ray{origin, direction};
    double t0, t1;
    if (!intersect_unit_cube(ray, t0, t1)) return std::nullopt;
    t1 = std::min(t1, far);
    if (t1 <= t0) return std::nullopt;

    auto sdf = [&](const Vec3& p) { return union_sdf(p, scene.sdf, scene.eyes, store).sdf; };
    std::optional<double> t_hit = trace_sdf_root(sdf, ray, t0 + 1e-6, t1, eps);
    if (!t_hit) return std::nullopt;

    SurfaceHit hit;
    hit.t = *t_hit;
    hit.x = origin + direction * hit.t;
    UnionSdf u = union_sdf(hit.x, scene.sdf, scene.eyes, store);
    hit.region = u.sdf_E <= u.sdf_S ? Region::E : Region::S;
    hit.n = normal(hit.x, scene.sdf, scene.eyes, store);
    return hit;
}

}  // namespace flashscan
