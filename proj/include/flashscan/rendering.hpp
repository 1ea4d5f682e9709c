#pragma once

#include "flashscan/lighting.hpp"

namespace flashscan {

// The hybrid scene: grid SDF for region S, two analytic spheres for region E,
// one reflectance field over both, and the fixed eye reflectance prior.
struct Scene {
    SdfGridField sdf;
    ReflectanceField refl;
    SphereEyeballs eyes;
    EyePrior prior;
};

struct RenderConfig {
    int samples_per_ray = 64;
    double density_alpha = 20.0;  // fit keeps alpha = 1/beta
    double density_beta = 0.05;
    double near = 0.0;
    double far = std::numeric_limits<double>::infinity();
    uint64_t rng_seed = 0;

    void validate() const {
        if (samples_per_ray < 8) throw ConfigError("samples_per_ray must be >= 8");
        if (density_beta <= 1e-4) throw ConfigError("density_beta must exceed 1e-4");
        if (density_alpha <= 0.0) throw ConfigError("density_alpha must be positive");
    }
};

// Laplace-CDF density: sigma = alpha * Psi_beta(-sdf). Monotone nonincreasing
// in sdf, alpha/2 at the surface, alpha deep inside, 0 far outside.
template <class T>
T sdf_to_density(const T& sdf, const T& alpha, const T& beta) {
    if (val(sdf) <= 0.0) return alpha * (1.0 - 0.5 * exp(sdf / beta));
    return alpha * 0.5 * exp(-sdf / beta);
}

inline double sdf_to_density(double sdf, double alpha, double beta) {
    return sdf_to_density<double>(sdf, alpha, beta);
}

template <class T>
struct PixelRenderT {
    Vec3T<T> rgb;
    T opacity{0.0};
    T opacity_E{0.0};
    T opacity_S{0.0};
    T expected_depth{0.0};
    T spec_albedo{0.0};  // volume-composited specular albedo, consumed by the reflectance prior loss
};

using PixelRender = PixelRenderT<double>;

// Per-sample training byproducts: SDF gradient norms feed the eikonal term and
// normal pairs feed the smoothness term. Collected on a fixed stride so the
// loss stays finite-difference consistent.
struct TrainAux {
    std::vector<Ad> grad_norms;   // ||grad union_sdf|| at every sample
    std::vector<Ad> normal_dots;  // n(x) . n(x + eps u) at strided samples
    int smooth_stride = 4;
    double smooth_eps = 0.01;
};

PixelRender march_ray(const Ray& ray, const Scene& scene, const CombinedLight& light, const ParamStore& store,
                      const RenderConfig& config, std::optional<int> view_index, uint64_t ray_key);

PixelRenderT<Ad> march_ray_ad(Tape& tape, const Ray& ray, const Scene& scene, const CombinedLight& light,
                              const ParamStore& store, const RenderConfig& config, Ad beta,
                              std::optional<int> view_index, uint64_t ray_key, TrainAux* aux);

struct RenderedImage {
    Image rgb;       // linear
    Image opacity;   // 1 channel
    Image opacity_E;
    Image opacity_S;
    Image depth;
};

// Volume rendering over the full pixel grid, optionally averaging a fixed
// subpixel pattern (spp must be a square number). Deterministic for fixed seed.
RenderedImage render_image(const Camera& camera, const Scene& scene, const CombinedLight& light,
                           const ParamStore& store, const RenderConfig& config, std::optional<int> view_index,
                           int spp = 1, int workers = 1);

struct SurfaceHit {
    Vec3 x;
    double t;
    Vec3 n;
    Region region;
};

// First zero crossing of the union SDF along the ray, found by conservative
// sphere tracing plus bisection to |sdf| < eps. Returns nothing if the ray
// leaves the cube without crossing.
std::optional<SurfaceHit> surface_trace(const Vec3& origin, const Vec3& direction, const Scene& scene,
                                        const ParamStore& store, double eps = 1e-4,
                                        double far = std::numeric_limits<double>::infinity());

// Generic SDF root finder shared by scene tracing and the synthetic oracle.
// Sphere tracing with a conservative fraction and a step cap: fitted grids are
// not exact distance fields, so a full-length step can punch through thin
// features.
template <class F>
std::optional<double> trace_sdf_root(F&& sdf, const Ray& ray, double t0, double t1, double eps) {
    const double min_step = 2e-3;
    const double max_step = 0.04;
    double t = t0;
    double f_prev = sdf(ray.origin + ray.direction * t);
    if (f_prev <= 0.0) return t;  // started inside
    while (t < t1) {
        double step = clamp(f_prev * 0.7, min_step, max_step);
        double t_next = std::min(t + step, t1);
        double f_next = sdf(ray.origin + ray.direction * t_next);
        if (f_next <= 0.0) {
            double lo = t, hi = t_next;
            for (int i = 0; i < 60; ++i) {
                double mid = 0.5 * (lo + hi);
                double f_mid = sdf(ray.origin + ray.direction * mid);
                if (std::fabs(f_mid) < eps) return mid;
                if (f_mid > 0.0)
                    lo = mid;
                else
                    hi = mid;
            }
            return 0.5 * (lo + hi);
        }
        if (t_next >= t1) break;
        t = t_next;
        f_prev = f_next;
    }
    return std::nullopt;
}

// Deterministic subpixel offsets for spp-sample antialiasing (spp in {1,4,9,...}).
std::vector<std::pair<double, double>> subpixel_pattern(int spp);

// Shared ray-key scheme so training rays and rendered pixels draw identical
// stratified samples.
inline uint64_t ray_key_for(std::optional<int> view, int x, int y, int width, int subray) {
    uint64_t view_key = view ? uint64_t(*view) + 1 : 0;
    return ((view_key * 0x100000000ULL + uint64_t(y) * uint64_t(width) + uint64_t(x)) << 4) | uint64_t(subray);
}

}  // namespace flashscan
