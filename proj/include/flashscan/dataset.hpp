#pragma once

#include "flashscan/losses.hpp"
#include "flashscan/serialize.hpp"

#include <map>

namespace flashscan {

struct Frame {
    std::string id;
    Image rgb;                    // linear float RGB (subpixel mean when spp > 1)
    Image subray_rgb;             // optional: 3*spp channels, one RGB triple per subray
    std::vector<uint8_t> labels;  // RayLabel per pixel
    Image pseudo_spec;            // 1-channel pseudo specular albedo
    Camera camera;

    bool has_subrays() const { return subray_rgb.channels > 0; }
    Vec3 subray(int x, int y, int s) const {
        size_t i = (size_t(y) * size_t(subray_rgb.width) + size_t(x)) * size_t(subray_rgb.channels) + size_t(s) * 3;
        return {subray_rgb.data[i], subray_rgb.data[i + 1], subray_rgb.data[i + 2]};
    }
};

struct CaptureDataset {
    std::vector<Frame> frames;
    int spp = 1;  // subpixel pattern the images were rendered with
    std::map<std::string, std::string> meta;

    RayLabel label_at(size_t frame, int x, int y) const {
        const Frame& f = frames[frame];
        return RayLabel(f.labels[size_t(y) * size_t(f.camera.width) + size_t(x)]);
    }
};

// Analytic ground-truth scene used as the synthesis oracle: a head blob built
// from a polynomial smooth-min of spheres, two protruding eyeballs, piecewise
// constant materials per region, and a known combined light.
struct SyntheticScene {
    struct Blob {
        Vec3 center;
        double radius;
        RayLabel label;  // Skin or Hair
    };

    std::vector<Blob> blobs;
    double smooth_sharpness = 8.0;  // polynomial smooth-min blend width = 1/sharpness
    SphereEyeballs eyes;
    EyePrior prior;

    Material<double> skin_material{{0.72, 0.52, 0.44}, 0.28, 0.45};
    Material<double> hair_material{{0.13, 0.10, 0.08}, 0.0, 0.60};
    Vec3 eye_diffuse{0.75, 0.72, 0.65};

    // Ground-truth light, backed by its own parameter store.
    ParamStore light_store;
    CombinedLight light;

    SyntheticScene();
    static SyntheticScene default_head();

    double sdf_S(const Vec3& x) const;
    Vec3 grad_S(const Vec3& x) const;
    double sdf(const Vec3& x) const { return vmin(sphere_sdf(x, eyes), sdf_S(x)); }

    struct PointInfo {
        Region region;
        RayLabel label;
        Vec3 normal;
        Material<double> material;
    };
    PointInfo classify(const Vec3& x) const;

    // Surface render of one ray; returns black on a miss.
    Vec3 shade_ray(const Ray& ray, std::optional<int> view) const;
    std::optional<SurfaceHit> trace(const Ray& ray) const;
};

struct OrbitConfig {
    double radius_base = 2.4;
    double radius_jitter = 0.25;
    double elevation_max = 0.6;  // radians; high arcs keep most normals observed
    double focal_per_pixel = 1.1;
};

CaptureDataset generate_synthetic(const SyntheticScene& scene, int n_views, int resolution, uint64_t seed,
                                  int spp = 1, const OrbitConfig& orbit = {});

// Canonical layout: cameras.json, frames/NNNN.raw (+ 16-bit PNG previews),
// masks/NNNN.png palette-indexed, spec/NNNN.png 8-bit linear.
void save_dataset(const CaptureDataset& dataset, const std::string& dir);
CaptureDataset load_dataset(const std::string& dir);

// Polynomial smooth minimum with blend width 1/sharpness; exact min when the
// operands are further apart than the width.
double smooth_min(double a, double b, double sharpness);

}  // namespace flashscan
