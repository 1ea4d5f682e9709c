#include "flashscan/dataset.hpp"

#include "flashscan/image_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace flashscan {

double smooth_min(double a, double b, double sharpness) {
    double k = 1.0 / sharpness;
    double h = clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
    return b + (a - b) * h - k * h * (1.0 - h);
}

namespace {

// Gradient-tracking fold of the polynomial smooth-min.
struct SdfGrad {
    double value;
    Vec3 grad;
};

SdfGrad smooth_min_fold(const SdfGrad& a, const SdfGrad& b, double sharpness) {
    double k = 1.0 / sharpness;
    double h = clamp(0.5 + 0.5 * (b.value - a.value) / k, 0.0, 1.0);
    double value = b.value + (a.value - b.value) * h - k * h * (1.0 - h);
    double dv_dh = (a.value - b.value) - k * (1.0 - 2.0 * h);
    bool interior = h > 0.0 && h < 1.0;
    double dh_da = interior ? -0.5 / k : 0.0;
    double dh_db = interior ? 0.5 / k : 0.0;
    double da = h + dv_dh * dh_da;
    double db = (1.0 - h) + dv_dh * dh_db;
    return {value, a.grad * da + b.grad * db};
}

const char* kMaskPaletteNames[4] = {"background", "skin", "hair", "eye"};
const uint8_t kMaskPalette[12] = {0, 0, 0, 224, 172, 140, 80, 48, 32, 255, 255, 255};

std::string frame_path(const std::string& dir, const char* sub, const std::string& id, const char* ext) {
    return dir + "/" + sub + "/" + id + ext;
}

}  // namespace

SyntheticScene::SyntheticScene() : light(CombinedLight::create(light_store, 8.0)) {}

SyntheticScene SyntheticScene::default_head() {
    SyntheticScene s;
    s.blobs = {
        {{0.0, 0.0, 0.0}, 0.50, RayLabel::Skin},     // cranium
        {{0.0, -0.22, 0.26}, 0.22, RayLabel::Skin},  // jaw
        {{0.0, 0.24, -0.12}, 0.36, RayLabel::Hair},  // hair cap
    };
    s.eyes.p_l = {-0.18, 0.08, 0.46};
    s.eyes.p_r = {0.18, 0.08, 0.46};
    s.eyes.r = 0.10;
    // Dim chromatic ambient, the nominal flash-dominated capture condition:
    // softplus shading level ~0.03 with a slight warm vertical tint.
    auto& store = s.light_store;
    store.at(s.light.klm_pid(store, 0, 0)) = -12.2;
    store.at(s.light.klm_pid(store, 0, 1)) = -12.5;
    store.at(s.light.klm_pid(store, 0, 2)) = -12.9;
    store.at(s.light.klm_pid(store, 2, 0)) = 0.25;
    store.at(s.light.klm_pid(store, 2, 1)) = 0.20;
    store.at(s.light.klm_pid(store, 2, 2)) = 0.15;
    return s;
}

double SyntheticScene::sdf_S(const Vec3& x) const {
    double acc = std::numeric_limits<double>::infinity();
    for (const Blob& b : blobs) {
        double d = norm(x - b.center) - b.radius;
        acc = std::isinf(acc) ? d : smooth_min(acc, d, smooth_sharpness);
    }
    return acc;
}

Vec3 SyntheticScene::grad_S(const Vec3& x) const {
    SdfGrad acc{std::numeric_limits<double>::infinity(), {0, 0, 0}};
    for (const Blob& b : blobs) {
        Vec3 to = x - b.center;
        SdfGrad d{norm(to) - b.radius, normalized(to)};
        acc = std::isinf(acc.value) ? d : smooth_min_fold(acc, d, smooth_sharpness);
    }
    return acc.grad;
}

SyntheticScene::PointInfo SyntheticScene::classify(const Vec3& x) const {
    PointInfo info;
    double e = sphere_sdf(x, eyes);
    double s = sdf_S(x);
    info.region = e <= s ? Region::E : Region::S;
    if (info.region == Region::E) {
        info.label = RayLabel::Eye;
        info.normal = sphere_normal(x, eyes);
        info.material = {eye_diffuse, prior.s_E, prior.rho_E};
        return info;
    }
    info.normal = normalized(grad_S(x));
    const Blob* nearest = &blobs.front();
    double best = std::numeric_limits<double>::infinity();
    for (const Blob& b : blobs) {
        double d = norm(x - b.center) - b.radius;
        if (d < best) {
            best = d;
            nearest = &b;
        }
    }
    info.label = nearest->label;
    info.material = nearest->label == RayLabel::Hair ? hair_material : skin_material;
    return info;
}

std::optional<SurfaceHit> SyntheticScene::trace(const Ray& ray) const {
    double t0, t1;
    if (!intersect_unit_cube(ray, t0, t1)) return std::nullopt;
    auto f = [&](const Vec3& p) { return sdf(p); };
    std::optional<double> t = trace_sdf_root(f, ray, t0 + 1e-6, t1, 1e-6);
    if (!t) return std::nullopt;
    SurfaceHit hit;
    hit.t = *t;
    hit.x = ray.origin + ray.direction * *t;
    PointInfo info = classify(hit.x);
    hit.n = info.normal;
    hit.region = info.region;
    return hit;
}

Vec3 SyntheticScene::shade_ray(const Ray& ray, std::optional<int> view) const {
    std::optional<SurfaceHit> hit = trace(ray);
    if (!hit) return {0, 0, 0};
    PointInfo info = classify(hit->x);
    Vec3T<double> c{info.material.c.x, info.material.c.y, info.material.c.z};
    return shade<double>(hit->x, ray.origin, info.normal, c, info.material.s, info.material.rho, light, light_store,
                         nullptr, view);
}

CaptureDataset generate_synthetic(const SyntheticScene& scene, int n_views, int resolution, uint64_t seed, int spp,
                                  const OrbitConfig& orbit) {
    if (n_views < 4) throw ConfigError("generate_synthetic needs at least 4 views");
    CaptureDataset out;
    out.spp = spp;
    out.meta = {{"iso", "300"}, {"white_balance", "4900K"}, {"fps", "30"}, {"source", "synthetic"}};

    auto offsets = subpixel_pattern(spp);
    Rng rng(seed, 0x5eedd);

    for (int v = 0; v < n_views; ++v) {
        double azimuth = 2.0 * kPi * v / n_views;
        double radius = orbit.radius_base + orbit.radius_jitter * rng.uniform(-1.0, 1.0);
        double elevation = orbit.elevation_max * rng.uniform(-1.0, 1.0);
        Vec3 eye{radius * std::cos(elevation) * std::sin(azimuth), radius * std::sin(elevation),
                 radius * std::cos(elevation) * std::cos(azimuth)};
        Camera cam = Camera::look_at(eye, {0, 0, 0}, {0, 1, 0}, orbit.focal_per_pixel * resolution, resolution,
                                     resolution);

        Frame frame;
        std::ostringstream id;
        id << std::setw(4) << std::setfill('0') << v;
        frame.id = id.str();
        frame.camera = cam;
        frame.rgb = Image(resolution, resolution, 3);
        if (spp > 1) frame.subray_rgb = Image(resolution, resolution, 3 * spp);
        frame.pseudo_spec = Image(resolution, resolution, 1);
        frame.labels.assign(size_t(resolution) * size_t(resolution), uint8_t(RayLabel::Background));

        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x) {
                Vec3 rgb{0, 0, 0};
                for (int s = 0; s < spp; ++s) {
                    auto [ox, oy] = offsets[size_t(s)];
                    Ray ray{cam.center, cam.ray_direction(x, y, ox, oy)};
                    Vec3 c = scene.shade_ray(ray, v);
                    rgb = rgb + c;
                    if (spp > 1) {
                        size_t i = (size_t(y) * size_t(resolution) + size_t(x)) * size_t(3 * spp) + size_t(s) * 3;
                        frame.subray_rgb.data[i] = float(c.x);
                        frame.subray_rgb.data[i + 1] = float(c.y);
                        frame.subray_rgb.data[i + 2] = float(c.z);
                    }
                }
                frame.rgb.set_rgb(x, y, rgb * (1.0 / spp));

                // Labels and the pseudo specular target come from the center ray.
                Ray center{cam.center, cam.ray_direction(x, y)};
                std::optional<SurfaceHit> hit = scene.trace(center);
                if (hit) {
                    SyntheticScene::PointInfo info = scene.classify(hit->x);
                    frame.labels[size_t(y) * size_t(resolution) + size_t(x)] = uint8_t(info.label);
                    frame.pseudo_spec.at(x, y, 0) = float(info.material.s);
                }
            }
        out.frames.push_back(std::move(frame));
    }
    return out;
}

void save_dataset(const CaptureDataset& dataset, const std::string& dir) {
    if (dataset.frames.empty()) throw ConfigError("refusing to save an empty dataset");
    fs::create_directories(dir + "/frames");
    fs::create_directories(dir + "/masks");
    fs::create_directories(dir + "/spec");

    const Camera& c0 = dataset.frames.front().camera;
    json cams;
    cams["intrinsics"] = {{"fx", c0.fx}, {"fy", c0.fy}, {"cx", c0.cx}, {"cy", c0.cy},
                          {"width", c0.width}, {"height", c0.height}};
    cams["spp"] = dataset.spp;
    cams["meta"] = dataset.meta;
    cams["mask_labels"] = kMaskPaletteNames;
    cams["frames"] = json::array();

    for (const Frame& f : dataset.frames) {
        const Camera& c = f.camera;
        if (c.fx != c0.fx || c.fy != c0.fy || c.cx != c0.cx || c.cy != c0.cy || c.width != c0.width ||
            c.height != c0.height)
            throw InvariantError("all frames must share intrinsics (frame " + f.id + " differs)");
        json pose = json::array();
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) pose.push_back(c.rot(r, col));
            pose.push_back(c.center[r]);
        }
        cams["frames"].push_back({{"id", f.id}, {"pose", pose}});

        write_raw_image(frame_path(dir, "frames", f.id, ".raw"), f.rgb);
        write_png_srgb16(frame_path(dir, "frames", f.id, ".png"), f.rgb);
        if (f.has_subrays()) write_raw_image(frame_path(dir, "frames", f.id, ".sub.raw"), f.subray_rgb);

        std::vector<uint8_t> palette(kMaskPalette, kMaskPalette + 12);
        write_png_palette(frame_path(dir, "masks", f.id, ".png"), c.width, c.height, f.labels, palette);

        std::vector<uint8_t> spec(size_t(c.width) * size_t(c.height));
        for (size_t i = 0; i < spec.size(); ++i)
            spec[i] = uint8_t(std::lround(clamp(double(f.pseudo_spec.data[i]), 0.0, 1.0) * 255.0));
        write_png_gray8(frame_path(dir, "spec", f.id, ".png"), c.width, c.height, spec);
    }

    std::ofstream f(dir + "/cameras.json");
    if (!f) throw ConfigError("cannot write " + dir + "/cameras.json");
    f << cams.dump(2) << "\n";
}

CaptureDataset load_dataset(const std::string& dir) {
    std::ifstream cf(dir + "/cameras.json");
    if (!cf) throw ConfigError("missing cameras.json in " + dir);
    json cams;
    try {
        cf >> cams;
    } catch (const json::exception& e) {
        throw ConfigError("malformed cameras.json in " + dir + ": " + e.what());
    }

    CaptureDataset out;
    out.spp = cams.value("spp", 1);
    if (cams.contains("meta"))
        for (auto& [k, v] : cams["meta"].items()) out.meta[k] = v.get<std::string>();

    const json& intr = cams.at("intrinsics");
    for (const json& jf : cams.at("frames")) {
        Frame frame;
        frame.id = jf.at("id").get<std::string>();
        Camera& c = frame.camera;
        c.fx = intr.at("fx");
        c.fy = intr.at("fy");
        c.cx = intr.at("cx");
        c.cy = intr.at("cy");
        c.width = intr.at("width");
        c.height = intr.at("height");

        const json& pose = jf.at("pose");
        if (!pose.is_array() || pose.size() != 12)
            throw ConfigError("frame " + frame.id + ": pose must be a 3x4 row-major array of 12 numbers");
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) c.rot(r, col) = pose[size_t(r * 4 + col)];
            c.center[r] = pose[size_t(r * 4 + 3)];
        }

        std::string raw_path = frame_path(dir, "frames", frame.id, ".raw");
        std::string png_path = frame_path(dir, "frames", frame.id, ".png");
        if (file_exists(raw_path)) {
            frame.rgb = read_raw_image(raw_path);
            if (frame.rgb.width != c.width || frame.rgb.height != c.height || frame.rgb.channels != 3)
                throw ConfigError("frame " + frame.id + ": raw image size disagrees with intrinsics");
        } else if (file_exists(png_path)) {
            PngImage png = read_png(png_path);
            if (png.width != c.width || png.height != c.height || png.channels != 3)
                throw ConfigError("frame " + frame.id + ": PNG size disagrees with intrinsics");
            double scale = png.bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
            frame.rgb = Image(png.width, png.height, 3);
            for (size_t i = 0; i < frame.rgb.data.size(); ++i)
                frame.rgb.data[i] = float(linearize_gamma22(png.pixels[i] * scale));
        } else {
            throw ConfigError("frame " + frame.id + ": no image found (" + raw_path + " or .png)");
        }

        std::string sub_path = frame_path(dir, "frames", frame.id, ".sub.raw");
        if (file_exists(sub_path)) {
            frame.subray_rgb = read_raw_image(sub_path);
            if (frame.subray_rgb.width != c.width || frame.subray_rgb.height != c.height ||
                frame.subray_rgb.channels != 3 * out.spp)
                throw ConfigError("frame " + frame.id + ": subray image size disagrees with spp");
        }

        std::string mask_path = frame_path(dir, "masks", frame.id, ".png");
        if (!file_exists(mask_path)) throw ConfigError("frame " + frame.id + ": missing mask " + mask_path);
        PngImage mask = read_png(mask_path);
        if (mask.width != c.width || mask.height != c.height || mask.channels != 1)
            throw ConfigError("frame " + frame.id + ": mask size disagrees with intrinsics");
        frame.labels.resize(mask.pixels.size());
        for (size_t i = 0; i < mask.pixels.size(); ++i) {
            if (mask.pixels[i] > 3) throw ConfigError("frame " + frame.id + ": mask label out of range");
            frame.labels[i] = uint8_t(mask.pixels[i]);
        }

        std::string spec_path = frame_path(dir, "spec", frame.id, ".png");
        frame.pseudo_spec = Image(c.width, c.height, 1);
        if (file_exists(spec_path)) {
            PngImage spec = read_png(spec_path);
            if (spec.width != c.width || spec.height != c.height || spec.channels != 1)
                throw ConfigError("frame " + frame.id + ": pseudo-spec size disagrees with intrinsics");
            double scale = spec.bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
            for (size_t i = 0; i < spec.pixels.size(); ++i)
                frame.pseudo_spec.data[i] = float(spec.pixels[i] * scale);
        }
        out.frames.push_back(std::move(frame));
    }
    if (out.frames.empty()) throw ConfigError("dataset has no frames: " + dir);
    return out;
}

}  // namespace flashscan
