#include "flashscan/relight.hpp"

namespace flashscan {

namespace {

struct SurfacePixel {
    bool hit = false;
    Vec3 albedo;
    Vec3 normal;
    Vec3 x;
};

SurfacePixel trace_pixel(const FitSession& session, const Ray& ray) {
    SurfacePixel px;
    std::optional<SurfaceHit> hit = surface_trace(ray.origin, ray.direction, session.scene, session.store);
    if (!hit) return px;
    px.hit = true;
    px.x = hit->x;
    px.normal = hit->n;
    Material<double> m = session.scene.refl.material(session.store, hit->x);
    px.albedo = m.c;
    return px;
}

}  // namespace

ShBasisRenders render_sh_basis(const FitSession& session, const Camera& camera, int spp, int workers) {
    (void)workers;
    ShBasisRenders out;
    out.width = camera.width;
    out.height = camera.height;
    for (DImage& img : out.basis) img = DImage(camera.width, camera.height, 3);
    out.flash_only = DImage(camera.width, camera.height, 3);

    auto offsets = subpixel_pattern(spp);
    double inv = 1.0 / spp;

    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) {
            std::array<Vec3, 9> acc{};
            Vec3 flash_acc{0, 0, 0};
            for (auto [ox, oy] : offsets) {
                Ray ray{camera.center, camera.ray_direction(x, y, ox, oy)};
                SurfacePixel px = trace_pixel(session, ray);
                if (!px.hit) continue;
                std::array<double, 9> sh = sh_basis(px.normal);
                for (int j = 0; j < 9; ++j) acc[size_t(j)] = acc[size_t(j)] + px.albedo * max0(sh[size_t(j)]);

                UnionSdf u = union_sdf(px.x, session.scene.sdf, session.scene.eyes, session.store);
                Material<double> m =
                    material_at(px.x, session.scene.refl, session.scene.prior, u.sdf_E, u.sdf_S, session.store);
                flash_acc = flash_acc + flash_shading<double>(px.x, ray.origin, px.normal, m.c, m.s, m.rho,
                                                              session.light, session.store, nullptr);
            }
            for (int j = 0; j < 9; ++j) out.basis[size_t(j)].set_rgb(x, y, acc[size_t(j)] * inv);
            out.flash_only.set_rgb(x, y, flash_acc * inv);
        }
    return out;
}

DImage render_clamped_ambient(const FitSession& session, const Camera& camera,
                              const std::array<std::array<double, 9>, 3>& coeffs, int spp) {
    DImage out(camera.width, camera.height, 3);
    auto offsets = subpixel_pattern(spp);
    double inv = 1.0 / spp;
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) {
            Vec3 acc{0, 0, 0};
            for (auto [ox, oy] : offsets) {
                Ray ray{camera.center, camera.ray_direction(x, y, ox, oy)};
                SurfacePixel px = trace_pixel(session, ray);
                if (!px.hit) continue;
                std::array<double, 9> sh = sh_basis(px.normal);
                for (int ch = 0; ch < 3; ++ch) {
                    double shading = 0;
                    for (int j = 0; j < 9; ++j) shading += coeffs[size_t(ch)][size_t(j)] * max0(sh[size_t(j)]);
                    acc[ch] += px.albedo[ch] * shading;
                }
            }
            out.set_rgb(x, y, acc * inv);
        }
    return out;
}

void jacobi_eigen_sym9(const std::array<std::array<double, 9>, 9>& a_in, std::array<double, 9>& eigenvalues,
                       std::array<std::array<double, 9>, 9>& eigenvectors) {
    auto a = a_in;
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) eigenvectors[size_t(i)][size_t(j)] = i == j ? 1.0 : 0.0;

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0;
        for (int p = 0; p < 9; ++p)
            for (int q = p + 1; q < 9; ++q) off += a[size_t(p)][size_t(q)] * a[size_t(p)][size_t(q)];
        if (off < 1e-24) break;
        for (int p = 0; p < 9; ++p)
            for (int q = p + 1; q < 9; ++q) {
                double apq = a[size_t(p)][size_t(q)];
                if (std::fabs(apq) < 1e-30) continue;
                double theta = (a[size_t(q)][size_t(q)] - a[size_t(p)][size_t(p)]) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < 9; ++i) {
                    double aip = a[size_t(i)][size_t(p)], aiq = a[size_t(i)][size_t(q)];
                    a[size_t(i)][size_t(p)] = c * aip - s * aiq;
                    a[size_t(i)][size_t(q)] = s * aip + c * aiq;
                }
                for (int i = 0; i < 9; ++i) {
                    double api = a[size_t(p)][size_t(i)], aqi = a[size_t(q)][size_t(i)];
                    a[size_t(p)][size_t(i)] = c * api - s * aqi;
                    a[size_t(q)][size_t(i)] = s * api + c * aqi;
                }
                for (int i = 0; i < 9; ++i) {
                    double vip = eigenvectors[size_t(i)][size_t(p)], viq = eigenvectors[size_t(i)][size_t(q)];
                    eigenvectors[size_t(i)][size_t(p)] = c * vip - s * viq;
                    eigenvectors[size_t(i)][size_t(q)] = s * vip + c * viq;
                }
            }
    }
    for (int i = 0; i < 9; ++i) eigenvalues[size_t(i)] = a[size_t(i)][size_t(i)];
}

ShSolve solve_sh_weights(const ShBasisRenders& basis, const DImage& target, const std::vector<uint8_t>& mask) {
    if (target.width != basis.width || target.height != basis.height)
        throw InvariantError("solve_sh_weights: target size disagrees with basis renders");
    if (!mask.empty() && mask.size() != size_t(target.width) * size_t(target.height))
        throw InvariantError("solve_sh_weights: mask size mismatch");

    ShSolve out;
    double residual_sq = 0;
    size_t residual_n = 0;

    for (int ch = 0; ch < 3; ++ch) {
        // Normal equations over masked pixels.
        std::array<std::array<double, 9>, 9> ata{};
        std::array<double, 9> atb{};
        for (int y = 0; y < target.height; ++y)
            for (int x = 0; x < target.width; ++x) {
                if (!mask.empty() && !mask[size_t(y) * size_t(target.width) + size_t(x)]) continue;
                double b[9];
                for (int j = 0; j < 9; ++j) b[j] = basis.basis[size_t(j)].at(x, y, ch);
                double t = target.at(x, y, ch);
                for (int i = 0; i < 9; ++i) {
                    atb[size_t(i)] += b[i] * t;
                    for (int j = i; j < 9; ++j) ata[size_t(i)][size_t(j)] += b[i] * b[j];
                }
            }
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < i; ++j) ata[size_t(i)][size_t(j)] = ata[size_t(j)][size_t(i)];

        // Pseudo-inverse via the eigen-decomposition; small eigenvalues are
        // dropped, which yields the minimum-norm solution.
        std::array<double, 9> eval;
        std::array<std::array<double, 9>, 9> evec;
        jacobi_eigen_sym9(ata, eval, evec);
        double max_eval = 0;
        for (double e : eval) max_eval = std::max(max_eval, std::fabs(e));
        double tol = std::max(max_eval * 1e-12, 1e-300);

        std::array<double, 9> w{};
        for (int m = 0; m < 9; ++m) {
            if (std::fabs(eval[size_t(m)]) <= tol) {
                out.rank_deficient = true;
                continue;
            }
            double proj = 0;
            for (int i = 0; i < 9; ++i) proj += evec[size_t(i)][size_t(m)] * atb[size_t(i)];
            proj /= eval[size_t(m)];
            for (int i = 0; i < 9; ++i) w[size_t(i)] += evec[size_t(i)][size_t(m)] * proj;
        }
        out.weights[size_t(ch)] = w;

        for (int y = 0; y < target.height; ++y)
            for (int x = 0; x < target.width; ++x) {
                if (!mask.empty() && !mask[size_t(y) * size_t(target.width) + size_t(x)]) continue;
                double pred = 0;
                for (int j = 0; j < 9; ++j) pred += w[size_t(j)] * basis.basis[size_t(j)].at(x, y, ch);
                double r = pred - target.at(x, y, ch);
                residual_sq += r * r;
                ++residual_n;
            }
    }
    out.residual_rms = residual_n ? std::sqrt(residual_sq / double(residual_n)) : 0.0;
    return out;
}

DImage combine_basis(const ShBasisRenders& basis, const std::array<std::array<double, 9>, 3>& weights) {
    DImage out(basis.width, basis.height, 3);
    for (int y = 0; y < basis.height; ++y)
        for (int x = 0; x < basis.width; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                double v = 0;
                for (int j = 0; j < 9; ++j) v += weights[size_t(ch)][size_t(j)] * basis.basis[size_t(j)].at(x, y, ch);
                out.at(x, y, ch) = v;
            }
    return out;
}

DImage ratio_relight(const DImage& src_render, const DImage& tgt_render, const DImage& performance_frame, double floor) {
    if (floor <= 0.0) throw ConfigError("ratio_relight floor must be positive");
    if (src_render.width != tgt_render.width || src_render.height != tgt_render.height ||
        src_render.width != performance_frame.width || src_render.height != performance_frame.height ||
        src_render.channels != 3 || tgt_render.channels != 3 || performance_frame.channels != 3)
        throw InvariantError("ratio_relight: images must be aligned 3-channel");

    DImage out(src_render.width, src_render.height, 3);
    for (size_t i = 0; i < out.data.size(); ++i) {
        double ratio = tgt_render.data[i] / std::max(src_render.data[i], floor);
        out.data[i] = std::max(0.0, ratio * performance_frame.data[i]);
    }
    return out;
}

}  // namespace flashscan
