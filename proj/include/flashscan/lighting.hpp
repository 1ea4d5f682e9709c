#pragma once

#include "flashscan/brdf.hpp"

#include <optional>

namespace flashscan {

// Real spherical harmonics, bands 0-2, Condon-Shortley-free, ordered
// (0,0),(1,-1),(1,0),(1,1),(2,-2),(2,-1),(2,0),(2,1),(2,2).
template <class T>
std::array<T, 9> sh_basis(const Vec3T<T>& n) {
    const T& x = n.x;
    const T& y = n.y;
    const T& z = n.z;
    std::array<T, 9> sh;
    sh[0] = T(0.28209479177387814);
    sh[1] = 0.4886025119029199 * y;
    sh[2] = 0.4886025119029199 * z;
    sh[3] = 0.4886025119029199 * x;
    sh[4] = 1.0925484305920792 * x * y;
    sh[5] = 1.0925484305920792 * y * z;
    sh[6] = 0.31539156525252005 * (3.0 * z * z - 1.0);
    sh[7] = 1.0925484305920792 * x * z;
    sh[8] = 0.5462742152960396 * (x * x - y * y);
    return sh;
}

// Combined flashlight + ambient light. The flash is a point light co-located
// with the camera, intensity L = s_L * c_L; the ambient is a SoftPlus-wrapped
// band-2 SH per color channel, optionally gated by per-view sigmoid SH
// occlusion masks. s_L, K_lm and O^i_lm live in the parameter store.
struct CombinedLight {
    Vec3 c_l{1.0, 1.0, 1.0};
    bool ambient_enabled = true;
    bool occlusion_enabled = false;
    int n_views = 0;

    int sl_group = -1;   // 1 value
    int klm_group = -1;  // 9 coefficients x 3 channels, index j*3+ch
    int occ_group = -1;  // 9 coefficients per view when occlusion is enabled

    static CombinedLight create(ParamStore& store, double s_l = 8.0, int n_views = 0, bool occlusion = false);

    double s_l(const ParamStore& store) const { return store.at(store.group(sl_group).offset); }
    uint32_t sl_pid(const ParamStore& store) const { return store.group(sl_group).offset; }
    uint32_t klm_pid(const ParamStore& store, int j, int ch) const {
        return store.group(klm_group).offset + uint32_t(j * 3 + ch);
    }
    uint32_t occ_pid(const ParamStore& store, int view, int j) const {
        return store.group(occ_group).offset + uint32_t(view * 9 + j);
    }

    void check_view(std::optional<int> view) const {
        if (!occlusion_enabled) return;
        if (!view.has_value()) throw ConfigError("occlusion masks enabled but no view index supplied");
        if (*view < 0 || *view >= n_views)
            throw ConfigError("no occlusion coefficients for view " + std::to_string(*view));
    }
};

// c * O^i(n) * SoftPlus(sum K_lm Y_lm(n)) per channel; O^i = 1 when masks are off.
template <class T>
Vec3T<T> ambient_shading(const Vec3T<T>& c, const Vec3T<T>& n, const CombinedLight& light, const ParamStore& store,
                         Tape* tape, std::optional<int> view) {
    if (!light.ambient_enabled) return Vec3T<T>(T(0.0), T(0.0), T(0.0));
    light.check_view(view);
    std::array<T, 9> sh = sh_basis(n);

    T occ(1.0);
    if (light.occlusion_enabled) {
        T z(0.0);
        for (int j = 0; j < 9; ++j) z = z + param_as<T>(store, light.occ_pid(store, *view, j), tape) * sh[j];
        occ = sigmoid(z);
    }

    Vec3T<T> out;
    for (int ch = 0; ch < 3; ++ch) {
        T z(0.0);
        for (int j = 0; j < 9; ++j) z = z + param_as<T>(store, light.klm_pid(store, j, ch), tape) * sh[j];
        out[ch] = c[ch] * occ * softplus(z);
    }
    return out;
}

// (s_L c_L)/||x-o||^2 * f_pbr(v,v,...) * max(n.v, 0) with v toward the camera.
// The co-located setup makes the light direction equal the view direction.
template <class T>
Vec3T<T> flash_shading(const Vec3& x, const Vec3& o, const Vec3T<T>& n, const Vec3T<T>& c, const T& s, const T& rho,
                       const CombinedLight& light, const ParamStore& store, Tape* tape) {
    Vec3 to_cam = o - x;
    double dist2 = dot(to_cam, to_cam);
    if (dist2 < 1e-12) {
        diag().flash_singularities.fetch_add(1, std::memory_order_relaxed);
        return Vec3T<T>(T(0.0), T(0.0), T(0.0));
    }
    Vec3 v_plain = to_cam * (1.0 / std::sqrt(dist2));
    Vec3T<T> v(T(v_plain.x), T(v_plain.y), T(v_plain.z));

    T cos_term = max0(dot(n, v));
    if (val(cos_term) <= 0.0) return Vec3T<T>(T(0.0), T(0.0), T(0.0));

    Vec3T<T> f = eval_brdf(v, v, n, c, s, rho);
    T s_l = param_as<T>(store, light.sl_pid(store), tape);
    T falloff = s_l * (1.0 / dist2);
    Vec3T<T> out;
    for (int ch = 0; ch < 3; ++ch) out[ch] = falloff * light.c_l[ch] * f[ch] * cos_term;
    return out;
}

// l_o = l_flash + l_amb.
template <class T>
Vec3T<T> shade(const Vec3& x, const Vec3& o, const Vec3T<T>& n, const Vec3T<T>& c, const T& s, const T& rho,
               const CombinedLight& light, const ParamStore& store, Tape* tape, std::optional<int> view) {
    Vec3T<T> flash = flash_shading(x, o, n, c, s, rho, light, store, tape);
    Vec3T<T> amb = ambient_shading(c, n, light, store, tape, view);
    return flash + amb;
}

}  // namespace flashscan
