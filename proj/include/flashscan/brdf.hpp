#pragma once

#include "flashscan/geometry.hpp"

namespace flashscan {

inline constexpr double kRoughnessFloor = 0.04;

// Predefined eyeball reflectance, fixed before fitting.
struct EyePrior {
    double s_E = 0.25;
    double rho_E = 0.10;
};

template <class T>
struct Material {
    Vec3T<T> c;  // diffuse albedo, each channel in [0,1]
    T s;         // specular albedo (Fresnel reflectance at normal incidence) in [0,1]
    T rho;       // roughness in [kRoughnessFloor, 1]
};

// Grid-backed spatially varying reflectance with 5 raw channels per vertex.
// Raw values are unconstrained; activation squashes them into their ranges so
// gradients never vanish in the interior.
class ReflectanceField {
  public:
    ReflectanceField() = default;

    static ReflectanceField create(ParamStore& store, const std::vector<int>& resolutions,
                                   const std::string& group_name = "refl_grid") {
        ReflectanceField f;
        f.grid_ = GridField::create(store, resolutions, 5, group_name);
        return f;
    }

    template <class U>
    static Material<U> activate(const U* raw) {
        Material<U> m;
        m.c = {sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2])};
        m.s = sigmoid(raw[3]);
        m.rho = kRoughnessFloor + (1.0 - kRoughnessFloor) * sigmoid(raw[4]);
        return m;
    }

    Material<double> material(const ParamStore& store, const Vec3& x) const {
        double raw[5];
        grid_.values(store, x, raw);
        return activate(raw);
    }

    Material<Ad> material_ad(Tape& tape, const ParamStore& store, const Vec3& x) const {
        Ad raw[5];
        grid_.values_ad(tape, store, x, raw);
        return activate(raw);
    }

    const GridField& grid() const { return grid_; }
    int group() const { return grid_.group(); }

  private:
    GridField grid_;
};

// Material of the union region: diffuse albedo comes from the field everywhere;
// specular albedo and roughness switch to the eye prior inside region E.
inline Material<double> material_at(const Vec3& x, const ReflectanceField& refl, const EyePrior& prior,
                                    double sdf_E, double sdf_S, const ParamStore& store) {
    Material<double> m = refl.material(store, x);
    m.s = select(prior.s_E, m.s, sdf_E, sdf_S);
    m.rho = select(prior.rho_E, m.rho, sdf_E, sdf_S);
    return m;
}

inline Material<Ad> material_at_ad(Tape& tape, const Vec3& x, const ReflectanceField& refl, const EyePrior& prior,
                                   double sdf_E, double sdf_S, const ParamStore& store) {
    Material<Ad> m = refl.material_ad(tape, store, x);
    m.s = select(Ad(prior.s_E), m.s, sdf_E, sdf_S);
    m.rho = select(Ad(prior.rho_E), m.rho, sdf_E, sdf_S);
    return m;
}

inline double pow_fresnel(double x) {
    double x2 = x * x;
    return x2 * x2 * x;
}
inline Ad pow_fresnel(const Ad& x) {
    Ad x2 = x * x;
    return x2 * x2 * x;
}

// Lambertian diffuse plus a GGX/Smith/Schlick specular lobe with s as F0 and the
// Disney alpha = rho^2 remapping. Returns reflectance per steradian (no cosine);
// zero when either direction is below the horizon.
template <class T>
Vec3T<T> eval_brdf(const Vec3T<T>& l, const Vec3T<T>& v, const Vec3T<T>& n, const Vec3T<T>& c, const T& s,
                   const T& rho) {
    T n_dot_l = dot(n, l);
    T n_dot_v = dot(n, v);
    if (val(n_dot_l) <= 0.0 || val(n_dot_v) <= 0.0) return Vec3T<T>(T(0.0), T(0.0), T(0.0));

    Vec3T<T> h = normalized_safe(l + v);
    T n_dot_h = max0(dot(n, h));
    // h.l written as h.(l+v)/2 so reciprocity holds bit-exactly.
    T h_dot_l = max0(0.5 * dot(h, l + v));

    T alpha = rho * rho;
    T a2 = alpha * alpha;

    T denom = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    T d_ggx = a2 / (kPi * denom * denom);

    auto g1 = [&](const T& n_dot_w) { return 2.0 * n_dot_w / (n_dot_w + sqrt(a2 + (1.0 - a2) * n_dot_w * n_dot_w)); };
    T g_smith = g1(n_dot_l) * g1(n_dot_v);

    T fresnel = s + (1.0 - s) * pow_fresnel(1.0 - h_dot_l);

    T spec = d_ggx * g_smith * fresnel / (4.0 * n_dot_l * n_dot_v);
    Vec3T<T> out = c * (1.0 / kPi);
    out.x = max0(out.x + spec);
    out.y = max0(out.y + spec);
    out.z = max0(out.z + spec);
    return out;
}

}  // namespace flashscan
