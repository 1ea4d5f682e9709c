#pragma once

#include "flashscan/rendering.hpp"

#include <span>

namespace flashscan {

enum class Stage { One, Two };

enum class RayLabel : uint8_t { Background = 0, Skin = 1, Hair = 2, Eye = 3 };

struct LossWeights {
    double w_l1 = 1.0;
    double w_mask = 1.0;
    double w_eikonal = 1.0;
    double w_eps_hair = 0.5;
    double w_eps_other = 0.02;
    double w_comp = 1.0;
    double w_ref = 0.5;
    Stage stage = Stage::One;

    static LossWeights stage_defaults(Stage stage) {
        LossWeights w;
        w.stage = stage;
        if (stage == Stage::Two) {
            w.w_l1 = 1.0;
            w.w_ref = 0.01;
            w.w_mask = w.w_eikonal = w.w_eps_hair = w.w_eps_other = w.w_comp = 0.0;
        }
        return w;
    }
};

// Learnable scalar compensating the scale ambiguity between rendered and pseudo
// specular albedo; parameterized as exp(log_k) so it stays positive.
struct ScaleCompensator {
    int group = -1;  // 1 raw value, k = exp(raw)

    static ScaleCompensator create(ParamStore& store) {
        ScaleCompensator s;
        s.group = store.add_group("log_k", 1);
        return s;
    }
    double k(const ParamStore& store) const { return std::exp(store.at(store.group(group).offset)); }
    template <class T>
    T k_as(const ParamStore& store, Tape* tape) const {
        return exp(param_as<T>(store, store.group(group).offset, tape));
    }
};

namespace detail_loss {
template <class T>
T mean_or_zero(const T& sum, size_t count) {
    return count == 0 ? T(0.0) : sum / double(count);
}
}  // namespace detail_loss

// Mean absolute difference over rays and channels; targets are linear RGB.
template <class T>
T photometric_l1(std::span<const Vec3T<T>> rendered, std::span<const Vec3> target) {
    if (rendered.size() != target.size()) throw InvariantError("photometric_l1: batch size mismatch");
    T sum(0.0);
    for (size_t i = 0; i < rendered.size(); ++i)
        for (int ch = 0; ch < 3; ++ch) sum = sum + abs(rendered[i][ch] - target[i][ch]);
    return detail_loss::mean_or_zero(sum, rendered.size() * 3);
}

template <class T>
T mask_loss(std::span<const T> rendered_opacity, std::span<const double> target_mask) {
    if (rendered_opacity.size() != target_mask.size()) throw InvariantError("mask_loss: batch size mismatch");
    T sum(0.0);
    for (size_t i = 0; i < rendered_opacity.size(); ++i) sum = sum + abs(rendered_opacity[i] - target_mask[i]);
    return detail_loss::mean_or_zero(sum, rendered_opacity.size());
}

// Mean of (||grad|| - 1)^2 over sampled union-SDF gradients.
template <class T>
T eikonal_loss(std::span<const T> grad_norms) {
    T sum(0.0);
    for (const T& g : grad_norms) sum = sum + sq(g - 1.0);
    return detail_loss::mean_or_zero(sum, grad_norms.size());
}

// Mean of (1 - n(x) . n(x+eps u)) given precomputed dots.
template <class T>
T normal_smooth_loss(std::span<const T> normal_dots) {
    T sum(0.0);
    for (const T& d : normal_dots) sum = sum + (1.0 - d);
    return detail_loss::mean_or_zero(sum, normal_dots.size());
}

// Mean L1 on the E opacities plus mean L1 on the S opacities.
template <class T>
T composition_loss(std::span<const T> opacity_E, std::span<const T> opacity_S, std::span<const double> mask_E,
                   std::span<const double> mask_S) {
    if (opacity_E.size() != mask_E.size() || opacity_S.size() != mask_S.size())
        throw InvariantError("composition_loss: batch size mismatch");
    T sum_e(0.0), sum_s(0.0);
    for (size_t i = 0; i < opacity_E.size(); ++i) sum_e = sum_e + abs(opacity_E[i] - mask_E[i]);
    for (size_t i = 0; i < opacity_S.size(); ++i) sum_s = sum_s + abs(opacity_S[i] - mask_S[i]);
    return detail_loss::mean_or_zero(sum_e, opacity_E.size()) + detail_loss::mean_or_zero(sum_s, opacity_S.size());
}

// Mean over non-eye rays of |k*s_hat - s_pseudo|; hair rays force the pseudo
// target to zero, eye rays are excluded entirely.
template <class T>
T reflectance_reg(std::span<const T> rendered_spec, std::span<const double> pseudo_spec,
                  std::span<const RayLabel> labels, const T& k) {
    if (rendered_spec.size() != pseudo_spec.size() || rendered_spec.size() != labels.size())
        throw InvariantError("reflectance_reg: batch size mismatch");
    T sum(0.0);
    size_t count = 0;
    for (size_t i = 0; i < rendered_spec.size(); ++i) {
        if (labels[i] == RayLabel::Eye) continue;
        double target = labels[i] == RayLabel::Hair ? 0.0 : pseudo_spec[i];
        sum = sum + abs(k * rendered_spec[i] - target);
        ++count;
    }
    return detail_loss::mean_or_zero(sum, count);
}

struct LossBreakdown {
    double l1 = 0, mask = 0, eikonal = 0, smooth_hair = 0, smooth_other = 0, comp = 0, ref = 0;
    double total = 0;
};

template <class T>
struct LossInputs {
    std::span<const Vec3T<T>> rendered;
    std::span<const Vec3> target;
    std::span<const T> opacity;
    std::span<const double> mask;
    std::span<const T> grad_norms;
    std::span<const T> normal_dots_hair;
    std::span<const T> normal_dots_other;
    std::span<const T> opacity_E;
    std::span<const T> opacity_S;
    std::span<const double> mask_E;
    std::span<const double> mask_S;
    std::span<const T> rendered_spec;
    std::span<const double> pseudo_spec;
    std::span<const RayLabel> labels;
    T k{1.0};
};

// Stage-weighted sum. Stage Two keeps only the photometric and reflectance
// terms no matter what is supplied.
template <class T>
T total_loss(const LossInputs<T>& in, const LossWeights& w, LossBreakdown* breakdown = nullptr) {
    T l1 = photometric_l1(in.rendered, in.target);
    T ref = reflectance_reg(in.rendered_spec, in.pseudo_spec, in.labels, in.k);
    T total = w.w_l1 * l1 + w.w_ref * ref;

    LossBreakdown bd;
    bd.l1 = val(l1);
    bd.ref = val(ref);

    if (w.stage == Stage::One) {
        T mask = mask_loss(in.opacity, in.mask);
        T eik = eikonal_loss(in.grad_norms);
        T smooth_hair = normal_smooth_loss(in.normal_dots_hair);
        T smooth_other = normal_smooth_loss(in.normal_dots_other);
        T comp = composition_loss(in.opacity_E, in.opacity_S, in.mask_E, in.mask_S);
        total = total + w.w_mask * mask + w.w_eikonal * eik + w.w_eps_hair * smooth_hair +
                w.w_eps_other * smooth_other + w.w_comp * comp;
        bd.mask = val(mask);
        bd.eikonal = val(eik);
        bd.smooth_hair = val(smooth_hair);
        bd.smooth_other = val(smooth_other);
        bd.comp = val(comp);
    }
    bd.total = val(total);
    if (breakdown) *breakdown = bd;
    return total;
}

// sRGB-ish gamma 2.2 linearization applied to photometric targets at load time.
inline double linearize_gamma22(double encoded) { return std::pow(clamp(encoded, 0.0, 1.0), 2.2); }

}  // namespace flashscan
