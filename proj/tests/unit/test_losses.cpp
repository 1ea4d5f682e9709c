#include "oracles.hpp"

#include <doctest.h>

using namespace flashscan;

TEST_SUITE_BEGIN("losses");

TEST_CASE("photometric l1: trivial and derived cases") {
    std::vector<Vec3> a = {{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}};
    CHECK(photometric_l1<double>(a, a) == 0.0);

    std::vector<Vec3> zeros = {{0, 0, 0}, {0, 0, 0}};
    std::vector<Vec3> ones = {{1, 1, 1}, {1, 1, 1}};
    CHECK(photometric_l1<double>(zeros, ones) == doctest::Approx(1.0));

    // random pair equals hand-computed mean
    Rng rng(3, 3);
    std::vector<Vec3> p, q;
    double sum = 0;
    for (int i = 0; i < 10; ++i) {
        Vec3 pi{rng.uniform(), rng.uniform(), rng.uniform()};
        Vec3 qi{rng.uniform(), rng.uniform(), rng.uniform()};
        p.push_back(pi);
        q.push_back(qi);
        sum += std::fabs(pi.x - qi.x) + std::fabs(pi.y - qi.y) + std::fabs(pi.z - qi.z);
    }
    CHECK(photometric_l1<double>(p, q) == doctest::Approx(sum / 30.0));

    std::vector<Vec3> wrong = {{0, 0, 0}};
    CHECK_THROWS_AS(photometric_l1<double>(p, wrong), InvariantError);
}

TEST_CASE("gamma 2.2 linearization reference value") {
    CHECK(linearize_gamma22(0.5) == doctest::Approx(0.21763).epsilon(1e-4));
}

TEST_CASE("mask loss trivial and derived cases") {
    std::vector<double> op = {1.0, 0.0};
    std::vector<double> m = {1.0, 0.0};
    CHECK(mask_loss<double>(op, m) == 0.0);
    std::vector<double> half = {0.5};
    std::vector<double> one = {1.0};
    CHECK(mask_loss<double>(half, one) == doctest::Approx(0.5));

    Rng rng(6, 1);
    std::vector<double> a, b;
    double sum = 0;
    for (int i = 0; i < 13; ++i) {
        a.push_back(rng.uniform());
        b.push_back(rng.below(2));
        sum += std::fabs(a.back() - b.back());
    }
    CHECK(mask_loss<double>(a, b) == doctest::Approx(sum / 13.0));
}

TEST_CASE("eikonal loss cases") {
    std::vector<double> unit = {1.0, 1.0, 1.0};
    CHECK(eikonal_loss<double>(unit) == 0.0);
    std::vector<double> zero = {0.0};
    CHECK(eikonal_loss<double>(zero) == doctest::Approx(1.0));
    std::vector<double> two = {2.0};
    CHECK(eikonal_loss<double>(two) == doctest::Approx(1.0));
}

TEST_CASE("normal smoothness cases") {
    std::vector<double> aligned = {1.0, 1.0};
    CHECK(normal_smooth_loss<double>(aligned) == 0.0);
    std::vector<double> antipodal = {-1.0};
    CHECK(normal_smooth_loss<double>(antipodal) == doctest::Approx(2.0));
}

TEST_CASE("normal smoothness on a sphere matches the analytic chord angle") {
    // For an exact sphere of radius r, n(x) . n(x + eps u) averaged over u has
    // a closed quadrature value; compare against a dense numeric oracle.
    const double r = 0.6, eps = 0.01;
    Vec3 x0 = Vec3{0, 0, r};
    auto normal_at = [&](const Vec3& p) { return normalized(p); };
    Rng rng(123, 9);
    double mc = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        Vec3 u = rng.unit_vector();
        mc += 1.0 - dot(normal_at(x0), normal_at(x0 + u * eps));
    }
    mc /= n;
    // independent quadrature over the deflection angle
    double quad = 0;
    const int m = 4000;
    for (int i = 0; i < m; ++i) {
        double z = -1.0 + 2.0 * (i + 0.5) / m;  // uniform in cos(angle of u vs n)
        Vec3 u{std::sqrt(std::max(0.0, 1 - z * z)), 0, z};
        quad += 1.0 - dot(normal_at(x0), normalized(x0 + u * eps));
    }
    quad /= m;
    CHECK(std::fabs(mc - quad) / quad < 0.05);
}

TEST_CASE("composition loss cases") {
    std::vector<double> oe = {1.0, 0.0}, os = {0.0, 1.0};
    std::vector<double> me = {1.0, 0.0}, ms = {0.0, 1.0};
    CHECK(composition_loss<double>(oe, os, me, ms) == 0.0);

    // E predicted where S labeled contributes to both terms.
    std::vector<double> oe2 = {1.0}, os2 = {0.0};
    std::vector<double> me2 = {0.0}, ms2 = {1.0};
    CHECK(composition_loss<double>(oe2, os2, me2, ms2) == doctest::Approx(2.0));

    Rng rng(7, 2);
    std::vector<double> a, b, c, d;
    double se = 0, ss = 0;
    for (int i = 0; i < 9; ++i) {
        a.push_back(rng.uniform());
        b.push_back(rng.uniform());
        c.push_back(rng.below(2));
        d.push_back(rng.below(2));
        se += std::fabs(a.back() - c.back());
        ss += std::fabs(b.back() - d.back());
    }
    CHECK(composition_loss<double>(a, b, c, d) == doctest::Approx(se / 9 + ss / 9));
}

TEST_CASE("reflectance regularization: hair forced to zero, eyes excluded") {
    std::vector<double> spec = {0.2, 0.3, 0.9};
    std::vector<double> pseudo = {0.2, 0.7, 0.4};
    std::vector<RayLabel> labels = {RayLabel::Skin, RayLabel::Hair, RayLabel::Eye};
    // skin: |0.2-0.2|=0; hair: |0.3-0|=0.3; eye excluded -> mean over 2 rays
    CHECK(reflectance_reg<double>(spec, pseudo, labels, 1.0) == doctest::Approx(0.15));

    std::vector<RayLabel> all_eye = {RayLabel::Eye, RayLabel::Eye, RayLabel::Eye};
    CHECK(reflectance_reg<double>(spec, pseudo, all_eye, 1.0) == 0.0);

    std::vector<double> match = {0.5};
    std::vector<double> target = {0.5};
    std::vector<RayLabel> skin = {RayLabel::Skin};
    CHECK(reflectance_reg<double>(match, target, skin, 1.0) == 0.0);
}

TEST_CASE("reflectance regularization is scale-compensated") {
    Rng rng(9, 5);
    std::vector<double> spec, pseudo;
    std::vector<RayLabel> labels;
    for (int i = 0; i < 20; ++i) {
        spec.push_back(rng.uniform());
        pseudo.push_back(rng.uniform());
        labels.push_back(RayLabel::Skin);
    }
    double base = reflectance_reg<double>(spec, pseudo, labels, 1.3);
    const double gamma = 2.7;
    std::vector<double> pseudo_scaled = pseudo;
    for (double& v : pseudo_scaled) v *= gamma;
    double scaled = reflectance_reg<double>(spec, pseudo_scaled, labels, 1.3 * gamma);
    CHECK(scaled == doctest::Approx(gamma * base).epsilon(1e-12));
}

TEST_CASE("total loss composes stage-dependent weighted terms") {
    std::vector<Vec3> rendered = {{0.5, 0.5, 0.5}};
    std::vector<Vec3> target = {{0.25, 0.25, 0.25}};
    std::vector<double> opacity = {0.8}, mask = {1.0};
    std::vector<double> grad_norms = {1.5};
    std::vector<double> dots_hair = {0.9}, dots_other = {0.95};
    std::vector<double> oe = {0.2}, os = {0.6};
    std::vector<double> me = {0.0}, ms = {1.0};
    std::vector<double> spec = {0.4}, pseudo = {0.1};
    std::vector<RayLabel> labels = {RayLabel::Skin};

    LossInputs<double> in;
    in.rendered = rendered;
    in.target = target;
    in.opacity = opacity;
    in.mask = mask;
    in.grad_norms = grad_norms;
    in.normal_dots_hair = dots_hair;
    in.normal_dots_other = dots_other;
    in.opacity_E = oe;
    in.opacity_S = os;
    in.mask_E = me;
    in.mask_S = ms;
    in.rendered_spec = spec;
    in.pseudo_spec = pseudo;
    in.labels = labels;
    in.k = 1.0;

    LossWeights w1 = LossWeights::stage_defaults(Stage::One);
    CHECK(w1.w_l1 == 1.0);
    CHECK(w1.w_mask == 1.0);
    CHECK(w1.w_eikonal == 1.0);
    CHECK(w1.w_eps_hair == 0.5);
    CHECK(w1.w_eps_other == 0.02);
    CHECK(w1.w_comp == 1.0);
    CHECK(w1.w_ref == 0.5);

    LossBreakdown bd;
    double total = total_loss<double>(in, w1, &bd);
    double expected = 1.0 * 0.25 + 1.0 * 0.2 + 1.0 * 0.25 + 0.5 * 0.1 + 0.02 * 0.05 + 1.0 * (0.2 + 0.4) +
                      0.5 * 0.3;
    CHECK(total == doctest::Approx(expected).epsilon(1e-12));
    CHECK(bd.total == doctest::Approx(total));

    // Stage two: only photometric and reflectance regularization survive.
    LossWeights w2 = LossWeights::stage_defaults(Stage::Two);
    CHECK(w2.w_ref == 0.01);
    double total2 = total_loss<double>(in, w2, &bd);
    CHECK(total2 == doctest::Approx(1.0 * 0.25 + 0.01 * 0.3).epsilon(1e-12));
    CHECK(bd.mask == 0.0);
    CHECK(bd.eikonal == 0.0);

    // All-zero inputs produce zero.
    std::vector<Vec3> z3 = {{0, 0, 0}};
    std::vector<double> z1 = {0.0};
    std::vector<double> gn1 = {1.0};
    LossInputs<double> zin = in;
    zin.rendered = z3;
    zin.target = z3;
    zin.opacity = z1;
    zin.mask = z1;
    zin.grad_norms = gn1;
    std::vector<double> ones = {1.0};
    zin.normal_dots_hair = ones;
    zin.normal_dots_other = ones;
    zin.opacity_E = z1;
    zin.opacity_S = z1;
    zin.mask_E = z1;
    zin.mask_S = z1;
    zin.rendered_spec = z1;
    zin.pseudo_spec = z1;
    CHECK(total_loss<double>(zin, w1, nullptr) == 0.0);
}

TEST_CASE("scale compensator stays positive through the exponential map") {
    ParamStore store;
    ScaleCompensator k = ScaleCompensator::create(store);
    CHECK(k.k(store) == doctest::Approx(1.0));
    store.group_values(k.group)[0] = -30.0;
    CHECK(k.k(store) > 0.0);
    store.group_values(k.group)[0] = 2.0;
    CHECK(k.k(store) == doctest::Approx(std::exp(2.0)));
}

TEST_SUITE_END();
