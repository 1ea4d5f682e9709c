#include "oracles.hpp"

#include <doctest.h>

using namespace flashscan;
using flashscan::testing::rel_err;

TEST_SUITE_BEGIN("lighting");

TEST_CASE("sh basis closed forms") {
    Rng rng(1, 1);
    for (int i = 0; i < 20; ++i) {
        Vec3 n = rng.unit_vector();
        auto sh = sh_basis(n);
        CHECK(sh[0] == doctest::Approx(0.28209479).epsilon(1e-7));
    }
    auto shz = sh_basis(Vec3{0, 0, 1});
    CHECK(shz[1] == doctest::Approx(0.0));
    CHECK(shz[3] == doctest::Approx(0.0));
    CHECK(shz[2] == doctest::Approx(0.48860251).epsilon(1e-7));
}

TEST_CASE("sh basis is orthonormal under Monte-Carlo quadrature") {
    Rng rng(42, 5);
    const int n_samples = 50000;
    std::array<std::array<double, 9>, 9> gram{};
    for (int s = 0; s < n_samples; ++s) {
        Vec3 n = rng.unit_vector();
        auto sh = sh_basis(n);
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j) gram[size_t(i)][size_t(j)] += sh[size_t(i)] * sh[size_t(j)];
    }
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) {
            double v = gram[size_t(i)][size_t(j)] * 4.0 * kPi / n_samples;
            CHECK(std::fabs(v - (i == j ? 1.0 : 0.0)) < 0.02);
        }
}

TEST_CASE("ambient with zero coefficients is c * ln 2") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store);
    Vec3 c{0.5, 0.25, 1.0};
    Vec3 out = ambient_shading<double>(c, {0, 0, 1}, light, store, nullptr, std::nullopt);
    CHECK(out.x == doctest::Approx(0.5 * std::log(2.0)));
    CHECK(out.y == doctest::Approx(0.25 * std::log(2.0)));
    CHECK(out.z == doctest::Approx(std::log(2.0)));

    Vec3 black = ambient_shading<double>({0, 0, 0}, {0, 0, 1}, light, store, nullptr, std::nullopt);
    CHECK(black.x == 0.0);
}

TEST_CASE("band-0-only ambient is isotropic") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store);
    for (int ch = 0; ch < 3; ++ch) store.at(light.klm_pid(store, 0, ch)) = -2.0 + ch;
    Rng rng(4, 4);
    Vec3 ref = ambient_shading<double>({1, 1, 1}, rng.unit_vector(), light, store, nullptr, std::nullopt);
    for (int i = 0; i < 1000; ++i) {
        Vec3 out = ambient_shading<double>({1, 1, 1}, rng.unit_vector(), light, store, nullptr, std::nullopt);
        CHECK(out.x == doctest::Approx(ref.x).epsilon(1e-12));
        CHECK(out.y == doctest::Approx(ref.y).epsilon(1e-12));
        CHECK(out.z == doctest::Approx(ref.z).epsilon(1e-12));
    }
}

TEST_CASE("ambient output is nonnegative for random coefficients in [-100,100]") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store);
    Rng rng(6, 6);
    for (int trial = 0; trial < 200; ++trial) {
        for (int j = 0; j < 9; ++j)
            for (int ch = 0; ch < 3; ++ch) store.at(light.klm_pid(store, j, ch)) = rng.uniform(-100, 100);
        Vec3 out = ambient_shading<double>({1, 1, 1}, rng.unit_vector(), light, store, nullptr, std::nullopt);
        CHECK(out.x >= 0.0);
        CHECK(out.y >= 0.0);
        CHECK(out.z >= 0.0);
    }
}

TEST_CASE("zero occlusion coefficients halve the ambient exactly") {
    ParamStore plain_store;
    CombinedLight plain = CombinedLight::create(plain_store);
    ParamStore occ_store;
    CombinedLight occluded = CombinedLight::create(occ_store, 8.0, 3, true);
    for (int j = 0; j < 9; ++j)
        for (int ch = 0; ch < 3; ++ch) {
            plain_store.at(plain.klm_pid(plain_store, j, ch)) = 0.1 * j - 0.2 * ch;
            occ_store.at(occluded.klm_pid(occ_store, j, ch)) = 0.1 * j - 0.2 * ch;
        }
    Rng rng(9, 9);
    for (int i = 0; i < 200; ++i) {
        Vec3 n = rng.unit_vector();
        Vec3 a = ambient_shading<double>({1, 0.5, 0.25}, n, plain, plain_store, nullptr, std::nullopt);
        Vec3 b = ambient_shading<double>({1, 0.5, 0.25}, n, occluded, occ_store, nullptr, 1);
        CHECK(b.x == doctest::Approx(0.5 * a.x).epsilon(1e-12));
        CHECK(b.y == doctest::Approx(0.5 * a.y).epsilon(1e-12));
        CHECK(b.z == doctest::Approx(0.5 * a.z).epsilon(1e-12));
    }
}

TEST_CASE("occlusion requires a valid view index") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store, 8.0, 2, true);
    CHECK_THROWS_AS(ambient_shading<double>({1, 1, 1}, {0, 0, 1}, light, store, nullptr, std::nullopt), ConfigError);
    CHECK_THROWS_AS(ambient_shading<double>({1, 1, 1}, {0, 0, 1}, light, store, nullptr, 5), ConfigError);
    CHECK_NOTHROW(ambient_shading<double>({1, 1, 1}, {0, 0, 1}, light, store, nullptr, 1));
}

TEST_CASE("flash shading follows the inverse-square law for s = 0") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store, 8.0);
    light.ambient_enabled = false;
    Vec3 n{0, 0, 1};
    Vec3 x{0, 0, 0};
    Vec3 o1{0, 0, 1.3}, o2{0, 0, 2.6};
    Vec3 f1 = flash_shading<double>(x, o1, n, {1, 1, 1}, 0.0, 0.5, light, store, nullptr);
    Vec3 f2 = flash_shading<double>(x, o2, n, {1, 1, 1}, 0.0, 0.5, light, store, nullptr);
    CHECK(f1.x == doctest::Approx(4.0 * f2.x).epsilon(1e-12));
}

TEST_CASE("flash shading clamps backfacing geometry to zero") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store);
    Vec3 out = flash_shading<double>({0, 0, 0}, {0, 0, 2}, Vec3{0, 0, -1}, {1, 1, 1}, 0.3, 0.5, light, store, nullptr);
    CHECK(out.x == 0.0);
}

TEST_CASE("flash at s_L = 8, d = 2, Lambertian gives 8/4/pi per channel") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store, 8.0);
    Vec3 n{0, 0, 1};
    Vec3 out = flash_shading<double>({0, 0, 0}, {0, 0, 2}, n, {1, 1, 1}, 0.0, 0.5, light, store, nullptr);
    CHECK(out.x == doctest::Approx(8.0 / 4.0 / kPi).epsilon(1e-9));  // 0.63662
    CHECK(out.x == doctest::Approx(0.63662).epsilon(1e-5));
}

TEST_CASE("near-singular flash distance returns zero and counts") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store);
    diag().reset();
    Vec3 out = flash_shading<double>({0.5, 0, 0}, {0.5, 0, 1e-8}, Vec3{0, 0, 1}, {1, 1, 1}, 0.1, 0.5, light, store,
                                     nullptr);
    CHECK(out.x == 0.0);
    CHECK(diag().flash_singularities.load() == 1);
}

TEST_CASE("flash scales linearly in s_L and per channel in c_L") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store, 2.0);
    light.c_l = {1.0, 0.5, 0.25};
    Vec3 n{0, 0, 1};
    Vec3 base = flash_shading<double>({0, 0, 0}, {0, 0, 2}, n, {1, 1, 1}, 0.2, 0.3, light, store, nullptr);
    store.group_values(light.sl_group)[0] = 6.0;
    Vec3 scaled = flash_shading<double>({0, 0, 0}, {0, 0, 2}, n, {1, 1, 1}, 0.2, 0.3, light, store, nullptr);
    CHECK(scaled.x == doctest::Approx(3.0 * base.x).epsilon(1e-12));
    CHECK(base.y == doctest::Approx(0.5 * base.x).epsilon(1e-12));
    CHECK(base.z == doctest::Approx(0.25 * base.x).epsilon(1e-12));
}

TEST_CASE("shade is exactly flash plus ambient") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store, 8.0);
    Rng rng(12, 3);
    for (int j = 0; j < 9; ++j)
        for (int ch = 0; ch < 3; ++ch) store.at(light.klm_pid(store, j, ch)) = rng.uniform(-1, 1);
    for (int i = 0; i < 100; ++i) {
        Vec3 n = rng.unit_vector();
        Vec3 x{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
        Vec3 o{rng.uniform(-2, 2), rng.uniform(-2, 2), 2.0};
        Vec3 c{rng.uniform(), rng.uniform(), rng.uniform()};
        double s = rng.uniform(), rho = 0.04 + 0.9 * rng.uniform();
        Vec3 full = shade<double>(x, o, n, c, s, rho, light, store, nullptr, std::nullopt);
        Vec3 flash = flash_shading<double>(x, o, n, c, s, rho, light, store, nullptr);
        Vec3 amb = ambient_shading<double>(c, n, light, store, nullptr, std::nullopt);
        CHECK(full.x == doctest::Approx(flash.x + amb.x).epsilon(1e-14));
        CHECK(full.y == doctest::Approx(flash.y + amb.y).epsilon(1e-14));
        CHECK(full.z == doctest::Approx(flash.z + amb.z).epsilon(1e-14));
    }

    // Disabling each component leaves exactly the other.
    light.ambient_enabled = false;
    Vec3 n{0, 0.6, 0.8};
    Vec3 flash_only = shade<double>({0, 0, 0}, {0, 0, 2}, n, {1, 1, 1}, 0.2, 0.4, light, store, nullptr, std::nullopt);
    Vec3 flash_ref = flash_shading<double>({0, 0, 0}, {0, 0, 2}, n, {1, 1, 1}, 0.2, 0.4, light, store, nullptr);
    CHECK(flash_only.x == flash_ref.x);
    light.ambient_enabled = true;
    store.group_values(light.sl_group)[0] = 0.0;
    Vec3 amb_only = shade<double>({0, 0, 0}, {0, 0, 2}, n, {1, 1, 1}, 0.2, 0.4, light, store, nullptr, std::nullopt);
    Vec3 amb_ref = ambient_shading<double>({1, 1, 1}, n, light, store, nullptr, std::nullopt);
    CHECK(amb_only.x == doctest::Approx(amb_ref.x).epsilon(1e-14));
}

TEST_CASE("light parameter gradients match finite differences") {
    ParamStore store;
    CombinedLight light = CombinedLight::create(store, 8.0, 2, true);
    Rng rng(19, 8);
    for (int j = 0; j < 9; ++j)
        for (int ch = 0; ch < 3; ++ch) store.at(light.klm_pid(store, j, ch)) = rng.uniform(-0.8, 0.8);
    for (int v = 0; v < 2; ++v)
        for (int j = 0; j < 9; ++j) store.at(light.occ_pid(store, v, j)) = rng.uniform(-0.5, 0.5);

    Vec3 n = normalized(Vec3{0.2, 0.3, 0.9});
    Vec3 x{0.1, -0.2, 0.1};
    Vec3 o{0.4, 0.3, 2.1};

    auto eval = [&](Tape* tape, GradBuffer* grads) {
        Tape local;
        Tape& t = tape ? *tape : local;
        Vec3T<Ad> nn(Ad(n.x), Ad(n.y), Ad(n.z));
        Vec3T<Ad> c(Ad(0.6), Ad(0.5), Ad(0.4));
        Vec3T<Ad> out = shade<Ad>(x, o, nn, c, Ad(0.3), Ad(0.45), light, store, &t, 1);
        Ad sum = out.x + out.y + out.z;
        if (grads) t.backward(sum.idx, *grads);
        return sum.v;
    };

    GradBuffer grads(store.size());
    eval(nullptr, &grads);
    int checked = 0;
    for (uint32_t pid : grads.touched()) {
        double fd = flashscan::testing::fd_param(store, pid, [&] { return eval(nullptr, nullptr); }, 1e-6);
        CHECK(rel_err(grads[pid], fd, 1e-7) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 27 + 9 + 1);  // K (27), one view's O (9), s_L
}

TEST_SUITE_END();
