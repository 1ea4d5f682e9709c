#include "oracles.hpp"

#include <doctest.h>

using namespace flashscan;
using flashscan::testing::fd_axis;
using flashscan::testing::rel_err;

namespace {

// Fills a single-channel grid with an arbitrary analytic function at vertices.
void fill_grid(const SdfGridField& f, ParamStore& store, const std::function<double(const Vec3&)>& fn) {
    for (const GridLevel& level : f.grid().levels()) {
        bool first = level.offset == 0;
        for (int iz = 0; iz < level.res; ++iz)
            for (int iy = 0; iy < level.res; ++iy)
                for (int ix = 0; ix < level.res; ++ix) {
                    uint32_t pid = f.grid().vertex_param(level, ix, iy, iz, 0);
                    store.at(pid) = first ? fn(GridField::vertex_position(level, ix, iy, iz)) : 0.0;
                }
    }
}

// Distance from a point to the nearest voxel face plane of any level, per axis.
double face_distance(const SdfGridField& f, const Vec3& x) {
    double best = 1e9;
    for (const GridLevel& level : f.grid().levels())
        for (int a = 0; a < 3; ++a) {
            double u = (x[a] + 1.0) * 0.5 * (level.res - 1);
            best = std::min(best, std::fabs(u - std::round(u)) * 2.0 / (level.res - 1));
        }
    return best;
}

}  // namespace

TEST_SUITE_BEGIN("geometry");

TEST_CASE("sphere_sdf closed forms") {
    SphereEyeballs eyes;
    eyes.p_l = {-0.2, 0, 0};
    eyes.p_r = {0.2, 0, 0};
    eyes.r = 0.1;
    CHECK(sphere_sdf(eyes.p_l, eyes) == doctest::Approx(-0.1));                  // center
    CHECK(std::fabs(sphere_sdf({-0.2, 0.1, 0}, eyes)) < 1e-15);  // on surface
    CHECK(sphere_sdf({0, 0, 0}, eyes) == doctest::Approx(0.1));                  // midpoint of Eq-style layout
}

TEST_CASE("select matches its arithmetic indicator form") {
    Rng rng(77, 1);
    for (int i = 0; i < 2000; ++i) {
        double se = rng.uniform(-1, 1), ss = rng.uniform(-1, 1);
        double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
        double expected = a * (se <= ss ? 1.0 : 0.0) + b * (se > ss ? 1.0 : 0.0);
        CHECK(select(a, b, se, ss) == expected);
    }
    CHECK(select(1.0, 2.0, -0.1, 0.2) == 1.0);
    CHECK(select(1.0, 2.0, 0.3, 0.3) == 1.0);  // ties go to E
    Vec3 e{1, 0, 0}, s{0, 1, 0};
    Vec3 got = select(e, s, 0.5, -0.5);
    CHECK(got.y == 1.0);
}

TEST_CASE("union_sdf equals the pointwise min of its branches") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {12, 24});
    fill_grid(grid, store, [](const Vec3& p) { return norm(p) - 0.8; });
    SphereEyeballs eyes;
    eyes.p_l = {-0.2, 0.0, 0.3};
    eyes.p_r = {0.2, 0.0, 0.3};
    eyes.r = 0.15;

    Rng rng(5, 9);
    for (int i = 0; i < 10000; ++i) {
        Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        UnionSdf u = union_sdf(x, grid, eyes, store);
        CHECK(u.sdf == std::min(u.sdf_E, u.sdf_S));
        CHECK(u.sdf <= u.sdf_E);
        CHECK(u.sdf <= u.sdf_S);
        CHECK(u.sdf_E == sphere_sdf(x, eyes));
        CHECK(u.sdf_S == grid.value(store, x));
    }
}

TEST_CASE("union at an eye center is -r even when the grid disagrees") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {8});
    fill_grid(grid, store, [](const Vec3&) { return 0.5; });
    SphereEyeballs eyes;
    UnionSdf u = union_sdf(eyes.p_l, grid, eyes, store);
    CHECK(u.sdf == doctest::Approx(-eyes.r));
}

TEST_CASE("region classification is shift invariant") {
    Rng rng(11, 2);
    for (int i = 0; i < 500; ++i) {
        double se = rng.uniform(-1, 1), ss = rng.uniform(-1, 1), c = rng.uniform(-3, 3);
        bool region_e = se <= ss;
        CHECK(region_e == (se + c <= ss + c));
    }
}

TEST_CASE("out-of-bounds queries clamp and bump the diagnostics counter") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {8});
    fill_grid(grid, store, [](const Vec3& p) { return p.x; });
    diag().reset();
    double inside = grid.value(store, {1.0, 0.0, 0.0});
    double outside = grid.value(store, {1.7, 0.0, 0.0});
    CHECK(inside == doctest::Approx(outside));
    CHECK(diag().grid_oob_clamps.load() == 1);
}

TEST_CASE("analytic grid gradient matches central differences away from faces") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {16, 32});
    Rng fill_rng(123, 4);
    for (double& v : store.group_values(grid.group())) v = fill_rng.uniform(-1, 1);

    auto field = [&](const Vec3& p) { return grid.value(store, p); };
    Rng rng(3, 8);
    const double h = 1e-4;
    int checked = 0;
    for (int i = 0; i < 4000 && checked < 500; ++i) {
        Vec3 x{rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95)};
        if (face_distance(grid, x) < 2 * h) continue;
        ++checked;
        Vec3 g = grid.eval(store, x).grad;
        for (int a = 0; a < 3; ++a) {
            double fd = fd_axis(field, x, a, h);
            CHECK(rel_err(g[a], fd, 1e-4) < 1e-3);
        }
    }
    CHECK(checked >= 400);
}

TEST_CASE("normal: sphere branch is the analytic radial direction") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {8});
    fill_grid(grid, store, [](const Vec3&) { return 0.9; });
    SphereEyeballs eyes;
    Vec3 x = eyes.p_l + Vec3{0.03, 0.02, 0.05};
    Vec3 n = normal(x, grid, eyes, store);
    Vec3 expected = normalized(x - eyes.p_l);
    CHECK(norm(n - expected) < 1e-12);
}

TEST_CASE("normal: grid branch matches finite differences of the union") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {16, 32});
    fill_grid(grid, store, [](const Vec3& p) { return norm(p - Vec3{0.1, 0.0, 0.1}) - 0.6; });
    SphereEyeballs eyes;
    eyes.p_l = {-0.9, -0.9, -0.9};  // far out of the way
    eyes.p_r = {-0.9, -0.9, -0.9};
    eyes.r = 0.05;

    auto field = [&](const Vec3& p) { return union_sdf(p, grid, eyes, store).sdf; };
    Rng rng(31, 6);
    const double h = 1e-4;
    int checked = 0;
    for (int i = 0; i < 2000 && checked < 200; ++i) {
        Vec3 x{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
        if (face_distance(grid, x) < 2 * h) continue;
        ++checked;
        Vec3 n = normal(x, grid, eyes, store);
        Vec3 fd{fd_axis(field, x, 0, h), fd_axis(field, x, 1, h), fd_axis(field, x, 2, h)};
        Vec3 fdn = normalized(fd);
        CHECK(norm(n - fdn) < 2e-3);
        CHECK(norm(n) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("zero-gradient normal falls back to +z and counts") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {8});
    fill_grid(grid, store, [](const Vec3&) { return 0.0; });  // flat zero field
    SphereEyeballs eyes;
    eyes.p_l = eyes.p_r = {9, 9, 9};  // effectively disabled
    eyes.r = 0.01;
    diag().reset();
    Vec3 n = normal({0.1, 0.2, 0.3}, grid, eyes, store);
    CHECK(n.z == doctest::Approx(1.0));
    CHECK(diag().degenerate_normals.load() >= 1);
}

TEST_CASE("init_sphere approximates the sphere SDF and keeps the finest level zero") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {16, 32, 64});
    const double r0 = 0.5;
    grid.init_sphere(store, r0);

    // Finest level untouched.
    const GridLevel& finest = grid.grid().levels().back();
    for (int i = 0; i < 50; ++i) {
        uint32_t pid = grid.grid().vertex_param(finest, i % finest.res, (i * 7) % finest.res, (i * 13) % finest.res, 0);
        CHECK(store.at(pid) == 0.0);
    }

    CHECK(grid.value(store, {0, 0, 0}) == doctest::Approx(-0.5).epsilon(0.08));
    CHECK(std::fabs(grid.value(store, {0.5, 0, 0})) < 0.02);

    double coarse_diag = 2.0 / (16 - 1) * std::sqrt(3.0);
    Rng rng(7, 7);
    double max_err = 0;
    double eik_sum = 0;
    for (int i = 0; i < 1000; ++i) {
        Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        max_err = std::max(max_err, std::fabs(grid.value(store, x) - (norm(x) - r0)));
        Vec3 g = grid.eval(store, x).grad;
        eik_sum += sq(norm(g) - 1.0);
    }
    CHECK(max_err <= 2.0 * coarse_diag);
    CHECK(eik_sum / 1000.0 < 0.05);
}

TEST_CASE("init_sphere rejects r0 outside (0,1)") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {8});
    CHECK_THROWS_AS(grid.init_sphere(store, 0.0), InvariantError);
    CHECK_THROWS_AS(grid.init_sphere(store, 1.0), InvariantError);
}

TEST_CASE("grid value_ad agrees with plain value and differentiates corner weights") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {8, 16});
    Rng rng(9, 1);
    for (double& v : store.group_values(grid.group())) v = rng.uniform(-1, 1);

    for (int i = 0; i < 50; ++i) {
        Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Tape tape;
        Ad v = grid.value_ad(tape, store, x);
        CHECK(v.v == doctest::Approx(grid.value(store, x)).epsilon(1e-12));

        GradBuffer grads(store.size());
        tape.backward(v.idx, grads);
        for (uint32_t pid : grads.touched()) {
            // the field is linear in its vertices, so a large step is exact
            double fd = flashscan::testing::fd_param(store, pid, [&] { return grid.value(store, x); }, 1e-3);
            CHECK(rel_err(grads[pid], fd, 1e-9) < 1e-7);
        }
    }
}

TEST_CASE("classify_point fills the documented SamplePoint invariants") {
    ParamStore store;
    SdfGridField grid = SdfGridField::create(store, {16});
    fill_grid(grid, store, [](const Vec3& p) { return norm(p) - 0.7; });
    SphereEyeballs eyes;
    Rng rng(21, 3);
    for (int i = 0; i < 200; ++i) {
        Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        SamplePoint p = classify_point(x, 0.5, grid, eyes, store);
        CHECK(p.sdf == std::min(p.sdf_E, p.sdf_S));
        CHECK((p.region == Region::E) == (p.sdf_E <= p.sdf_S));
        CHECK(norm(p.n) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_SUITE_END();
