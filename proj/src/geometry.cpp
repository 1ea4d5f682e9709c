#include "flashscan/geometry.hpp"

namespace flashscan {

GridField GridField::create(ParamStore& store, const std::vector<int>& resolutions, int channels,
                            const std::string& group_name) {
    if (resolutions.empty()) throw InvariantError("grid needs at least one level");
    if (resolutions.size() > 8) throw InvariantError("grid supports at most 8 levels");
    GridField f;
    f.channels_ = channels;
    uint32_t vertices = 0;
    for (int res : resolutions) {
        if (res < 2) throw InvariantError("grid level resolution must be >= 2");
        f.levels_.push_back({res, vertices, 1.0});
        vertices += uint32_t(res) * uint32_t(res) * uint32_t(res);
    }
    f.group_ = store.add_group(group_name, vertices * uint32_t(channels));
    f.group_offset_ = store.group(f.group_).offset;
    return f;
}

Vec3 GridField::vertex_position(const GridLevel& level, int ix, int iy, int iz) {
    double step = 2.0 / (level.res - 1);
    return {-1.0 + ix * step, -1.0 + iy * step, -1.0 + iz * step};
}

namespace {

struct Cell {
    int i[3];       // base vertex
    double f[3];    // fractional position inside the cell
    double scale;   // d(grid coord)/d(world coord) = (res-1)/2
};

inline Cell locate(const GridLevel& level, const Vec3& x) {
    Cell c;
    c.scale = (level.res - 1) * 0.5;
    for (int a = 0; a < 3; ++a) {
        double u = (x[a] + 1.0) * c.scale;
        int i = int(std::floor(u));
        if (i < 0) i = 0;
        if (i > level.res - 2) i = level.res - 2;
        c.i[a] = i;
        c.f[a] = clamp(u - i, 0.0, 1.0);
    }
    return c;
}

inline Vec3 clamp_cube(const Vec3& x) {
    bool oob = x.x < -1.0 || x.x > 1.0 || x.y < -1.0 || x.y > 1.0 || x.z < -1.0 || x.z > 1.0;
    if (oob) {
        diag().grid_oob_clamps.fetch_add(1, std::memory_order_relaxed);
        return {clamp(x.x, -1.0, 1.0), clamp(x.y, -1.0, 1.0), clamp(x.z, -1.0, 1.0)};
    }
    return x;
}

}  // namespace

// Shared interpolation kernel. Emits either plain sums or tape terms; with
// want_grad it also produces the analytic spatial gradient of the interpolant
// (piecewise constant per cell along each axis, blended across levels).
void GridField::gather(const ParamStore& store, const Vec3& x_in, int channel, bool want_grad, double* value,
                       Vec3* grad, Tape* tape, Tape::Term* value_terms, Tape::Term* grad_terms) const {
    Vec3 x = clamp_cube(x_in);
    double acc = 0.0;
    Vec3 gacc{0, 0, 0};
    int term_count = 0;
    for (const GridLevel& level : levels_) {
        Cell c = locate(level, x);
        double wx[2] = {1.0 - c.f[0], c.f[0]};
        double wy[2] = {1.0 - c.f[1], c.f[1]};
        double wz[2] = {1.0 - c.f[2], c.f[2]};
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    uint32_t pid = vertex_param(level, c.i[0] + dx, c.i[1] + dy, c.i[2] + dz, channel);
                    double w = wx[dx] * wy[dy] * wz[dz] * level.weight;
                    double v = store.at(pid);
                    acc += w * v;
                    if (tape) value_terms[term_count] = {Tape::encode_param(pid), w};
                    if (want_grad) {
                        double sx = (dx ? 1.0 : -1.0) * wy[dy] * wz[dz];
                        double sy = (dy ? 1.0 : -1.0) * wx[dx] * wz[dz];
                        double sz = (dz ? 1.0 : -1.0) * wx[dx] * wy[dy];
                        double k = level.weight * c.scale;
                        gacc.x += sx * k * v;
                        gacc.y += sy * k * v;
                        gacc.z += sz * k * v;
                        if (tape) {
                            grad_terms[term_count] = {Tape::encode_param(pid), sx * k};
                            grad_terms[8 * int(levels_.size()) + term_count] = {Tape::encode_param(pid), sy * k};
                            grad_terms[16 * int(levels_.size()) + term_count] = {Tape::encode_param(pid), sz * k};
                        }
                    }
                    ++term_count;
                }
    }
    *value = acc;
    if (want_grad) *grad = gacc;
}

void GridField::values(const ParamStore& store, const Vec3& x, double* out) const {
    for (int ch = 0; ch < channels_; ++ch) {
        double v;
        gather(store, x, ch, false, &v, nullptr, nullptr, nullptr, nullptr);
        out[ch] = v;
    }
}

GridField::Eval GridField::eval(const ParamStore& store, const Vec3& x, int channel) const {
    Eval e;
    gather(store, x, channel, true, &e.value, &e.grad, nullptr, nullptr, nullptr);
    return e;
}

void GridField::values_ad(Tape& tape, const ParamStore& store, const Vec3& x, Ad* out) const {
    size_t n = 8 * levels_.size();
    Tape::Term terms[64];
    for (int ch = 0; ch < channels_; ++ch) {
        double v;
        gather(store, x, ch, false, &v, nullptr, &tape, terms, nullptr);
        out[ch] = linear(tape, std::span<const Tape::Term>(terms, n), v);
    }
}

GridField::EvalAd GridField::eval_ad(Tape& tape, const ParamStore& store, const Vec3& x, int channel) const {
    size_t n = 8 * levels_.size();
    Tape::Term vterms[64];
    Tape::Term gterms[192];
    double v;
    Vec3 g;
    gather(store, x, channel, true, &v, &g, &tape, vterms, gterms);
    EvalAd e;
    e.value = linear(tape, std::span<const Tape::Term>(vterms, n), v);
    e.grad.x = linear(tape, std::span<const Tape::Term>(gterms, n), g.x);
    e.grad.y = linear(tape, std::span<const Tape::Term>(gterms + 8 * levels_.size(), n), g.y);
    e.grad.z = linear(tape, std::span<const Tape::Term>(gterms + 16 * levels_.size(), n), g.z);
    return e;
}

void SdfGridField::init_sphere(ParamStore& store, double r0) const {
    if (r0 <= 0.0 || r0 >= 1.0) throw InvariantError("init_sphere expects r0 in (0,1)");
    const auto& levels = grid_.levels();
    size_t cascade_end = levels.size() > 1 ? levels.size() - 1 : 1;
    for (size_t li = 0; li < levels.size(); ++li) {
        const GridLevel& level = levels[li];
        for (int iz = 0; iz < level.res; ++iz)
            for (int iy = 0; iy < level.res; ++iy)
                for (int ix = 0; ix < level.res; ++ix) {
                    uint32_t pid = grid_.vertex_param(level, ix, iy, iz, 0);
                    if (li >= cascade_end) {
                        store.at(pid) = 0.0;
                        continue;
                    }
                    Vec3 p = GridField::vertex_position(level, ix, iy, iz);
                    double target = norm(p) - r0;
                    double current = li == 0 ? 0.0 : value(store, p);
                    store.at(pid) = (target - current) / level.weight;
                }
    }
}

Vec3 normal(const Vec3& x, const SdfGridField& grid, const SphereEyeballs& eyes, const ParamStore& store) {
    double e = sphere_sdf(x, eyes);
    GridField::Eval s = grid.eval(store, x);
    if (e <= s.value) return sphere_normal(x, eyes);
    return normalized_safe(s.grad);
}

SamplePoint classify_point(const Vec3& x, double t, const SdfGridField& grid, const SphereEyeballs& eyes,
                           const ParamStore& store) {
    SamplePoint p;
    p.x = x;
    p.t = t;
    p.sdf_E = sphere_sdf(x, eyes);
    GridField::Eval s = grid.eval(store, x);
    p.sdf_S = s.value;
    p.sdf = vmin(p.sdf_E, p.sdf_S);
    p.region = p.sdf_E <= p.sdf_S ? Region::E : Region::S;
    p.n = p.region == Region::E ? sphere_normal(x, eyes) : normalized_safe(s.grad);
    return p;
}

}  // namespace flashscan
