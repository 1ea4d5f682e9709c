#pragma once

#include "flashscan/params.hpp"

namespace flashscan {

// Two eyeball spheres with a shared radius. Placed manually, never optimized.
struct SphereEyeballs {
    Vec3 p_l{-0.18, 0.08, 0.46};
    Vec3 p_r{0.18, 0.08, 0.46};
    double r = 0.10;
};

// Exact SDF of the two-sphere union.
inline double sphere_sdf(const Vec3& x, const SphereEyeballs& eyes) {
    return vmin(norm(x - eyes.p_l) - eyes.r, norm(x - eyes.p_r) - eyes.r);
}

// Unit normal of the nearer sphere; ties go to the left sphere.
inline Vec3 sphere_normal(const Vec3& x, const SphereEyeballs& eyes) {
    double dl = norm(x - eyes.p_l) - eyes.r;
    double dr = norm(x - eyes.p_r) - eyes.r;
    const Vec3& p = dl <= dr ? eyes.p_l : eyes.p_r;
    return normalized_safe(x - p);
}

enum class Region : uint8_t { E, S };

struct GridLevel {
    int res = 0;          // vertices per axis over [-1,1]
    uint32_t offset = 0;  // into the owning parameter group, in vertex strides
    double weight = 1.0;
};

// Dense multi-resolution scalar grid over the [-1,1]^3 cube. The field value is
// the weighted sum of per-level trilinear interpolations; queries outside the
// cube clamp coordinates and bump a diagnostics counter. Values live in a
// ParamStore group with `channels` scalars per vertex, x-fastest.
class GridField {
  public:
    GridField() = default;

    static GridField create(ParamStore& store, const std::vector<int>& resolutions, int channels,
                            const std::string& group_name);

    int group() const { return group_; }
    int channels() const { return channels_; }
    const std::vector<GridLevel>& levels() const { return levels_; }

    // Plain multi-channel query; `out` must hold `channels()` values.
    void values(const ParamStore& store, const Vec3& x, double* out) const;

    // Value and spatial gradient of a single channel.
    struct Eval {
        double value;
        Vec3 grad;
    };
    Eval eval(const ParamStore& store, const Vec3& x, int channel = 0) const;

    // Ad variants: each output scalar is one tape node over the touched corners.
    void values_ad(Tape& tape, const ParamStore& store, const Vec3& x, Ad* out) const;
    struct EvalAd {
        Ad value;
        AdVec3 grad;
    };
    EvalAd eval_ad(Tape& tape, const ParamStore& store, const Vec3& x, int channel = 0) const;

    // Vertex position of grid index (ix,iy,iz) on a level.
    static Vec3 vertex_position(const GridLevel& level, int ix, int iy, int iz);

    uint32_t vertex_param(const GridLevel& level, int ix, int iy, int iz, int channel) const {
        uint32_t vidx = uint32_t(ix) + uint32_t(level.res) * (uint32_t(iy) + uint32_t(level.res) * uint32_t(iz));
        return group_offset_ + (level.offset + vidx) * uint32_t(channels_) + uint32_t(channel);
    }

  private:
    friend class SdfGridField;

    struct CellWeights;
    void gather(const ParamStore& store, const Vec3& x, int channel, bool want_grad, double* value, Vec3* grad,
                Tape* tape, Tape::Term* value_terms, Tape::Term* grad_terms) const;

    std::vector<GridLevel> levels_;
    int channels_ = 1;
    int group_ = -1;
    uint32_t group_offset_ = 0;
};

// Single-channel grid storing the SDF of region S.
class SdfGridField {
  public:
    SdfGridField() = default;

    static SdfGridField create(ParamStore& store, const std::vector<int>& resolutions,
                               const std::string& group_name = "sdf_grid") {
        SdfGridField f;
        f.grid_ = GridField::create(store, resolutions, 1, group_name);
        return f;
    }

    double value(const ParamStore& store, const Vec3& x) const {
        double v;
        grid_.values(store, x, &v);
        return v;
    }
    GridField::Eval eval(const ParamStore& store, const Vec3& x) const { return grid_.eval(store, x); }
    Ad value_ad(Tape& tape, const ParamStore& store, const Vec3& x) const {
        Ad v;
        grid_.values_ad(tape, store, x, &v);
        return v;
    }
    GridField::EvalAd eval_ad(Tape& tape, const ParamStore& store, const Vec3& x) const {
        return grid_.eval_ad(tape, store, x);
    }

    // Writes ||v|| - r0 into the coarse levels (each non-finest level absorbs the
    // residual left by the coarser ones) and zeros the finest level.
    void init_sphere(ParamStore& store, double r0) const;

    const GridField& grid() const { return grid_; }
    int group() const { return grid_.group(); }

  private:
    GridField grid_;
};

// One shading sample along a ray through the hybrid scene.
struct SamplePoint {
    Vec3 x;
    double t = 0;
    double sdf_E = 0, sdf_S = 0, sdf = 0;
    Vec3 n{0, 0, 1};
    Region region = Region::S;
};

struct UnionSdf {
    double sdf, sdf_E, sdf_S;
};

inline UnionSdf union_sdf(const Vec3& x, const SdfGridField& grid, const SphereEyeballs& eyes,
                          const ParamStore& store) {
    double e = sphere_sdf(x, eyes);
    double s = grid.value(store, x);
    return {vmin(e, s), e, s};
}

struct UnionSdfAd {
    Ad sdf;
    double sdf_E;  // the sphere branch carries no parameters
    Ad sdf_S;
};

inline UnionSdfAd union_sdf_ad(Tape& tape, const Vec3& x, const SdfGridField& grid, const SphereEyeballs& eyes,
                               const ParamStore& store) {
    double e = sphere_sdf(x, eyes);
    Ad s = grid.value_ad(tape, store, x);
    return {vmin(Ad(e), s), e, s};
}

// Unit normal of the union SDF: analytic sphere normal in region E, normalized
// trilinear gradient in region S. Zero gradients fall back to +z.
Vec3 normal(const Vec3& x, const SdfGridField& grid, const SphereEyeballs& eyes, const ParamStore& store);

// Fully classified sample for plain (non-differentiated) evaluation.
SamplePoint classify_point(const Vec3& x, double t, const SdfGridField& grid, const SphereEyeballs& eyes,
                           const ParamStore& store);

}  // namespace flashscan
