#pragma once

#include "flashscan/rendering.hpp"

#include <array>
#include <functional>

namespace flashscan {

struct MeshData {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    Vec3 centroid(size_t tri) const {
        const auto& t = triangles[tri];
        return (vertices[size_t(t[0])] + vertices[size_t(t[1])] + vertices[size_t(t[2])]) * (1.0 / 3.0);
    }
    Vec3 face_normal(size_t tri) const {
        const auto& t = triangles[tri];
        return normalized(cross(vertices[size_t(t[1])] - vertices[size_t(t[0])],
                                vertices[size_t(t[2])] - vertices[size_t(t[0])]));
    }
};

struct ExportedAssets {
    MeshData mesh;
    std::vector<std::array<double, 2>> uvs;  // one per triangle corner, 3 * |triangles|
    Image normal_map;      // object-space, stored as (n+1)/2
    Image diffuse_map;     // linear values; sRGB-encoded on disk
    Image specular_map;    // 1 channel
    Image roughness_map;   // 1 channel
    int texture_size = 0;
    std::string material_name = "scan_material";
};

using ScalarField = std::function<double(const Vec3&)>;

// Marching cubes over [-1,1]^3 with `resolution` cells per axis. Vertices on
// shared lattice edges are welded exactly. Throws when the iso surface is empty.
MeshData marching_cubes(const ScalarField& field, int resolution, double iso = 0.001);
MeshData marching_cubes_scene(const Scene& scene, const ParamStore& store, int resolution, double iso = 0.001);

// Keeps triangles that are front-facing to some camera and reachable from it
// without an earlier union-SDF crossing (centroid visibility test).
MeshData cull_unseen(const MeshData& mesh, const std::vector<Camera>& cameras, const ScalarField& field,
                     double clearance = 0.04);

// Largest connected component by shared-edge adjacency; ties keep the
// component containing the lowest vertex index.
MeshData largest_component(const MeshData& mesh);

// Per-triangle grid atlas with 2-texel gutters; texels inside a chart sample
// the material and normal at the corresponding surface point, the rest are
// dilated from the nearest chart texel.
struct SurfaceSampler {
    std::function<Material<double>(const Vec3&)> material;
    std::function<Vec3(const Vec3&)> normal;
};
SurfaceSampler scene_sampler(const Scene& scene, const ParamStore& store);

ExportedAssets atlas_and_bake(const MeshData& mesh, const SurfaceSampler& sampler, int texture_size);

// OBJ + MTL + four PNG maps + manifest.json.
void write_assets(const ExportedAssets& assets, const std::string& dir);

struct ParsedObj {
    std::vector<Vec3> vertices;
    std::vector<std::array<double, 2>> uvs;
    std::vector<std::array<int, 3>> faces;     // vertex indices, 0-based
    std::vector<std::array<int, 3>> face_uvs;  // uv indices, 0-based
};
ParsedObj parse_obj(const std::string& path);

int connected_component_count(const MeshData& mesh);

}  // namespace flashscan
