#include "flashscan/export.hpp"

#include "flashscan/image_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace flashscan {

#include "mc_tables.inl"

namespace {

// Corner offsets matching the case tables.
const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// Cube edges as corner pairs.
const int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                          {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(size_t n) : parent(n) {
        for (size_t i = 0; i < n; ++i) parent[i] = int(i);
    }
    int find(int a) {
        while (parent[size_t(a)] != a) {
            parent[size_t(a)] = parent[size_t(parent[size_t(a)])];
            a = parent[size_t(a)];
        }
        return a;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[size_t(std::max(a, b))] = std::min(a, b);
    }
};

uint64_t edge_key(int ix, int iy, int iz, int axis, int n) {
    return (uint64_t((uint64_t(iz) * uint64_t(n) + uint64_t(iy)) * uint64_t(n) + uint64_t(ix)) << 2) |
           uint64_t(axis);
}

// Lattice edge identity of a cube edge: min corner plus axis.
uint64_t cube_edge_key(int cx, int cy, int cz, int edge, int n) {
    const int* a = kCorner[kEdge[edge][0]];
    const int* b = kCorner[kEdge[edge][1]];
    int ix = cx + std::min(a[0], b[0]);
    int iy = cy + std::min(a[1], b[1]);
    int iz = cz + std::min(a[2], b[2]);
    int axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
    return edge_key(ix, iy, iz, axis, n);
}

}  // namespace

MeshData marching_cubes(const ScalarField& field, int resolution, double iso) {
    if (resolution < 32) throw ConfigError("marching_cubes resolution must be >= 32");
    int n = resolution + 1;  // lattice vertices per axis
    double step = 2.0 / resolution;

    // Sample the field on the lattice, one z-slab pair at a time.
    std::vector<double> slab0(size_t(n) * size_t(n)), slab1(size_t(n) * size_t(n));
    auto sample_slab = [&](int iz, std::vector<double>& slab) {
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix)
                slab[size_t(iy) * size_t(n) + size_t(ix)] =
                    field({-1.0 + ix * step, -1.0 + iy * step, -1.0 + iz * step});
    };

    MeshData mesh;
    std::unordered_map<uint64_t, int> edge_vertices;
    sample_slab(0, slab0);

    auto corner_pos = [&](int ix, int iy, int iz) {
        return Vec3{-1.0 + ix * step, -1.0 + iy * step, -1.0 + iz * step};
    };

    for (int cz = 0; cz < resolution; ++cz) {
        sample_slab(cz + 1, slab1);
        for (int cy = 0; cy < resolution; ++cy)
            for (int cx = 0; cx < resolution; ++cx) {
                double val[8];
                for (int c = 0; c < 8; ++c) {
                    int ix = cx + kCorner[c][0], iy = cy + kCorner[c][1];
                    const std::vector<double>& slab = kCorner[c][2] == 0 ? slab0 : slab1;
                    val[c] = slab[size_t(iy) * size_t(n) + size_t(ix)];
                }
                int cube = 0;
                for (int c = 0; c < 8; ++c)
                    if (val[c] < iso) cube |= 1 << c;
                uint16_t edges = kEdgeTable[cube];
                if (edges == 0) continue;

                int edge_vertex[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1u << e))) continue;
                    uint64_t key = cube_edge_key(cx, cy, cz, e, n);
                    auto it = edge_vertices.find(key);
                    if (it != edge_vertices.end()) {
                        edge_vertex[e] = it->second;
                        continue;
                    }
                    int c0 = kEdge[e][0], c1 = kEdge[e][1];
                    Vec3 p0 = corner_pos(cx + kCorner[c0][0], cy + kCorner[c0][1], cz + kCorner[c0][2]);
                    Vec3 p1 = corner_pos(cx + kCorner[c1][0], cy + kCorner[c1][1], cz + kCorner[c1][2]);
                    double v0 = val[c0], v1 = val[c1];
                    double mu = std::fabs(v1 - v0) < 1e-12 ? 0.5 : (iso - v0) / (v1 - v0);
                    mu = clamp(mu, 0.0, 1.0);
                    Vec3 p = p0 + (p1 - p0) * mu;
                    int idx = int(mesh.vertices.size());
                    mesh.vertices.push_back(p);
                    edge_vertices.emplace(key, idx);
                    edge_vertex[e] = idx;
                }

                const int8_t* tris = kTriTable[cube];
                // Emitted flipped so face normals point toward positive SDF.
                for (int i = 0; tris[i] != -1; i += 3)
                    mesh.triangles.push_back({edge_vertex[tris[i]], edge_vertex[tris[i + 2]],
                                              edge_vertex[tris[i + 1]]});
            }
        std::swap(slab0, slab1);
    }

    if (mesh.triangles.empty()) throw ConfigError("no surface at iso " + std::to_string(iso));
    return mesh;
}

MeshData marching_cubes_scene(const Scene& scene, const ParamStore& store, int resolution, double iso) {
    return marching_cubes([&](const Vec3& x) { return union_sdf(x, scene.sdf, scene.eyes, store).sdf; }, resolution,
                          iso);
}

MeshData cull_unseen(const MeshData& mesh, const std::vector<Camera>& cameras, const ScalarField& field,
                     double clearance) {
    std::vector<char> keep(mesh.triangles.size(), 0);
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        Vec3 c = mesh.centroid(t);
        Vec3 nrm = mesh.face_normal(t);
        for (const Camera& cam : cameras) {
            Vec3 to_cam = cam.center - c;
            double dist = norm(to_cam);
            if (dist < 1e-9) continue;
            if (dot(nrm, to_cam) <= 0.0) continue;  // back-facing
            Ray ray{cam.center, to_cam * (-1.0 / dist)};
            double t0, t1;
            double trace_start = 1e-6;
            if (intersect_unit_cube(ray, t0, t1)) trace_start = std::max(trace_start, t0);
            std::optional<double> hit = trace_sdf_root(field, ray, trace_start, dist - clearance, 1e-5);
            if (!hit) {
                keep[t] = 1;
                break;
            }
        }
    }

    MeshData out;
    std::vector<int> remap(mesh.vertices.size(), -1);
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        if (!keep[t]) continue;
        std::array<int, 3> tri = mesh.triangles[t];
        for (int& vi : tri) {
            if (remap[size_t(vi)] < 0) {
                remap[size_t(vi)] = int(out.vertices.size());
                out.vertices.push_back(mesh.vertices[size_t(vi)]);
            }
            vi = remap[size_t(vi)];
        }
        out.triangles.push_back(tri);
    }
    return out;
}

namespace {

std::vector<int> component_labels(const MeshData& mesh, int* n_components) {
    DisjointSet ds(mesh.triangles.size());
    std::unordered_map<uint64_t, int> edge_owner;
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        for (int e = 0; e < 3; ++e) {
            int a = tri[size_t(e)], b = tri[size_t((e + 1) % 3)];
            uint64_t key = (uint64_t(std::min(a, b)) << 32) | uint64_t(std::max(a, b));
            auto [it, inserted] = edge_owner.emplace(key, int(t));
            if (!inserted) ds.unite(it->second, int(t));
        }
    }
    std::vector<int> label(mesh.triangles.size());
    std::unordered_map<int, int> roots;
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        int r = ds.find(int(t));
        auto [it, inserted] = roots.emplace(r, int(roots.size()));
        label[t] = it->second;
    }
    *n_components = int(roots.size());
    return label;
}

}  // namespace

int connected_component_count(const MeshData& mesh) {
    if (mesh.triangles.empty()) return 0;
    int n;
    component_labels(mesh, &n);
    return n;
}

MeshData largest_component(const MeshData& mesh) {
    if (mesh.triangles.empty()) return mesh;
    int n_components;
    std::vector<int> label = component_labels(mesh, &n_components);
    if (n_components == 1) return mesh;

    std::vector<size_t> tri_count(size_t(n_components), 0);
    std::vector<int> min_vertex(size_t(n_components), std::numeric_limits<int>::max());
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        tri_count[size_t(label[t])]++;
        for (int vi : mesh.triangles[t]) min_vertex[size_t(label[t])] = std::min(min_vertex[size_t(label[t])], vi);
    }
    int best = 0;
    for (int c = 1; c < n_components; ++c) {
        if (tri_count[size_t(c)] > tri_count[size_t(best)] ||
            (tri_count[size_t(c)] == tri_count[size_t(best)] && min_vertex[size_t(c)] < min_vertex[size_t(best)]))
            best = c;
    }

    MeshData out;
    std::vector<int> remap(mesh.vertices.size(), -1);
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        if (label[t] != best) continue;
        std::array<int, 3> tri = mesh.triangles[t];
        for (int& vi : tri) {
            if (remap[size_t(vi)] < 0) {
                remap[size_t(vi)] = int(out.vertices.size());
                out.vertices.push_back(mesh.vertices[size_t(vi)]);
            }
            vi = remap[size_t(vi)];
        }
        out.triangles.push_back(tri);
    }
    return out;
}

SurfaceSampler scene_sampler(const Scene& scene, const ParamStore& store) {
    SurfaceSampler s;
    s.material = [&scene, &store](const Vec3& x) {
        UnionSdf u = union_sdf(x, scene.sdf, scene.eyes, store);
        return material_at(x, scene.refl, scene.prior, u.sdf_E, u.sdf_S, store);
    };
    s.normal = [&scene, &store](const Vec3& x) { return normal(x, scene.sdf, scene.eyes, store); };
    return s;
}

ExportedAssets atlas_and_bake(const MeshData& mesh, const SurfaceSampler& sampler, int texture_size) {
    const int gutter = 2;
    size_t ntris = mesh.triangles.size();
    if (ntris == 0) throw ConfigError("atlas_and_bake: empty mesh");
    int cols = int(std::ceil(std::sqrt(double(ntris))));
    int cell = texture_size / cols;
    if (cell < 2 * gutter + 3)
        throw ConfigError("texture size " + std::to_string(texture_size) + " too small for " +
                          std::to_string(ntris) + " triangles (cell " + std::to_string(cell) + " texels)");

    ExportedAssets assets;
    assets.mesh = mesh;
    assets.texture_size = texture_size;
    assets.normal_map = Image(texture_size, texture_size, 3);
    assets.diffuse_map = Image(texture_size, texture_size, 3);
    assets.specular_map = Image(texture_size, texture_size, 1);
    assets.roughness_map = Image(texture_size, texture_size, 1);
    assets.uvs.resize(ntris * 3);

    std::vector<uint8_t> charted(size_t(texture_size) * size_t(texture_size), 0);

    for (size_t t = 0; t < ntris; ++t) {
        int ox = int(t % size_t(cols)) * cell;
        int oy = int(t / size_t(cols)) * cell;
        // Right-triangle chart, gutter texels from the cell border.
        double ax = ox + gutter, ay = oy + gutter;
        double bx = ox + cell - 1 - gutter, by = oy + gutter;
        double cx = ox + gutter, cy = oy + cell - 1 - gutter;
        assets.uvs[t * 3 + 0] = {(ax + 0.5) / texture_size, 1.0 - (ay + 0.5) / texture_size};
        assets.uvs[t * 3 + 1] = {(bx + 0.5) / texture_size, 1.0 - (by + 0.5) / texture_size};
        assets.uvs[t * 3 + 2] = {(cx + 0.5) / texture_size, 1.0 - (cy + 0.5) / texture_size};

        const auto& tri = mesh.triangles[t];
        const Vec3& v0 = mesh.vertices[size_t(tri[0])];
        const Vec3& v1 = mesh.vertices[size_t(tri[1])];
        const Vec3& v2 = mesh.vertices[size_t(tri[2])];

        double span = double(cell - 1 - 2 * gutter);
        for (int py = oy + gutter; py <= oy + cell - 1 - gutter; ++py)
            for (int px = ox + gutter; px <= ox + cell - 1 - gutter; ++px) {
                double u = (px - ax) / span;
                double v = (py - ay) / span;
                if (u + v > 1.0 + 1e-9) continue;
                double w0 = 1.0 - u - v;
                Vec3 p = v0 * w0 + v1 * u + v2 * v;
                Material<double> m = sampler.material(p);
                Vec3 n = sampler.normal(p);
                assets.normal_map.set_rgb(px, py, (n + Vec3{1, 1, 1}) * 0.5);
                assets.diffuse_map.set_rgb(px, py, m.c);
                assets.specular_map.at(px, py, 0) = float(m.s);
                assets.roughness_map.at(px, py, 0) = float(m.rho);
                charted[size_t(py) * size_t(texture_size) + size_t(px)] = 1;
            }
    }

    // Dilate: multi-source BFS from all chart texels, copying the nearest value.
    std::queue<std::pair<int, int>> frontier;
    std::vector<int32_t> source(size_t(texture_size) * size_t(texture_size), -1);
    for (int y = 0; y < texture_size; ++y)
        for (int x = 0; x < texture_size; ++x)
            if (charted[size_t(y) * size_t(texture_size) + size_t(x)]) {
                source[size_t(y) * size_t(texture_size) + size_t(x)] = y * texture_size + x;
                frontier.emplace(x, y);
            }
    if (frontier.empty()) throw InvariantError("atlas produced no chart texels");
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    while (!frontier.empty()) {
        auto [x, y] = frontier.front();
        frontier.pop();
        int32_t src = source[size_t(y) * size_t(texture_size) + size_t(x)];
        for (int d = 0; d < 4; ++d) {
            int nx = x + dx[d], ny = y + dy[d];
            if (nx < 0 || ny < 0 || nx >= texture_size || ny >= texture_size) continue;
            int32_t& cell_src = source[size_t(ny) * size_t(texture_size) + size_t(nx)];
            if (cell_src >= 0) continue;
            cell_src = src;
            frontier.emplace(nx, ny);
        }
    }
    auto copy_texel = [&](Image& img, int dst_x, int dst_y, int src_x, int src_y) {
        for (int c = 0; c < img.channels; ++c) img.at(dst_x, dst_y, c) = img.at(src_x, src_y, c);
    };
    for (int y = 0; y < texture_size; ++y)
        for (int x = 0; x < texture_size; ++x) {
            if (charted[size_t(y) * size_t(texture_size) + size_t(x)]) continue;
            int32_t src = source[size_t(y) * size_t(texture_size) + size_t(x)];
            int sx = src % texture_size, sy = src / texture_size;
            copy_texel(assets.normal_map, x, y, sx, sy);
            copy_texel(assets.diffuse_map, x, y, sx, sy);
            copy_texel(assets.specular_map, x, y, sx, sy);
            copy_texel(assets.roughness_map, x, y, sx, sy);
        }

    return assets;
}

namespace {

std::vector<uint8_t> quantize8(const Image& img, bool srgb) {
    std::vector<uint8_t> out(img.data.size());
    for (size_t i = 0; i < out.size(); ++i) {
        double v = srgb ? srgb_encode(img.data[i]) : clamp(img.data[i], 0.0, 1.0);
        out[i] = uint8_t(std::lround(v * 255.0));
    }
    return out;
}

}  // namespace

void write_assets(const ExportedAssets& assets, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    const std::string obj_path = dir + "/mesh.obj";
    std::ofstream obj(obj_path);
    if (!obj) throw ConfigError("cannot write " + obj_path);
    obj.precision(9);
    obj << "mtllib mesh.mtl\n";
    for (const Vec3& v : assets.mesh.vertices) obj << "v " << v.x << " " << v.y << " " << v.z << "\n";
    for (const auto& uv : assets.uvs) obj << "vt " << uv[0] << " " << uv[1] << "\n";
    obj << "usemtl " << assets.material_name << "\n";
    for (size_t t = 0; t < assets.mesh.triangles.size(); ++t) {
        const auto& tri = assets.mesh.triangles[t];
        obj << "f";
        for (int k = 0; k < 3; ++k) obj << " " << tri[size_t(k)] + 1 << "/" << t * 3 + size_t(k) + 1;
        obj << "\n";
    }
    obj.close();

    std::ofstream mtl(dir + "/mesh.mtl");
    if (!mtl) throw ConfigError("cannot write " + dir + "/mesh.mtl");
    mtl << "# normal.png is an object-space normal map: rgb = (n + 1) / 2\n";
    mtl << "newmtl " << assets.material_name << "\n";
    mtl << "map_Kd diffuse.png\n";
    mtl << "map_Ks specular.png\n";
    mtl << "map_Pr roughness.png\n";
    mtl << "norm normal.png\n";
    mtl.close();

    int ts = assets.texture_size;
    write_png_rgb8(dir + "/normal.png", ts, ts, quantize8(assets.normal_map, false));
    write_png_rgb8(dir + "/diffuse.png", ts, ts, quantize8(assets.diffuse_map, true));
    write_png_gray8(dir + "/specular.png", ts, ts, quantize8(assets.specular_map, false));
    write_png_gray8(dir + "/roughness.png", ts, ts, quantize8(assets.roughness_map, false));

    nlohmann::json manifest;
    manifest["mesh"] = "mesh.obj";
    manifest["material"] = assets.material_name;
    manifest["maps"] = {
        {"normal", {{"file", "normal.png"}, {"color_space", "linear"}, {"encoding", "object_space"}}},
        {"diffuse", {{"file", "diffuse.png"}, {"color_space", "srgb"}}},
        {"specular", {{"file", "specular.png"}, {"color_space", "linear"}}},
        {"roughness", {{"file", "roughness.png"}, {"color_space", "linear"}}},
    };
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw ConfigError("cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
}

ParsedObj parse_obj(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open OBJ: " + path);
    ParsedObj out;
    std::string line;
    while (std::getline(f, line)) {
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            ss >> v.x >> v.y >> v.z;
            out.vertices.push_back(v);
        } else if (tag == "vt") {
            std::array<double, 2> uv{};
            ss >> uv[0] >> uv[1];
            out.uvs.push_back(uv);
        } else if (tag == "f") {
            std::array<int, 3> vi{}, ti{};
            for (int k = 0; k < 3; ++k) {
                std::string corner;
                ss >> corner;
                size_t slash = corner.find('/');
                vi[size_t(k)] = std::stoi(corner.substr(0, slash)) - 1;
                ti[size_t(k)] = slash == std::string::npos ? -1 : std::stoi(corner.substr(slash + 1)) - 1;
            }
            out.faces.push_back(vi);
            out.face_uvs.push_back(ti);
        }
    }
    return out;
}

}  // namespace flashscan
