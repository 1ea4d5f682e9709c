#include "flashscan/serialize.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace flashscan {

namespace {

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

constexpr uint32_t kGridVersion = 1;

}  // namespace

void save_grid(const std::string& path, const GridField& grid, const ParamStore& store, const char magic[4]) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f.write(magic, 4);
    write_u32(f, kGridVersion);
    write_u32(f, uint32_t(grid.levels().size()));
    for (const GridLevel& level : grid.levels()) {
        write_u32(f, uint32_t(level.res));
        write_u32(f, uint32_t(level.res));
        write_u32(f, uint32_t(level.res));
    }
    std::span<const double> values = store.group_values(grid.group());
    std::vector<float> buf(values.size());
    for (size_t i = 0; i < values.size(); ++i) buf[i] = float(values[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
}

std::vector<int> peek_grid_levels(const std::string& path, const char magic[4]) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open grid snapshot: " + path);
    char m[4];
    f.read(m, 4);
    if (!f || std::memcmp(m, magic, 4) != 0)
        throw ConfigError("bad magic in grid snapshot " + path + " (expected " + std::string(magic, 4) + ")");
    uint32_t version = read_u32(f);
    if (version != kGridVersion) throw ConfigError("unsupported grid snapshot version in " + path);
    uint32_t n_levels = read_u32(f);
    std::vector<int> dims;
    for (uint32_t i = 0; i < n_levels; ++i) {
        uint32_t nx = read_u32(f), ny = read_u32(f), nz = read_u32(f);
        if (nx != ny || ny != nz) throw ConfigError("non-cubic grid level in " + path);
        dims.push_back(int(nx));
    }
    if (!f) throw ConfigError("truncated grid snapshot: " + path);
    return dims;
}

void load_grid(const std::string& path, const GridField& grid, ParamStore& store, const char magic[4]) {
    std::vector<int> dims = peek_grid_levels(path, magic);
    if (dims.size() != grid.levels().size()) throw ConfigError("grid level count mismatch in " + path);
    for (size_t i = 0; i < dims.size(); ++i)
        if (dims[i] != grid.levels()[i].res) throw ConfigError("grid resolution mismatch in " + path);

    std::ifstream f(path, std::ios::binary);
    f.seekg(std::streamoff(12 + dims.size() * 12));
    std::span<double> values = store.group_values(grid.group());
    std::vector<float> buf(values.size());
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
    if (!f) throw ConfigError("truncated grid snapshot: " + path);
    for (size_t i = 0; i < values.size(); ++i) values[i] = double(buf[i]);
}

void save_sdf_grid(const std::string& path, const SdfGridField& f, const ParamStore& store) {
    save_grid(path, f.grid(), store, "HIRG");
}
void load_sdf_grid(const std::string& path, const SdfGridField& f, ParamStore& store) {
    load_grid(path, f.grid(), store, "HIRG");
}
void save_refl_grid(const std::string& path, const ReflectanceField& f, const ParamStore& store) {
    save_grid(path, f.grid(), store, "HIRR");
}
void load_refl_grid(const std::string& path, const ReflectanceField& f, ParamStore& store) {
    load_grid(path, f.grid(), store, "HIRR");
}

void save_light(const std::string& path, const CombinedLight& light, const ParamStore& store,
                const std::vector<std::string>& frame_ids) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f.precision(17);
    f << "s_L " << light.s_l(store) << "\n";
    f << "c_L " << light.c_l.x << " " << light.c_l.y << " " << light.c_l.z << "\n";
    f << "ambient_enabled " << (light.ambient_enabled ? 1 : 0) << "\n";
    f << "K";
    for (int j = 0; j < 9; ++j)
        for (int ch = 0; ch < 3; ++ch) f << " " << store.at(light.klm_pid(store, j, ch));
    f << "\n";
    if (light.occlusion_enabled) {
        for (int v = 0; v < light.n_views; ++v) {
            f << "O " << (v < int(frame_ids.size()) ? frame_ids[size_t(v)] : std::to_string(v));
            for (int j = 0; j < 9; ++j) f << " " << store.at(light.occ_pid(store, v, j));
            f << "\n";
        }
    }
}

void load_light(const std::string& path, CombinedLight& light, ParamStore& store,
                const std::vector<std::string>& frame_ids) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open light state: " + path);
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "s_L") {
            double v;
            ss >> v;
            store.group_values(light.sl_group)[0] = v;
        } else if (key == "c_L") {
            ss >> light.c_l.x >> light.c_l.y >> light.c_l.z;
        } else if (key == "ambient_enabled") {
            int v;
            ss >> v;
            light.ambient_enabled = v != 0;
        } else if (key == "K") {
            for (int j = 0; j < 9; ++j)
                for (int ch = 0; ch < 3; ++ch) ss >> store.at(light.klm_pid(store, j, ch));
        } else if (key == "O") {
            std::string frame_id;
            ss >> frame_id;
            int view = -1;
            for (size_t i = 0; i < frame_ids.size(); ++i)
                if (frame_ids[i] == frame_id) view = int(i);
            if (view < 0) throw ConfigError("light state references unknown frame id " + frame_id + " in " + path);
            if (!light.occlusion_enabled) throw ConfigError("light state has O block but occlusion is disabled");
            for (int j = 0; j < 9; ++j) ss >> store.at(light.occ_pid(store, view, j));
        }
        if (ss.fail()) throw ConfigError("malformed light state line '" + line + "' in " + path);
    }
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        std::string rest;
        std::getline(ss, rest);
        size_t start = rest.find_first_not_of(" \t");
        kv[key] = start == std::string::npos ? "" : rest.substr(start);
    }
    return kv;
}

namespace {

std::vector<int> parse_ints(const std::string& s) {
    std::istringstream ss(s);
    std::vector<int> out;
    int v;
    while (ss >> v) out.push_back(v);
    return out;
}

Vec3 parse_vec3(const std::string& s, const std::string& key) {
    std::istringstream ss(s);
    Vec3 v;
    if (!(ss >> v.x >> v.y >> v.z)) throw ConfigError("expected 3 values for " + key);
    return v;
}

}  // namespace

void save_scene_config(const std::string& path, const SceneConfig& config) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f.precision(17);
    f << "# hybrid scene geometry\n";
    f << "sdf_levels";
    for (int r : config.sdf_levels) f << " " << r;
    f << "\nrefl_levels";
    for (int r : config.refl_levels) f << " " << r;
    f << "\nr0 " << config.r0 << "\n";
    f << "eye_left " << config.eyes.p_l.x << " " << config.eyes.p_l.y << " " << config.eyes.p_l.z << "\n";
    f << "eye_right " << config.eyes.p_r.x << " " << config.eyes.p_r.y << " " << config.eyes.p_r.z << "\n";
    f << "eye_radius " << config.eyes.r << "\n";
    f << "eye_specular " << config.prior.s_E << "\n";
    f << "eye_roughness " << config.prior.rho_E << "\n";
}

SceneConfig load_scene_config(const std::string& path) {
    auto kv = read_kv_file(path);
    SceneConfig c;
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* v = get("sdf_levels")) c.sdf_levels = parse_ints(*v);
    if (auto* v = get("refl_levels")) c.refl_levels = parse_ints(*v);
    if (auto* v = get("r0")) c.r0 = std::stod(*v);
    if (auto* v = get("eye_left")) c.eyes.p_l = parse_vec3(*v, "eye_left");
    if (auto* v = get("eye_right")) c.eyes.p_r = parse_vec3(*v, "eye_right");
    if (auto* v = get("eye_radius")) c.eyes.r = std::stod(*v);
    if (auto* v = get("eye_specular")) c.prior.s_E = std::stod(*v);
    if (auto* v = get("eye_roughness")) c.prior.rho_E = std::stod(*v);
    if (c.eyes.r <= 0.0) throw ConfigError("eye_radius must be positive in " + path);
    if (c.sdf_levels.empty() || c.refl_levels.empty()) throw ConfigError("grid levels missing in " + path);
    return c;
}

void save_fit_state(const std::string& path, double beta, double k) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f.precision(17);
    f << "beta " << beta << "\nk " << k << "\n";
}

void load_fit_state(const std::string& path, double* beta, double* k) {
    auto kv = read_kv_file(path);
    if (beta && kv.count("beta")) *beta = std::stod(kv["beta"]);
    if (k && kv.count("k")) *k = std::stod(kv["k"]);
}

}  // namespace flashscan
