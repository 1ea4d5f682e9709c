#pragma once

#include "flashscan/losses.hpp"

#include <map>
#include <string>

namespace flashscan {

// Binary grid container: magic ("HIRG" sdf / "HIRR" reflectance), version u32,
// level count u32, per-level dims (3 x u32), then little-endian float32 values
// in x-fastest order, channels interleaved per vertex.
void save_grid(const std::string& path, const GridField& grid, const ParamStore& store, const char magic[4]);
// Loads into an existing grid of identical layout.
void load_grid(const std::string& path, const GridField& grid, ParamStore& store, const char magic[4]);
// Reads just the level resolutions so a matching grid can be constructed.
std::vector<int> peek_grid_levels(const std::string& path, const char magic[4]);

void save_sdf_grid(const std::string& path, const SdfGridField& f, const ParamStore& store);
void load_sdf_grid(const std::string& path, const SdfGridField& f, ParamStore& store);
void save_refl_grid(const std::string& path, const ReflectanceField& f, const ParamStore& store);
void load_refl_grid(const std::string& path, const ReflectanceField& f, ParamStore& store);

// Light state as text key-value: s_L, c_L, 27 K values, optional per-view O
// blocks keyed by frame id.
void save_light(const std::string& path, const CombinedLight& light, const ParamStore& store,
                const std::vector<std::string>& frame_ids);
void load_light(const std::string& path, CombinedLight& light, ParamStore& store,
                const std::vector<std::string>& frame_ids);

// Scene geometry config: grid resolutions, r0, eyeball placement, eye prior.
struct SceneConfig {
    std::vector<int> sdf_levels{16, 32, 64};
    std::vector<int> refl_levels{16, 32};
    double r0 = 0.5;
    SphereEyeballs eyes;
    EyePrior prior;
};

void save_scene_config(const std::string& path, const SceneConfig& config);
SceneConfig load_scene_config(const std::string& path);

// Generic one-key-per-line text config with '#' comments.
std::map<std::string, std::string> read_kv_file(const std::string& path);

// Extra fit state that is not part of the light contract (beta, k).
void save_fit_state(const std::string& path, double beta, double k);
void load_fit_state(const std::string& path, double* beta, double* k);

}  // namespace flashscan
