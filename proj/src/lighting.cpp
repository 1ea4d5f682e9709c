#include "flashscan/lighting.hpp"

namespace flashscan {

CombinedLight CombinedLight::create(ParamStore& store, double s_l, int n_views, bool occlusion) {
    CombinedLight light;
    light.n_views = n_views;
    light.occlusion_enabled = occlusion;
    // s_L is predefined in the capture protocol; keep it differentiable for
    // gradient checks but frozen by default.
    light.sl_group = store.add_group("flash_scale", 1, /*trainable=*/false);
    store.group_values(light.sl_group)[0] = s_l;
    light.klm_group = store.add_group("ambient_sh", 27);
    if (occlusion) {
        if (n_views <= 0) throw ConfigError("occlusion masks need a positive view count");
        light.occ_group = store.add_group("occlusion_sh", uint32_t(n_views) * 9);
    }
    return light;
}

}  // namespace flashscan
