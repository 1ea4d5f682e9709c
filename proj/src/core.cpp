#include "flashscan/core.hpp"

namespace flashscan {

Diagnostics& diag() {
    static Diagnostics d;
    return d;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int w, int h) {
    Camera cam;
    cam.fx = cam.fy = focal;
    cam.cx = w * 0.5;
    cam.cy = h * 0.5;
    cam.width = w;
    cam.height = h;
    cam.center = eye;
    Vec3 fwd = normalized(target - eye);
    Vec3 right = normalized(cross(fwd, up));
    Vec3 down = cross(fwd, right);
    // columns are the camera axes expressed in world coordinates
    cam.rot(0, 0) = right.x; cam.rot(1, 0) = right.y; cam.rot(2, 0) = right.z;
    cam.rot(0, 1) = down.x;  cam.rot(1, 1) = down.y;  cam.rot(2, 1) = down.z;
    cam.rot(0, 2) = fwd.x;   cam.rot(1, 2) = fwd.y;   cam.rot(2, 2) = fwd.z;
    return cam;
}

bool intersect_unit_cube(const Ray& ray, double& t_enter, double& t_exit) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        double o = ray.origin[a], d = ray.direction[a];
        if (std::fabs(d) < 1e-15) {
            if (o < -1.0 || o > 1.0) return false;
            continue;
        }
        double ta = (-1.0 - o) / d;
        double tb = (1.0 - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t1 <= std::max(t0, 0.0)) return false;
    t_enter = std::max(t0, 0.0);
    t_exit = t1;
    return true;
}

}  // namespace flashscan
