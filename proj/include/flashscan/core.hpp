#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace flashscan {

inline constexpr double kPi = 3.14159265358979323846;

// User/config mistakes: bad flags, malformed files, missing inputs. Exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Broken internal contracts: shape mismatches, out-of-range indices. Exit code 2.
struct InvariantError : std::logic_error {
    using std::logic_error::logic_error;
};

template <class T>
struct Vec3T {
    T x{}, y{}, z{};

    Vec3T() = default;
    Vec3T(T xx, T yy, T zz) : x(xx), y(yy), z(zz) {}

    T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    const T& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

using Vec3 = Vec3T<double>;

template <class T> Vec3T<T> operator+(const Vec3T<T>& a, const Vec3T<T>& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
template <class T> Vec3T<T> operator-(const Vec3T<T>& a, const Vec3T<T>& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
template <class T> Vec3T<T> operator-(const Vec3T<T>& a) { return {-a.x, -a.y, -a.z}; }
template <class T, class S> auto operator*(const Vec3T<T>& a, const S& s) -> Vec3T<decltype(a.x * s)> { return {a.x * s, a.y * s, a.z * s}; }
template <class T, class S> auto operator*(const S& s, const Vec3T<T>& a) -> Vec3T<decltype(a.x * s)> { return {a.x * s, a.y * s, a.z * s}; }
template <class T> Vec3T<T> operator/(const Vec3T<T>& a, const T& s) { return {a.x / s, a.y / s, a.z / s}; }

template <class T> T dot(const Vec3T<T>& a, const Vec3T<T>& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

template <class T>
Vec3T<T> cross(const Vec3T<T>& a, const Vec3T<T>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 normalized(const Vec3& a) {
    double n = norm(a);
    if (n == 0.0) return {0.0, 0.0, 1.0};
    return a * (1.0 / n);
}

inline Vec3 cwise_mul(const Vec3& a, const Vec3& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Row-major 3x3, used for camera rotations and intrinsics.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return Mat3{}; }
    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
};

// Pinhole camera. OpenCV convention: x right, y down, z forward (into the scene).
// `rot` is the world-from-camera rotation, `center` the camera position in world units.
struct Camera {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat3 rot;
    Vec3 center;

    // Ray through pixel (px, py) offset by (ox, oy) in [0,1)^2 within the pixel.
    Vec3 ray_direction(double px, double py, double ox = 0.5, double oy = 0.5) const {
        Vec3 d_cam{(px + ox - cx) / fx, (py + oy - cy) / fy, 1.0};
        return normalized(rot * d_cam);
    }

    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int w, int h);
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
};

// Intersects a ray with the [-1,1]^3 cube. Returns false when the ray misses.
bool intersect_unit_cube(const Ray& ray, double& t_enter, double& t_exit);

// pcg32: deterministic, seedable, independent streams.
class Rng {
  public:
    Rng(uint64_t seed = 0x853c49e6748fea9bULL, uint64_t stream = 0xda3e39cb94b95bdbULL) { reseed(seed, stream); }

    void reseed(uint64_t seed, uint64_t stream) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31u));
    }

    // Uniform in [0,1).
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    uint32_t below(uint32_t n) { return n ? next_u32() % n : 0; }

    Vec3 unit_vector() {
        double z = uniform(-1.0, 1.0);
        double phi = uniform(0.0, 2.0 * kPi);
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }

  private:
    uint64_t state_ = 0, inc_ = 0;
};

// Channel-interleaved image, row-major from the top row. Stored as float32 for
// capture data and bake maps; the double variant serves the relighting solve,
// which needs full precision.
template <class S>
struct BasicImage {
    int width = 0, height = 0, channels = 0;
    std::vector<S> data;

    BasicImage() = default;
    BasicImage(int w, int h, int c) : width(w), height(h), channels(c), data(size_t(w) * h * c, S(0)) {}

    S& at(int x, int y, int c) { return data[(size_t(y) * width + x) * channels + c]; }
    S at(int x, int y, int c) const { return data[(size_t(y) * width + x) * channels + c]; }

    Vec3 rgb(int x, int y) const {
        size_t i = (size_t(y) * width + x) * channels;
        return {double(data[i]), double(data[i + 1]), double(data[i + 2])};
    }
    void set_rgb(int x, int y, const Vec3& v) {
        size_t i = (size_t(y) * width + x) * channels;
        data[i] = S(v.x);
        data[i + 1] = S(v.y);
        data[i + 2] = S(v.z);
    }
};

using Image = BasicImage<float>;
using DImage = BasicImage<double>;

inline DImage to_dimage(const Image& img) {
    DImage out(img.width, img.height, img.channels);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i];
    return out;
}

inline double srgb_encode(double linear) { return std::pow(clamp(linear, 0.0, 1.0), 1.0 / 2.2); }
inline double srgb_decode(double encoded) { return std::pow(clamp(encoded, 0.0, 1.0), 2.2); }

// Process-wide diagnostics. Cheap enough to leave on everywhere; tests reset and inspect.
struct Diagnostics {
    std::atomic<uint64_t> grid_oob_clamps{0};
    std::atomic<uint64_t> degenerate_normals{0};
    std::atomic<uint64_t> flash_singularities{0};
    std::atomic<uint64_t> skipped_adam_groups{0};

    void reset() {
        grid_oob_clamps = 0;
        degenerate_normals = 0;
        flash_singularities = 0;
        skipped_adam_groups = 0;
    }
};

Diagnostics& diag();

}  // namespace flashscan
