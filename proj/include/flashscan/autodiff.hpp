#pragma once

#include "flashscan/core.hpp"

#include <cassert>
#include <cstring>
#include <span>

namespace flashscan {

// Sparse gradient accumulator over a flat parameter vector. Only touched slots are
// zeroed on clear, so reuse across steps is cheap even for large grids.
class GradBuffer {
  public:
    GradBuffer() = default;
    explicit GradBuffer(size_t n) { resize(n); }

    void resize(size_t n) {
        g_.assign(n, 0.0);
        hot_.assign(n, 0);
        touched_.clear();
    }

    size_t size() const { return g_.size(); }

    void add(uint32_t pid, double grad) {
        if (!hot_[pid]) {
            hot_[pid] = 1;
            touched_.push_back(pid);
        }
        g_[pid] += grad;
    }

    double operator[](uint32_t pid) const { return g_[pid]; }

    const std::vector<uint32_t>& touched() const { return touched_; }

    void clear() {
        for (uint32_t pid : touched_) {
            g_[pid] = 0.0;
            hot_[pid] = 0;
        }
        touched_.clear();
    }

    // Merge `other` into this buffer. Callers reduce per-worker buffers in a fixed
    // order so results never depend on thread scheduling.
    void reduce_from(const GradBuffer& other) {
        for (uint32_t pid : other.touched_) add(pid, other.g_[pid]);
    }

  private:
    std::vector<double> g_;
    std::vector<uint8_t> hot_;
    std::vector<uint32_t> touched_;
};

// Reverse-mode tape of scalar operations. Nodes hold (parent, partial) edges; a
// parent is either another node (index >= 0) or a parameter slot (encoded < 0),
// so grid interpolations collapse to a single node with one edge per corner.
class Tape {
  public:
    struct Term {
        int32_t parent;  // >= 0: node index; <= -2: parameter id (encode_param)
        double weight;
    };

    static constexpr int32_t kConst = -1;
    static int32_t encode_param(uint32_t pid) { return -2 - int32_t(pid); }
    static uint32_t decode_param(int32_t idx) { return uint32_t(-2 - idx); }

    void clear() {
        ends_.clear();
        terms_.clear();
    }

    size_t node_count() const { return ends_.size(); }
    size_t term_count() const { return terms_.size(); }

    void reserve(size_t nodes, size_t terms) {
        ends_.reserve(nodes);
        terms_.reserve(terms);
    }

    int32_t push(std::span<const Term> terms) {
        for (const Term& t : terms)
            if (t.parent != kConst) terms_.push_back(t);
        ends_.push_back(uint32_t(terms_.size()));
        return int32_t(ends_.size()) - 1;
    }

    int32_t push1(int32_t p, double w) {
        Term t{p, w};
        return push(std::span<const Term>(&t, 1));
    }

    int32_t push2(int32_t p0, double w0, int32_t p1, double w1) {
        Term t[2] = {{p0, w0}, {p1, w1}};
        return push(std::span<const Term>(t, 2));
    }

    // Propagates d(seed)/d(param) into `grads` for every parameter the seed
    // depends on. Nodes recorded after `seed` are ignored.
    void backward(int32_t seed, GradBuffer& grads) {
        if (seed == kConst) return;
        if (seed < 0) {  // seeding on a bare parameter: d(p)/d(p) = 1
            grads.add(decode_param(seed), 1.0);
            return;
        }
        adjoint_.assign(node_count(), 0.0);
        adjoint_[seed] = 1.0;
        for (int32_t i = seed; i >= 0; --i) {
            double a = adjoint_[i];
            if (a == 0.0) continue;
            uint32_t begin = i > 0 ? ends_[i - 1] : 0;
            uint32_t end = ends_[i];
            for (uint32_t e = begin; e < end; ++e) {
                const Term& t = terms_[e];
                if (t.parent >= 0)
                    adjoint_[t.parent] += t.weight * a;
                else
                    grads.add(decode_param(t.parent), t.weight * a);
            }
        }
    }

  private:
    std::vector<uint32_t> ends_;  // cumulative term counts, one entry per node
    std::vector<Term> terms_;
    std::vector<double> adjoint_;
};

// Differentiable scalar. Constants carry no tape entry; arithmetic folds them.
struct Ad {
    double v = 0.0;
    int32_t idx = Tape::kConst;
    Tape* tape = nullptr;

    Ad() = default;
    Ad(double value) : v(value) {}
    Ad(double value, int32_t index, Tape* t) : v(value), idx(index), tape(t) {}

    static Ad param(double value, uint32_t pid, Tape& t) { return Ad(value, Tape::encode_param(pid), &t); }

    bool is_const() const { return idx == Tape::kConst; }
};

inline double val(double x) { return x; }
inline double val(const Ad& x) { return x.v; }

namespace detail {

inline Tape* tape_of(const Ad& a, const Ad& b) { return a.tape ? a.tape : b.tape; }

inline Ad node2(Tape* t, double value, const Ad& a, double wa, const Ad& b, double wb) {
    if (a.is_const() && b.is_const()) return Ad(value);
    assert(t != nullptr);
    return Ad(value, t->push2(a.idx, wa, b.idx, wb), t);
}

inline Ad node1(const Ad& a, double value, double w) {
    if (a.is_const()) return Ad(value);
    return Ad(value, a.tape->push1(a.idx, w), a.tape);
}

}  // namespace detail

inline Ad operator+(const Ad& a, const Ad& b) { return detail::node2(detail::tape_of(a, b), a.v + b.v, a, 1.0, b, 1.0); }
inline Ad operator-(const Ad& a, const Ad& b) { return detail::node2(detail::tape_of(a, b), a.v - b.v, a, 1.0, b, -1.0); }
inline Ad operator*(const Ad& a, const Ad& b) { return detail::node2(detail::tape_of(a, b), a.v * b.v, a, b.v, b, a.v); }
inline Ad operator/(const Ad& a, const Ad& b) {
    double inv = 1.0 / b.v;
    return detail::node2(detail::tape_of(a, b), a.v * inv, a, inv, b, -a.v * inv * inv);
}
inline Ad operator-(const Ad& a) { return detail::node1(a, -a.v, -1.0); }

inline Ad operator+(const Ad& a, double b) { return detail::node1(a, a.v + b, 1.0); }
inline Ad operator+(double a, const Ad& b) { return detail::node1(b, a + b.v, 1.0); }
inline Ad operator-(const Ad& a, double b) { return detail::node1(a, a.v - b, 1.0); }
inline Ad operator-(double a, const Ad& b) { return detail::node1(b, a - b.v, -1.0); }
inline Ad operator*(const Ad& a, double b) { return detail::node1(a, a.v * b, b); }
inline Ad operator*(double a, const Ad& b) { return detail::node1(b, a * b.v, a); }
inline Ad operator/(const Ad& a, double b) { return detail::node1(a, a.v / b, 1.0 / b); }
inline Ad operator/(double a, const Ad& b) { return detail::node1(b, a / b.v, -a / (b.v * b.v)); }

inline Ad& operator+=(Ad& a, const Ad& b) { return a = a + b; }
inline Ad& operator-=(Ad& a, const Ad& b) { return a = a - b; }
inline Ad& operator*=(Ad& a, const Ad& b) { return a = a * b; }

// double overloads so code templated on the scalar type picks plain math
// instead of converting through Ad constants.
inline double sqrt(double a) { return std::sqrt(a); }
inline double exp(double a) { return std::exp(a); }
inline double log(double a) { return std::log(a); }
inline double pow(double a, double e) { return std::pow(a, e); }

inline Ad sqrt(const Ad& a) {
    double r = std::sqrt(a.v);
    return detail::node1(a, r, r > 0.0 ? 0.5 / r : 0.0);
}
inline Ad exp(const Ad& a) {
    double r = std::exp(a.v);
    return detail::node1(a, r, r);
}
inline Ad log(const Ad& a) { return detail::node1(a, std::log(a.v), 1.0 / a.v); }
inline Ad pow(const Ad& a, double e) {
    double r = std::pow(a.v, e);
    return detail::node1(a, r, a.v != 0.0 ? e * r / a.v : 0.0);
}
inline Ad sq(const Ad& a) { return detail::node1(a, a.v * a.v, 2.0 * a.v); }
inline double sq(double a) { return a * a; }

inline Ad sigmoid(const Ad& a) {
    double s = a.v >= 0.0 ? 1.0 / (1.0 + std::exp(-a.v)) : std::exp(a.v) / (1.0 + std::exp(a.v));
    return detail::node1(a, s, s * (1.0 - s));
}
inline double sigmoid(double a) { return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a)); }

inline Ad softplus(const Ad& a) {
    // log(1 + e^x), overflow-safe; derivative is the sigmoid.
    double v = a.v > 30.0 ? a.v : std::log1p(std::exp(a.v));
    return detail::node1(a, v, sigmoid(a.v));
}
inline double softplus(double a) { return a > 30.0 ? a : std::log1p(std::exp(a)); }

// min/max with subgradient through the chosen branch only; ties prefer `a`.
inline Ad vmin(const Ad& a, const Ad& b) { return a.v <= b.v ? a : b; }
inline Ad vmax(const Ad& a, const Ad& b) { return a.v >= b.v ? a : b; }
inline double vmin(double a, double b) { return a <= b ? a : b; }
inline double vmax(double a, double b) { return a >= b ? a : b; }

inline Ad max0(const Ad& a) { return a.v > 0.0 ? a : Ad(0.0); }
inline double max0(double a) { return a > 0.0 ? a : 0.0; }

inline Ad abs(const Ad& a) { return a.v >= 0.0 ? a : -a; }
inline double abs(double a) { return std::fabs(a); }

// General linear form sum_i w_i * terms_i + bias recorded as one node.
inline Ad linear(Tape& t, std::span<const Tape::Term> terms, double value) {
    return Ad(value, t.push(terms), &t);
}

using AdVec3 = Vec3T<Ad>;

template <class T>
T norm(const Vec3T<T>& a) {
    return sqrt(dot(a, a));
}

// Normalizes, falling back to +z on a degenerate input (counted in diagnostics).
template <class T>
Vec3T<T> normalized_safe(const Vec3T<T>& a) {
    T len = norm(a);
    if (val(len) < 1e-12) {
        diag().degenerate_normals.fetch_add(1, std::memory_order_relaxed);
        return Vec3T<T>(T(0.0), T(0.0), T(1.0));
    }
    return a / len;
}

template <class T>
Vec3T<T> cwise(const Vec3T<T>& a, const Vec3T<T>& b) {
    return {a.x * b.x, a.y * b.y, a.z * b.z};
}

inline Vec3 value_of(const AdVec3& a) { return {a.x.v, a.y.v, a.z.v}; }
inline Vec3 value_of(const Vec3& a) { return a; }

// Select the E-side attribute when sdf_E <= sdf_S. The selectors themselves get
// no gradient from this operation; the chosen attribute keeps its full graph.
template <class A>
const A& select(const A& a_E, const A& a_S, double sdf_E, double sdf_S) {
    return sdf_E <= sdf_S ? a_E : a_S;
}

}  // namespace flashscan
