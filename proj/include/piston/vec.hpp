#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace piston {

/// Fixed-dimension Cartesian vector, D = 2 or 3.
template <int D>
struct Vec {
    std::array<double, D> c{};

    constexpr double& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
    constexpr double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

    constexpr Vec operator+(const Vec& r) const {
        Vec out;
        for (int i = 0; i < D; ++i) out[i] = c[i] + r[i];
        return out;
    }
    constexpr Vec operator-(const Vec& r) const {
        Vec out;
        for (int i = 0; i < D; ++i) out[i] = c[i] - r[i];
        return out;
    }
    constexpr Vec operator*(double s) const {
        Vec out;
        for (int i = 0; i < D; ++i) out[i] = c[i] * s;
        return out;
    }
    constexpr Vec operator-() const {
        Vec out;
        for (int i = 0; i < D; ++i) out[i] = -c[i];
        return out;
    }
    constexpr Vec& operator+=(const Vec& r) {
        for (int i = 0; i < D; ++i) c[i] += r[i];
        return *this;
    }
    constexpr Vec& operator-=(const Vec& r) {
        for (int i = 0; i < D; ++i) c[i] -= r[i];
        return *this;
    }
    constexpr bool operator==(const Vec& r) const { return c == r.c; }
};

template <int D>
constexpr Vec<D> operator*(double s, const Vec<D>& v) {
    return v * s;
}

template <int D>
constexpr double dot(const Vec<D>& a, const Vec<D>& b) {
    double s = 0;
    for (int i = 0; i < D; ++i) s += a[i] * b[i];
    return s;
}

template <int D>
inline double norm(const Vec<D>& v) {
    return std::sqrt(dot(v, v));
}

template <int D>
inline double norm2(const Vec<D>& v) {
    return dot(v, v);
}

template <int D>
inline Vec<D> normalized(const Vec<D>& v) {
    const double n = norm(v);
    return v * (1.0 / n);
}

using Vec2 = Vec<2>;
using Vec3 = Vec<3>;

/// Rotate a 2D vector by +90 degrees.
inline Vec2 perp(const Vec2& v) { return {{-v[1], v[0]}}; }

inline double cross(const Vec2& a, const Vec2& b) { return a[0] * b[1] - a[1] * b[0]; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]}};
}

/// Specular reflection of v at a boundary with unit normal n: v' = v - 2(v.n)n.
/// Preserves |v| exactly up to rounding; the normal component changes sign.
template <int D>
inline Vec<D> reflect(const Vec<D>& v, const Vec<D>& n) {
    return v - n * (2.0 * dot(v, n));
}

/// Any unit vector orthogonal to unit n (3D).
inline Vec3 any_orthonormal(const Vec3& n) {
    // pick the axis least aligned with n to avoid degeneracy
    Vec3 a = std::fabs(n[0]) < 0.9 ? Vec3{{1, 0, 0}} : Vec3{{0, 1, 0}};
    return normalized(cross(n, a));
}

}  // namespace piston
