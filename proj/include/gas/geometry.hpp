#pragma once

#include <array>
#include <cmath>

#include "gas/tensor.hpp"

namespace gas {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
    Vec3 operator/(double k) const { return {x / k, y / k, z / k}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x; y += o.y; z += o.z;
        return *this;
    }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0 ? (*this) / n : Vec3{0, 0, 0};
    }
};

inline Vec3 operator*(double k, const Vec3& v) { return v * k; }

struct Mat3 {
    // row-major
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }
    double& at(int r, int c) { return m[r * 3 + c]; }
    double at(int r, int c) const { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
        return r;
    }

    // Rodrigues rotation from an axis-angle vector
    static Mat3 from_axis_angle(const Vec3& aa) {
        const double angle = aa.norm();
        if (angle < 1e-12) return identity();
        const Vec3 u = aa / angle;
        const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
        Mat3 r;
        r.m = {c + u.x * u.x * t,       u.x * u.y * t - u.z * s, u.x * u.z * t + u.y * s,
               u.y * u.x * t + u.z * s, c + u.y * u.y * t,       u.y * u.z * t - u.x * s,
               u.z * u.x * t - u.y * s, u.z * u.y * t + u.x * s, c + u.z * u.z * t};
        return r;
    }
};

// Rigid/affine transform x -> R x + o
struct Transform {
    Mat3 r;
    Vec3 o;

    static Transform identity() { return {Mat3::identity(), {0, 0, 0}}; }
    Vec3 apply(const Vec3& v) const { return r * v + o; }
    Transform compose(const Transform& inner) const {  // this after inner
        return {r * inner.r, r * inner.o + o};
    }
    // general affine inverse (works for weight-blended skinning matrices too)
    Transform inverse() const {
        const auto& a = r.m;
        const double det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
                           a[2] * (a[3] * a[7] - a[4] * a[6]);
        require(std::abs(det) > 1e-12, "transform: singular matrix inverse");
        const double id = 1.0 / det;
        Mat3 inv;
        inv.m = {(a[4] * a[8] - a[5] * a[7]) * id, (a[2] * a[7] - a[1] * a[8]) * id, (a[1] * a[5] - a[2] * a[4]) * id,
                 (a[5] * a[6] - a[3] * a[8]) * id, (a[0] * a[8] - a[2] * a[6]) * id, (a[2] * a[3] - a[0] * a[5]) * id,
                 (a[3] * a[7] - a[4] * a[6]) * id, (a[1] * a[6] - a[0] * a[7]) * id, (a[0] * a[4] - a[1] * a[3]) * id};
        Transform t;
        t.r = inv;
        t.o = (inv * o) * -1.0;
        return t;
    }
    // weighted blend of transforms, sum of weights assumed ~1
    static Transform blend(const std::vector<Transform>& ts, const std::vector<double>& ws) {
        Transform out;
        out.r.m.fill(0);
        out.o = {0, 0, 0};
        for (size_t i = 0; i < ts.size(); ++i) {
            for (int k = 0; k < 9; ++k) out.r.m[k] += ws[i] * ts[i].r.m[k];
            out.o += ts[i].o * ws[i];
        }
        return out;
    }
};

struct Aabb {
    Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};

    void expand(const Vec3& p) {
        lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y); lo.z = std::min(lo.z, p.z);
        hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y); hi.z = std::max(hi.z, p.z);
    }
    Vec3 center() const { return (lo + hi) * 0.5; }
    Aabb dilated(double frac) const {
        const Vec3 c = center(), half = (hi - lo) * (0.5 * (1.0 + frac));
        return {c - half, c + half};
    }
    // slab test; returns false when the ray misses
    bool intersect(const Vec3& origin, const Vec3& dir, double& t_near, double& t_far) const {
        double t0 = -1e30, t1 = 1e30;
        const double o[3] = {origin.x, origin.y, origin.z};
        const double d[3] = {dir.x, dir.y, dir.z};
        const double l[3] = {lo.x, lo.y, lo.z};
        const double h[3] = {hi.x, hi.y, hi.z};
        for (int a = 0; a < 3; ++a) {
            if (std::abs(d[a]) < 1e-12) {
                if (o[a] < l[a] || o[a] > h[a]) return false;
                continue;
            }
            double ta = (l[a] - o[a]) / d[a];
            double tb = (h[a] - o[a]) / d[a];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
        if (t0 > t1) return false;
        t_near = t0;
        t_far = t1;
        return true;
    }
};

}  // namespace gas
