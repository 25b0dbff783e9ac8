#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace uhfseg {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<std::int64_t, 3>;

// Row-major 4x4 homogeneous matrix for voxel<->world mapping.
struct Affine {
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    double& operator()(int r, int c) { return m[r * 4 + c]; }
    double operator()(int r, int c) const { return m[r * 4 + c]; }

    static Affine identity() { return Affine{}; }

    static Affine diagonal(const Vec3& d, const Vec3& t = {0, 0, 0}) {
        Affine a;
        for (int i = 0; i < 3; ++i) {
            a(i, i) = d[i];
            a(i, 3) = t[i];
        }
        return a;
    }

    Vec3 apply(const Vec3& v) const {
        Vec3 out;
        for (int r = 0; r < 3; ++r)
            out[r] = (*this)(r, 0) * v[0] + (*this)(r, 1) * v[1] + (*this)(r, 2) * v[2] + (*this)(r, 3);
        return out;
    }

    Affine operator*(const Affine& o) const {
        Affine out;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += (*this)(r, k) * o(k, c);
                out(r, c) = s;
            }
        return out;
    }

    double det3() const {
        const Affine& a = *this;
        return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
               a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
               a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    }

    // Inverse assuming an affine transform (last row 0 0 0 1).
    Affine inverse() const {
        const Affine& a = *this;
        double d = det3();
        if (std::abs(d) < 1e-300) throw std::runtime_error("affine: singular 3x3 block");
        double inv = 1.0 / d;
        Affine r;
        r(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) * inv;
        r(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) * inv;
        r(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) * inv;
        r(1, 0) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) * inv;
        r(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) * inv;
        r(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) * inv;
        r(2, 0) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) * inv;
        r(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) * inv;
        r(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) * inv;
        for (int i = 0; i < 3; ++i)
            r(i, 3) = -(r(i, 0) * a(0, 3) + r(i, 1) * a(1, 3) + r(i, 2) * a(2, 3));
        return r;
    }

    Vec3 column_norms() const {
        Vec3 n;
        for (int c = 0; c < 3; ++c)
            n[c] = std::sqrt((*this)(0, c) * (*this)(0, c) + (*this)(1, c) * (*this)(1, c) +
                             (*this)(2, c) * (*this)(2, c));
        return n;
    }

    bool almost_equal(const Affine& o, double tol) const {
        for (int i = 0; i < 16; ++i)
            if (std::abs(m[i] - o.m[i]) > tol) return false;
        return true;
    }
};

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

}  // namespace uhfseg
