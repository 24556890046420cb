#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace gravglue {

// =============================================================================
// Small fixed-size vectors and matrices used throughout.
// =============================================================================

struct Vec3 {
    double v[3] = {0.0, 0.0, 0.0};

    Vec3() = default;
    Vec3(double x, double y, double z) : v{x, y, z} {}

    double& operator[](int i) { return v[i]; }
    double operator[](int i) const { return v[i]; }
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a[0], s * a[1], s * a[2]}; }
inline Vec3 operator*(Vec3 a, double s) { return s * a; }
inline Vec3 operator/(Vec3 a, double s) { return {a[0] / s, a[1] / s, a[2] / s}; }
inline Vec3 operator-(Vec3 a) { return {-a[0], -a[1], -a[2]}; }

inline double dot(Vec3 a, Vec3 b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm2(Vec3 a) { return dot(a, a); }
inline double norm(Vec3 a) { return std::sqrt(norm2(a)); }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Vec3 normalized(Vec3 a) { return a / norm(a); }

// Levi-Civita symbol, indices 0..2.
inline double levi_civita(int i, int j, int k) {
    if (i == j || j == k || i == k) return 0.0;
    if ((i + 1) % 3 == j) return 1.0;  // even permutation of (0,1,2)
    return -1.0;
}

struct Mat3 {
    double m[3][3] = {};

    double& operator()(int i, int j) { return m[i][j]; }
    double operator()(int i, int j) const { return m[i][j]; }

    static Mat3 identity() {
        Mat3 r;
        for (int i = 0; i < 3; ++i) r(i, i) = 1.0;
        return r;
    }
};

inline Vec3 operator*(const Mat3& m, Vec3 a) {
    Vec3 r;
    for (int i = 0; i < 3; ++i) r[i] = m(i, 0) * a[0] + m(i, 1) * a[1] + m(i, 2) * a[2];
    return r;
}

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r(i, j) += a(i, k) * b(k, j);
    return r;
}

inline Mat3 transpose(const Mat3& a) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = a(j, i);
    return r;
}

inline double det3(const Mat3& a) {
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

// Adjugate-based closed-form inverse; caller checks the determinant.
inline Mat3 inverse3(const Mat3& a, double det) {
    Mat3 r;
    r(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / det;
    r(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / det;
    r(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / det;
    r(1, 0) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / det;
    r(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / det;
    r(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / det;
    r(2, 0) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / det;
    r(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / det;
    r(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / det;
    return r;
}

// Rotation taking unit vector a to unit vector b (Rodrigues). Falls back to
// identity / a 180-degree flip for (anti)parallel inputs.
Mat3 rotation_between(Vec3 a, Vec3 b);

// =============================================================================
// 4-vectors / 4x4 matrices for spacetime work. Index 0 is time; the Minkowski
// metric is diag(-1,+1,+1,+1).
// =============================================================================

struct Vec4 {
    double v[4] = {0.0, 0.0, 0.0, 0.0};

    Vec4() = default;
    Vec4(double t, double x, double y, double z) : v{t, x, y, z} {}
    Vec4(double t, Vec3 s) : v{t, s[0], s[1], s[2]} {}

    double& operator[](int i) { return v[i]; }
    double operator[](int i) const { return v[i]; }
    Vec3 spatial() const { return {v[1], v[2], v[3]}; }
};

inline Vec4 operator+(Vec4 a, Vec4 b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]}; }
inline Vec4 operator-(Vec4 a, Vec4 b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]}; }

struct Mat4 {
    double m[4][4] = {};

    double& operator()(int i, int j) { return m[i][j]; }
    double operator()(int i, int j) const { return m[i][j]; }

    static Mat4 identity() {
        Mat4 r;
        for (int i = 0; i < 4; ++i) r(i, i) = 1.0;
        return r;
    }
};

inline Vec4 operator*(const Mat4& m, Vec4 a) {
    Vec4 r;
    for (int i = 0; i < 4; ++i) {
        double s = 0.0;
        for (int j = 0; j < 4; ++j) s += m(i, j) * a[j];
        r[i] = s;
    }
    return r;
}

inline Mat4 operator*(const Mat4& a, const Mat4& b) {
    Mat4 r;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
            r(i, j) = s;
        }
    return r;
}

inline Mat4 transpose(const Mat4& a) {
    Mat4 r;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) r(i, j) = a(j, i);
    return r;
}

inline double minkowski(int mu) { return mu == 0 ? -1.0 : 1.0; }

// Lorentz boost by velocity l, |l| < 1:
//   (L x)^0 = gamma (x^0 - l.x),  (L x)^j = gamma (-l^j x^0 + (P_l x)^j) + (P_l^perp x)^j
Mat4 lorentz_boost(Vec3 l);

// Inverse of a Lorentz matrix via the isometry property: (L^-1)^mu_nu = L_nu^mu.
Mat4 lorentz_inverse(const Mat4& L);

// Checks L^T eta L = eta, det L = 1, L^0_0 > 0 within tol.
bool is_proper_orthochronous(const Mat4& L, double tol);

Mat4 inverse4(const Mat4& a);
double det4(const Mat4& a);

}  // namespace gravglue
