#include "gravglue/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace gravglue {

Mat3 rotation_between(Vec3 a, Vec3 b) {
    a = normalized(a);
    b = normalized(b);
    Vec3 w = cross(a, b);
    double c = dot(a, b);
    double s2 = norm2(w);
    if (s2 < 1e-28) {
        if (c > 0.0) return Mat3::identity();
        // antiparallel: rotate pi about any axis orthogonal to a
        Vec3 axis = std::abs(a[0]) < 0.9 ? cross(a, Vec3{1, 0, 0}) : cross(a, Vec3{0, 1, 0});
        axis = normalized(axis);
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = 2.0 * axis[i] * axis[j] - (i == j ? 1.0 : 0.0);
        return r;
    }
    // Rodrigues with K = [w]_x: R = I + K + K^2 (1-c)/s^2
    Mat3 k;
    k(0, 1) = -w[2];
    k(0, 2) = w[1];
    k(1, 0) = w[2];
    k(1, 2) = -w[0];
    k(2, 0) = -w[1];
    k(2, 1) = w[0];
    Mat3 k2 = k * k;
    Mat3 r = Mat3::identity();
    double f = (1.0 - c) / s2;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) += k(i, j) + f * k2(i, j);
    return r;
}

Mat4 lorentz_boost(Vec3 l) {
    double b2 = norm2(l);
    Mat4 r = Mat4::identity();
    if (b2 < 1e-300) return r;
    double gamma = 1.0 / std::sqrt(1.0 - b2);
    r(0, 0) = gamma;
    for (int j = 0; j < 3; ++j) {
        r(0, j + 1) = -gamma * l[j];
        r(j + 1, 0) = -gamma * l[j];
        for (int k = 0; k < 3; ++k)
            r(j + 1, k + 1) = (j == k ? 1.0 : 0.0) + (gamma - 1.0) * l[j] * l[k] / b2;
    }
    return r;
}

Mat4 lorentz_inverse(const Mat4& L) {
    Mat4 r;
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu)
            r(mu, nu) = minkowski(nu) * minkowski(mu) * L(nu, mu);
    return r;
}

bool is_proper_orthochronous(const Mat4& L, double tol) {
    // L^T eta L = eta
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            double s = 0.0;
            for (int m = 0; m < 4; ++m) s += L(m, a) * minkowski(m) * L(m, b);
            double target = (a == b) ? minkowski(a) : 0.0;
            if (std::abs(s - target) > tol) return false;
        }
    if (std::abs(det4(L) - 1.0) > 10 * tol) return false;
    return L(0, 0) > 0.0;
}

double det4(const Mat4& a) {
    // cofactor expansion along row 0
    double d = 0.0;
    for (int c = 0; c < 4; ++c) {
        Mat3 sub;
        for (int i = 1; i < 4; ++i) {
            int jj = 0;
            for (int j = 0; j < 4; ++j) {
                if (j == c) continue;
                sub(i - 1, jj++) = a(i, j);
            }
        }
        d += ((c % 2 == 0) ? 1.0 : -1.0) * a(0, c) * det3(sub);
    }
    return d;
}

Mat4 inverse4(const Mat4& a) {
    // Gauss-Jordan with partial pivoting; 4x4 is small enough.
    double aug[4][8];
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            aug[i][j] = a(i, j);
            aug[i][j + 4] = (i == j) ? 1.0 : 0.0;
        }
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(aug[r][col]) > std::abs(aug[piv][col])) piv = r;
        if (piv != col)
            for (int j = 0; j < 8; ++j) std::swap(aug[piv][j], aug[col][j]);
        double d = aug[col][col];
        for (int j = 0; j < 8; ++j) aug[col][j] /= d;
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            double f = aug[r][col];
            if (f == 0.0) continue;
            for (int j = 0; j < 8; ++j) aug[r][j] -= f * aug[col][j];
        }
    }
    Mat4 inv;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) inv(i, j) = aug[i][j + 4];
    return inv;
}

}  // namespace gravglue
