#pragma once

#include <memory>
#include <vector>

#include "gravglue/geometry.hpp"

namespace gravglue {

// =============================================================================
// The fixed smooth compactly supported profile family. In 1D:
//   psi(u) = exp(-1/(1-u^2)) for |u|<1, 0 otherwise
// All mollifiers and averaging kernels are normalized rescalings of psi.
// =============================================================================

inline double bump_psi(double u) {
    double u2 = u * u;
    if (u2 >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - u2));
}

inline double bump_psi_deriv(double u) {
    double u2 = u * u;
    if (u2 >= 1.0) return 0.0;
    double d = 1.0 - u2;
    return bump_psi(u) * (-2.0 * u / (d * d));
}

inline double bump_psi_deriv2(double u) {
    double u2 = u * u;
    if (u2 >= 1.0) return 0.0;
    double d = 1.0 - u2;
    double a = -2.0 * u / (d * d);
    return bump_psi(u) * (a * a - 2.0 / (d * d) - 8.0 * u2 / (d * d * d));
}

// Polynomial bump (1-s^2)^6 on |s|<1: C^5 at the edge with tame derivatives,
// the right profile for differentiated test sources (the exponential bump's
// derivatives spike near the support boundary and are unresolvable on coarse
// grids).
inline double poly_bump(double s) {
    double u = 1.0 - s * s;
    if (u <= 0.0) return 0.0;
    double u2 = u * u;
    return u2 * u2 * u2;
}

inline double poly_bump_deriv(double s) {
    double u = 1.0 - s * s;
    if (u <= 0.0) return 0.0;
    double u2 = u * u;
    return -12.0 * s * u2 * u2 * u;
}

inline double poly_bump_deriv2(double s) {
    double u = 1.0 - s * s;
    if (u <= 0.0) return 0.0;
    double u2 = u * u;
    return -12.0 * u2 * u2 * u + 120.0 * s * s * u2 * u2;
}

inline double poly_radial_bump(Vec3 x, Vec3 c, double R) { return poly_bump(norm(x - c) / R); }

inline Vec3 poly_radial_bump_grad(Vec3 x, Vec3 c, double R) {
    Vec3 u = x - c;
    double un = norm(u);
    if (un < 1e-14 || un >= R) return Vec3{};
    return (poly_bump_deriv(un / R) / (R * un)) * u;
}

inline void poly_radial_bump_hessian(Vec3 x, Vec3 c, double R, double hess[3][3]) {
    Vec3 u = x - c;
    double un = norm(u);
    if (un >= R) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) hess[i][j] = 0.0;
        return;
    }
    if (un < 1e-12) {
        double v = poly_bump_deriv2(0.0) / (R * R);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) hess[i][j] = (i == j) ? v : 0.0;
        return;
    }
    double s = un / R;
    double p1 = poly_bump_deriv(s), p2 = poly_bump_deriv2(s);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double uij = u[i] * u[j] / (un * un);
            hess[i][j] = p2 * uij / (R * R) + p1 * ((i == j ? 1.0 : 0.0) - uij) / (R * un);
        }
}

// radial bump B(x) = psi(|x - c|/R): gradient and Hessian, smooth at x = c
inline double radial_bump(Vec3 x, Vec3 c, double R) { return bump_psi(norm(x - c) / R); }

inline Vec3 radial_bump_grad(Vec3 x, Vec3 c, double R) {
    Vec3 u = x - c;
    double un = norm(u);
    if (un < 1e-14 || un >= R) return Vec3{};
    return (bump_psi_deriv(un / R) / (R * un)) * u;
}

inline void radial_bump_hessian(Vec3 x, Vec3 c, double R, double hess[3][3]) {
    Vec3 u = x - c;
    double un = norm(u);
    if (un >= R) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) hess[i][j] = 0.0;
        return;
    }
    if (un < 1e-12) {
        double v = bump_psi_deriv2(0.0) / (R * R);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) hess[i][j] = (i == j) ? v : 0.0;
        return;
    }
    double s = un / R;
    double p1 = bump_psi_deriv(s), p2 = bump_psi_deriv2(s);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double uij = u[i] * u[j] / (un * un);
            hess[i][j] = p2 * uij / (R * R) +
                         p1 * ((i == j ? 1.0 : 0.0) - uij) / (R * un);
        }
}

// integral of psi over [-1,1], computed once
double bump_psi_mass();

// =============================================================================
// MollifierSpec: eta(z) = c * psi(|z - center|/radius) on its ball, with
// int eta dx = 1. The normalization is computed by radial quadrature, not on
// any grid, so it is resolution independent.
// =============================================================================
struct MollifierSpec {
    Vec3 center;
    double radius = 0.0;
    double norm_const = 0.0;  // c

    MollifierSpec() = default;
    MollifierSpec(Vec3 center_, double radius_);

    double value(Vec3 z) const {
        double u2 = norm2(z - center) / (radius * radius);
        if (u2 >= 1.0) return 0.0;
        return norm_const * std::exp(-1.0 / (1.0 - u2));
    }
    Vec3 gradient(Vec3 z) const {
        Vec3 d = z - center;
        double u2 = norm2(d) / (radius * radius);
        if (u2 >= 1.0) return Vec3{};
        double e = 1.0 - u2;
        double f = norm_const * std::exp(-1.0 / e) * (-2.0 / (radius * radius * e * e));
        return f * d;
    }
    // quadrature check of int eta = 1 (used by the construction self-test)
    double quadrature_mass(int radial_nodes = 64) const;
};

// =============================================================================
// AveragingProfile: 1D eta on (1,2) with unit mass, plus the scaled family
// eta_r(s) = r^-1 eta(s/r) supported in (r, 2r).
// =============================================================================
class AveragingProfile {
  public:
    AveragingProfile();

    double eta(double s) const;            // base profile, supp (1,2)
    double eta_scaled(double r, double s) const { return eta(s / r) / r; }
    double cumulative(double s) const;     // int_{-inf}^s eta, 0 below 1, 1 above 2
    double mass_check() const;             // quadrature of int eta

  private:
    double norm_ = 0.0;
    std::vector<double> cdf_;              // cumulative table on [1,2]
    int table_n_ = 0;
};

const AveragingProfile& averaging_profile();

// TransitionProfile: chi_{r0,r1}(s) = int_{-inf}^s (eta_{r0} - eta_{r1});
// equals 0 for s <= r0, 1 on [2 r0, r1], 0 for s >= 2 r1.
struct TransitionProfile {
    double r0 = 0.0, r1 = 0.0;

    TransitionProfile(double r0_, double r1_);
    double value(double s) const;
};

}  // namespace gravglue
