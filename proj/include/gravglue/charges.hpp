#pragma once

#include <array>
#include <vector>

#include "gravglue/constraints.hpp"
#include "gravglue/geometry.hpp"
#include "gravglue/grid.hpp"
#include "gravglue/profiles.hpp"

namespace gravglue {

// =============================================================================
// The ten charges Q = (E, P1..3, C1..3, J1..3).
// =============================================================================
struct ChargeVector {
    double q[10] = {};

    double& operator[](int i) { return q[i]; }
    double operator[](int i) const { return q[i]; }

    double& energy() { return q[0]; }
    double energy() const { return q[0]; }
    Vec3 momentum() const { return {q[1], q[2], q[3]}; }
    Vec3 center() const { return {q[4], q[5], q[6]}; }
    Vec3 angular() const { return {q[7], q[8], q[9]}; }
    void set_momentum(Vec3 v) { q[1] = v[0]; q[2] = v[1]; q[3] = v[2]; }
    void set_center(Vec3 v) { q[4] = v[0]; q[5] = v[1]; q[6] = v[2]; }
    void set_angular(Vec3 v) { q[7] = v[0]; q[8] = v[1]; q[9] = v[2]; }

    double max_abs() const {
        double m = 0.0;
        for (double v : q) m = std::max(m, std::abs(v));
        return m;
    }
};

inline ChargeVector operator+(ChargeVector a, const ChargeVector& b) {
    for (int i = 0; i < 10; ++i) a[i] += b[i];
    return a;
}
inline ChargeVector operator-(ChargeVector a, const ChargeVector& b) {
    for (int i = 0; i < 10; ++i) a[i] -= b[i];
    return a;
}
inline ChargeVector operator*(double s, ChargeVector a) {
    for (int i = 0; i < 10; ++i) a[i] *= s;
    return a;
}

// Averaged charges on the annulus A_r(xi): each charge is a single volume
// integral int eta_r(|x - xi|) (surface integrand)(x) dx, with derivatives by
// finite differences. This is the primary diagnostic.
ChargeVector charges_averaged(const InitialDataSet& data, double r, Vec3 center = Vec3{});
ChargeVector charges_averaged(const HPiPair& pair, double r, Vec3 center = Vec3{});

// Sphere charges at radius r: lat-long surface quadrature (L=64 by default)
// with tricubic interpolation of the integrand fields.
ChargeVector charges_sphere(const InitialDataSet& data, double r, Vec3 center = Vec3{},
                            int lat_points = 64);

// Conservation-law defect: Q[A_{r1}] - Q[A_{r0}] minus the volume integrals
//   int chi_{r0,r1} (1/2) dd h (1, x)  and  int chi_{r0,r1} (d pi) (e, Y).
// Vanishes to quadrature error for ANY smooth pair (by-parts identity).
struct ConservationDefect {
    std::array<double, 4> energy_center;   // E, C1..3 rows
    std::array<double, 6> momentum_angular;  // P1..3, J1..3 rows
    double max_abs() const;
};
ConservationDefect conservation_defect(const HPiPair& pair, double r0, double r1);

// Poincare transformation of the charges: P'_mu = L_mu^mu' P_mu',
// J'_{mu nu} = L L J + xi_mu L P - xi_nu L P, indices moved with eta.
ChargeVector lorentz_transform_charges(const ChargeVector& q, const Mat4& lambda, Vec4 xi);

// Least-squares fit E(r) = E_inf + c r^-p over >= 3 radii.
struct AdmExtrapolation {
    ChargeVector q_infinity;        // E, P extrapolated; C, J copied from largest radius
    double decay_exponent = 0.0;    // fitted p for the energy
    bool exponent_identifiable = true;
    std::vector<double> radii;
    std::vector<ChargeVector> per_radius;
};
AdmExtrapolation adm_extrapolate(const std::vector<double>& radii,
                                 const std::vector<ChargeVector>& measured);

}  // namespace gravglue
