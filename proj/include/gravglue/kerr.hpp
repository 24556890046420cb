#pragma once

#include <functional>

#include "gravglue/charges.hpp"
#include "gravglue/grid.hpp"

namespace gravglue {

// =============================================================================
// Kerr-Schild exterior data. The spacetime metric is
//   g_{mu nu} = eta_{mu nu} + 2 M r^3 / (r^4 + a^2 (x^3)^2) k_mu k_nu,
//   k = dx^0 + (r x^1 + a x^2)/(r^2+a^2) dx^1 + (r x^2 - a x^1)/(r^2+a^2) dx^2
//       + x^3/r dx^3,
// with r(x) the positive root of r^4 - r^2 (|x|^2 - a^2) - a^2 (x^3)^2 = 0.
// Metric derivatives are analytic (the slice is stationary: d_0 g = 0).
// =============================================================================

struct KerrParams {
    double mass = 0.0;  // M
    double spin = 0.0;  // a
};

struct PoincareParams {
    Vec3 boost_velocity;           // l, |l| < 1
    Mat3 rotation = Mat3::identity();
    Vec3 translation;              // spatial xi

    Mat4 boost_matrix() const { return lorentz_boost(boost_velocity); }
};

struct KerrSchildPoint {
    Mat4 g;
    Mat4 dg[4];  // dg[lambda](mu,nu) = d_lambda g_{mu nu}; dg[0] = 0
};

double kerr_radial(const KerrParams& params, Vec3 x);
double kerr_partial_a_r(const KerrParams& params, Vec3 x);  // d r / d a, for tests

// Throws "near-singularity" when r(x) < max(2M, 2|a|).
KerrSchildPoint kerr_schild_metric(const KerrParams& params, Vec4 x);

// Initial data induced on the slice {y^0 = 0} of y = Lambda (R x + xi):
//   g_ij = g^y_ij,  k_ij = -(g^-1)^{0 mu} / (2 sqrt(-(g^-1)^{00}))
//                          (d_mu g_ij - d_i g_{j mu} - d_j g_{i mu}),
// all in y-coordinates, pulled back through the Poincare map.
InitialDataSet kerr_induced_data(const KerrParams& params, const PoincareParams& pose,
                                 const Grid& grid);

// Calibration constant c0 = E_measured / M for small-M Schwarzschild data,
// measured once and cached (resolves the 16 pi normalization ambiguity).
double kerr_calibration_c0();

// Charge-parametrized family member per the closed-form inversion:
//   M = c0^-1 sgn(E) sqrt(E^2 - |P|^2), l = P/E, then a, xi, R from the
//   un-boosted charges. Requires E > |P| ("not-in-E" otherwise).
struct KerrFamilyMember {
    KerrParams params;
    PoincareParams pose;
};
KerrFamilyMember kerr_family_from_charges(const ChargeVector& q);

// =============================================================================
// Newton reparametrization of an annular family so that measured charges equal
// the parameter: given raw Q' -> data, solves measured(Q'') = Q_target.
// =============================================================================
using AnnularFamily = std::function<InitialDataSet(const ChargeVector&)>;

class ReparametrizedFamily {
  public:
    ReparametrizedFamily(AnnularFamily raw, double annulus_radius, ChargeVector seed,
                         double ball_radius);

    // data whose measured charges on A_r equal `target` within 1e-3 * rho
    InitialDataSet at(const ChargeVector& target) const;
    ChargeVector backing_parameter(const ChargeVector& target) const;

    ChargeVector measured(const ChargeVector& raw_parameter) const;
    const double* jacobian() const { return &jac_[0][0]; }  // 10x10 row-major
    double annulus_radius() const { return annulus_r_; }

  private:
    ChargeVector solve(const ChargeVector& target) const;

    AnnularFamily raw_;
    double annulus_r_;
    ChargeVector seed_;
    double rho_;
    double jac_[10][10] = {};
};

// solve a 10x10 system in place (partial pivoting); used by the Newton loops
void solve10(double a[10][10], double b[10]);

}  // namespace gravglue
