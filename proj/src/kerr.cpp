#include "gravglue/kerr.hpp"

#include <cmath>
#include <mutex>

#include "gravglue/parallel.hpp"

namespace gravglue {

double kerr_radial(const KerrParams& params, Vec3 x) {
    double a = params.spin;
    double rho2 = norm2(x) - a * a;
    double z = x[2];
    double disc = std::sqrt(rho2 * rho2 + 4.0 * a * a * z * z);
    return std::sqrt(0.5 * (rho2 + disc));
}

double kerr_partial_a_r(const KerrParams& params, Vec3 x) {
    double a = params.spin;
    double r = kerr_radial(params, x);
    double rho_cyl2 = x[0] * x[0] + x[1] * x[1];
    double r2a2 = r * r + a * a;
    return -a * r * rho_cyl2 / (r2a2 * r2a2 - a * a * rho_cyl2);
}

KerrSchildPoint kerr_schild_metric(const KerrParams& params, Vec4 xt) {
    const double M = params.mass, a = params.spin;
    Vec3 x = xt.spatial();
    KerrSchildPoint out;
    out.g = Mat4::identity();
    out.g(0, 0) = -1.0;
    if (M == 0.0) return out;

    double r = kerr_radial(params, x);
    require(r >= std::max(2.0 * std::abs(M), 2.0 * std::abs(a)), "near-singularity",
            "point too close to the Kerr ring singularity");

    double z = x[2];
    double rho2 = norm2(x) - a * a;
    double r2 = r * r;
    double disc = 2.0 * r2 - rho2;  // sqrt(rho2^2 + 4 a^2 z^2) > 0 outside the ring

    // d_i r
    Vec3 dr;
    for (int i = 0; i < 3; ++i)
        dr[i] = (r2 * x[i] + (i == 2 ? a * a * z : 0.0)) / (r * disc);

    double denom = r2 * r2 + a * a * z * z;
    double H = 2.0 * M * r * r2 / denom;
    Vec3 dH;
    for (int i = 0; i < 3; ++i) {
        double ddenom = 4.0 * r * r2 * dr[i] + (i == 2 ? 2.0 * a * a * z : 0.0);
        dH[i] = 2.0 * M * (3.0 * r2 * dr[i] * denom - r * r2 * ddenom) / (denom * denom);
    }

    // The twist is oriented so that spin parameter a > 0 carries angular
    // momentum +c0 M a about +x3 under this code's charge conventions (the
    // measured J flips sign relative to the opposite orientation; the family
    // inversion a = M^-1 |J| needs this one).
    double r2a2 = r2 + a * a;
    double kvec[4];
    kvec[0] = 1.0;
    kvec[1] = (r * x[0] - a * x[1]) / r2a2;
    kvec[2] = (r * x[1] + a * x[0]) / r2a2;
    kvec[3] = z / r;

    double dk[3][4] = {};  // dk[i][mu] = d_i k_mu
    for (int i = 0; i < 3; ++i) {
        double d1 = (i == 0 ? 1.0 : 0.0), d2 = (i == 1 ? 1.0 : 0.0), d3 = (i == 2 ? 1.0 : 0.0);
        dk[i][0] = 0.0;
        dk[i][1] = ((dr[i] * x[0] + r * d1 - a * d2) * r2a2 -
                    (r * x[0] - a * x[1]) * 2.0 * r * dr[i]) /
                   (r2a2 * r2a2);
        dk[i][2] = ((dr[i] * x[1] + r * d2 + a * d1) * r2a2 -
                    (r * x[1] + a * x[0]) * 2.0 * r * dr[i]) /
                   (r2a2 * r2a2);
        dk[i][3] = d3 / r - z * dr[i] / r2;
    }

    for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu) {
            out.g(mu, nu) += H * kvec[mu] * kvec[nu];
            for (int i = 0; i < 3; ++i)
                out.dg[i + 1](mu, nu) = dH[i] * kvec[mu] * kvec[nu] +
                                        H * (dk[i][mu] * kvec[nu] + kvec[mu] * dk[i][nu]);
        }
    return out;
}

InitialDataSet kerr_induced_data(const KerrParams& params, const PoincareParams& pose,
                                 const Grid& grid) {
    // x = R^T (Lambda^-1 y - xi_hat)
    Mat4 linv = lorentz_inverse(pose.boost_matrix());
    Mat4 rot4 = Mat4::identity();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rot4(i + 1, j + 1) = pose.rotation(i, j);
    Mat4 a_map = transpose(rot4) * linv;  // dx/dy
    Vec4 xi_hat(0.0, pose.translation);
    Vec4 shift = transpose(rot4) * Vec4{-xi_hat[0], -xi_hat[1], -xi_hat[2], -xi_hat[3]};

    InitialDataSet out{TensorField(grid, Rank::sym2), TensorField(grid, Rank::sym2)};
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        Vec4 y(0.0, grid.point(p));
        Vec4 x = a_map * y + shift;
        KerrSchildPoint ks = kerr_schild_metric(params, x);

        // pull back: g^y_{mu nu} = A^al_mu A^be_nu g_{al be},
        //            d^y_lam g^y = A^ga_lam A A d g
        Mat4 gy;
        Mat4 dgy[4];
        for (int mu = 0; mu < 4; ++mu)
            for (int nu = mu; nu < 4; ++nu) {
                double s = 0.0;
                for (int al = 0; al < 4; ++al)
                    for (int be = 0; be < 4; ++be)
                        s += a_map(al, mu) * a_map(be, nu) * ks.g(al, be);
                gy(mu, nu) = s;
                gy(nu, mu) = s;
            }
        for (int lam = 0; lam < 4; ++lam) {
            for (int mu = 0; mu < 4; ++mu)
                for (int nu = mu; nu < 4; ++nu) {
                    double s = 0.0;
                    for (int ga = 0; ga < 4; ++ga) {
                        if (a_map(ga, lam) == 0.0) continue;
                        double t = 0.0;
                        for (int al = 0; al < 4; ++al)
                            for (int be = 0; be < 4; ++be)
                                t += a_map(al, mu) * a_map(be, nu) * ks.dg[ga](al, be);
                        s += a_map(ga, lam) * t;
                    }
                    dgy[lam](mu, nu) = s;
                    dgy[lam](nu, mu) = s;
                }
        }

        Mat4 ginv = inverse4(gy);
        double lapse2 = -ginv(0, 0);
        require(lapse2 > 0.0, "near-singularity", "slice is not spacelike at a grid point");
        double fac = 1.0 / (2.0 * std::sqrt(lapse2));
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                out.g.sym(i, j, p) = gy(i + 1, j + 1);
                double s = 0.0;
                for (int mu = 0; mu < 4; ++mu)
                    s += -ginv(0, mu) *
                         (dgy[mu](i + 1, j + 1) - dgy[i + 1](j + 1, mu) - dgy[j + 1](i + 1, mu));
                out.k.sym(i, j, p) = fac * s;
            }
    });
    return out;
}

double kerr_calibration_c0() {
    static double c0 = 0.0;
    static std::once_flag flag;
    std::call_once(flag, [] {
        const double M = 0.01;
        Grid grid = Grid::centered(32, 72.0);
        InitialDataSet data = kerr_induced_data({M, 0.0}, PoincareParams{}, grid);
        ChargeVector q = charges_averaged(data, 16.0);
        c0 = q.energy() / M;
    });
    return c0;
}

KerrFamilyMember kerr_family_from_charges(const ChargeVector& q) {
    double e = q.energy();
    Vec3 pvec = q.momentum();
    require(std::abs(e) > norm(pvec), "not-in-E", "charges must satisfy |E| > |P|");
    double c0 = kerr_calibration_c0();
    double m = (e >= 0 ? 1.0 : -1.0) * std::sqrt(e * e - norm2(pvec)) / c0;
    Vec3 l = pvec / e;

    // un-boost the charges, then read off a, xi, R in the rest frame
    ChargeVector rest = lorentz_transform_charges(q, lorentz_boost(-1.0 * l), Vec4{});
    Vec3 j_rest = rest.angular();
    Vec3 c_rest = rest.center();

    KerrFamilyMember fam;
    fam.params.mass = m;
    fam.params.spin = norm(j_rest) / (c0 * std::abs(m));
    fam.pose.boost_velocity = l;
    fam.pose.translation = -1.0 / (c0 * m) * c_rest;
    if (norm(j_rest) > 1e-14 * std::abs(e)) {
        fam.pose.rotation = rotation_between(normalized(j_rest), Vec3{0, 0, 1});
    }
    return fam;
}

// =============================================================================
// Newton reparametrization
// =============================================================================

void solve10(double a[10][10], double b[10]) {
    int n = 10;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        require(std::abs(a[piv][col]) > 1e-300, "reparametrization-failed",
                "singular charge Jacobian");
        if (piv != col) {
            for (int j = 0; j < n; ++j) std::swap(a[piv][j], a[col][j]);
            std::swap(b[piv], b[col]);
        }
        for (int r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) a[r][j] -= f * a[col][j];
            b[r] -= f * b[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int j = r + 1; j < n; ++j) s -= a[r][j] * b[j];
        b[r] = s / a[r][r];
    }
}

ReparametrizedFamily::ReparametrizedFamily(AnnularFamily raw, double annulus_radius,
                                           ChargeVector seed, double ball_radius)
    : raw_(std::move(raw)), annulus_r_(annulus_radius), seed_(seed), rho_(ball_radius) {
    // central-difference Jacobian of measured charges at the seed
    double step = 1e-2 * rho_;
    for (int c = 0; c < 10; ++c) {
        ChargeVector qp = seed_, qm = seed_;
        qp[c] += step;
        qm[c] -= step;
        ChargeVector mp = measured(qp), mm = measured(qm);
        for (int r = 0; r < 10; ++r) jac_[r][c] = (mp[r] - mm[r]) / (2.0 * step);
    }
}

ChargeVector ReparametrizedFamily::measured(const ChargeVector& raw_parameter) const {
    InitialDataSet data = raw_(raw_parameter);
    return charges_averaged(data, annulus_r_);
}

ChargeVector ReparametrizedFamily::solve(const ChargeVector& target) const {
    ChargeVector qp = target;  // initial guess: family is nearly parametrized
    double tol = 1e-3 * rho_;
    for (int it = 0; it < 25; ++it) {
        ChargeVector res = measured(qp) - target;
        if (res.max_abs() <= tol) return qp;
        double a[10][10];
        double b[10];
        for (int r = 0; r < 10; ++r) {
            b[r] = res[r];
            for (int c = 0; c < 10; ++c) a[r][c] = jac_[r][c];
        }
        solve10(a, b);
        for (int c = 0; c < 10; ++c) qp[c] -= b[c];
    }
    ChargeVector res = measured(qp) - target;
    if (res.max_abs() <= tol) return qp;
    fail("reparametrization-failed",
         "Newton stagnated; residual " + std::to_string(res.max_abs()));
}

ChargeVector ReparametrizedFamily::backing_parameter(const ChargeVector& target) const {
    return solve(target);
}

InitialDataSet ReparametrizedFamily::at(const ChargeVector& target) const {
    return raw_(solve(target));
}

}  // namespace gravglue
