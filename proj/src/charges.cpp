#include "gravglue/charges.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "gravglue/calculus.hpp"
#include "gravglue/interp.hpp"
#include "gravglue/parallel.hpp"

namespace gravglue {

namespace {

// Charge surface integrands in (h, pi) variables. These are algebraically
// identical to the g-form (d_i g_ij - d_j g_ii = d_i h_ij pointwise):
//   E   : (1/2) (div h)_j nu^j
//   C_k : (1/2) [ x'_k (div h)_j nu^j - h_kj nu^j ]
//   P_i : pi_ij nu^j
//   J_k : pi_ij (e_k x x')^i nu^j
struct ChargeFields {
    TensorField div_h;  // vector, (div h)_j = sum_i D_i h_ij
    const TensorField* h;
    const TensorField* pi;
};

ChargeFields make_charge_fields(const HPiPair& pair) {
    const Grid& grid = pair.h.grid();
    TensorField dh[3];
    for (int a = 0; a < 3; ++a) dh[a] = finite_diff(pair.h, a + 1, 1);
    TensorField div_h(grid, Rank::vector);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int i = 0; i < 3; ++i) s += dh[i].sym(i, j, p);
            div_h.at(j, p) = s;
        }
    });
    return {div_h, &pair.h, &pair.pi};
}

}  // namespace

ChargeVector charges_averaged(const HPiPair& pair, double r, Vec3 center) {
    // Compatible quadrature: the radial weight eta_r nu_i enters as the
    // discrete gradient of the sampled cumulative profile,
    //   E[A_r]  = 1/2 < D_i X_r, w_i >,         w_j = sum_i D_i h_ij,
    //   P_m     =     < D_i X_r, pi_im >,
    //   C_k     = 1/2 < D_i (X_r x'_k), w_i >,
    //   J_m     =     < D_i (X_r Y_m^j), pi_ij >,
    // with X_r(s) the cumulative of eta_r. These are 4th-order consistent
    // discretizations of the averaged surface charges, and they make the
    // conservation identity of conservation_defect() telescope exactly
    // through discrete summation by parts.
    const Grid& grid = pair.h.grid();
    // the weight support B_{2r}(center) must stay clear of the boundary
    // stencil layers (5 cells) for the summation-by-parts structure to hold
    double margin = 5.0 * grid.h;
    for (int a = 0; a < 3; ++a) {
        require(center[a] - 2.0 * r >= grid.origin[a] + margin - 1e-12 &&
                    center[a] + 2.0 * r <= grid.origin[a] + grid.n * grid.h - margin + 1e-12,
                "out-of-domain", "averaging annulus too close to the grid box boundary");
    }
    ChargeFields f = make_charge_fields(pair);
    const AveragingProfile& prof = averaging_profile();

    // cumulative minus one: compactly supported in B_{2r}, same gradient
    TensorField cum(grid, Rank::scalar);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        cum.at(0, p) = prof.cumulative(norm(grid.point(p) - center) / r) - 1.0;
    });

    // weight fields: cum, cum * x'_k, cum * Y_m^j
    TensorField cum_x(grid, Rank::vector);
    TensorField cum_y[3] = {TensorField(grid, Rank::vector), TensorField(grid, Rank::vector),
                            TensorField(grid, Rank::vector)};
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        Vec3 xp = grid.point(p) - center;
        double c = cum.at(0, p);
        for (int k = 0; k < 3; ++k) cum_x.at(k, p) = c * xp[k];
        for (int m = 0; m < 3; ++m) {
            Vec3 em{m == 0 ? 1.0 : 0.0, m == 1 ? 1.0 : 0.0, m == 2 ? 1.0 : 0.0};
            Vec3 y = cross(em, xp);
            for (int j = 0; j < 3; ++j) cum_y[m].at(j, p) = c * y[j];
        }
    });

    TensorField dcum[3];
    for (int a = 0; a < 3; ++a) dcum[a] = finite_diff(cum, a + 1, 1);
    TensorField dcum_x[3];
    for (int a = 0; a < 3; ++a) dcum_x[a] = finite_diff(cum_x, a + 1, 1);
    TensorField dcum_y[3][3];
    for (int m = 0; m < 3; ++m)
        for (int a = 0; a < 3; ++a) dcum_y[m][a] = finite_diff(cum_y[m], a + 1, 1);

    ChargeVector q;
    double vol = grid.cell_volume();
    q[0] = 0.5 * vol * parallel_sum(grid.num_points(), [&](std::int64_t p) {
               double s = 0.0;
               for (int i = 0; i < 3; ++i) s += dcum[i].at(0, p) * f.div_h.at(i, p);
               return s;
           });
    for (int m = 0; m < 3; ++m)
        q[1 + m] = vol * parallel_sum(grid.num_points(), [&](std::int64_t p) {
                       double s = 0.0;
                       for (int i = 0; i < 3; ++i)
                           s += dcum[i].at(0, p) * f.pi->sym(i, m, p);
                       return s;
                   });
    for (int k = 0; k < 3; ++k)
        q[4 + k] = 0.5 * vol * parallel_sum(grid.num_points(), [&](std::int64_t p) {
                       double s = 0.0;
                       for (int i = 0; i < 3; ++i)
                           s += dcum_x[i].at(k, p) * f.div_h.at(i, p);
                       return s;
                   });
    for (int m = 0; m < 3; ++m)
        q[7 + m] = vol * parallel_sum(grid.num_points(), [&](std::int64_t p) {
                       double s = 0.0;
                       for (int i = 0; i < 3; ++i)
                           for (int j = 0; j < 3; ++j)
                               s += dcum_y[m][i].at(j, p) * f.pi->sym(i, j, p);
                       return s;
                   });
    return q;
}

ChargeVector charges_averaged(const InitialDataSet& data, double r, Vec3 center) {
    return charges_averaged(gk_to_hpi(data), r, center);
}

ChargeVector charges_sphere(const InitialDataSet& data, double r, Vec3 center, int lat_points) {
    HPiPair pair = gk_to_hpi(data);
    const Grid& grid = pair.h.grid();
    ChargeFields f = make_charge_fields(pair);

    const int L = lat_points;
    const double dtheta = M_PI / L;
    const double dphi = M_PI / L;  // 2L azimuthal points over 2 pi

    ChargeVector q;
    for (int a = 0; a < L; ++a) {
        double theta = (a + 0.5) * dtheta;
        for (int b = 0; b < 2 * L; ++b) {
            double phi = (b + 0.5) * dphi;
            Vec3 nu{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                    std::cos(theta)};
            Vec3 x = center + r * nu;
            require(in_sample_hull(grid, x), "out-of-domain", "sphere exits the grid box");
            // interpolate h, pi, div_h at x
            double h[6], pi[6], divh[3];
            for (int c = 0; c < 6; ++c) {
                h[c] = tricubic(*f.h, c, x);
                pi[c] = tricubic(*f.pi, c, x);
            }
            for (int c = 0; c < 3; ++c) divh[c] = tricubic(f.div_h, c, x);

            double dS = r * r * std::sin(theta) * dtheta * dphi;
            double divh_nu = divh[0] * nu[0] + divh[1] * nu[1] + divh[2] * nu[2];
            q[0] += 0.5 * divh_nu * dS;
            Vec3 xp = r * nu;
            for (int i = 0; i < 3; ++i) {
                double s = 0.0;
                for (int j = 0; j < 3; ++j) s += pi[sym2_index(i, j)] * nu[j];
                q[1 + i] += s * dS;
            }
            for (int k = 0; k < 3; ++k) {
                double hnu = 0.0;
                for (int j = 0; j < 3; ++j) hnu += h[sym2_index(k, j)] * nu[j];
                q[4 + k] += 0.5 * (xp[k] * divh_nu - hnu) * dS;
            }
            for (int k = 0; k < 3; ++k) {
                Vec3 ek{k == 0 ? 1.0 : 0.0, k == 1 ? 1.0 : 0.0, k == 2 ? 1.0 : 0.0};
                Vec3 y = cross(ek, xp);
                double s = 0.0;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) s += pi[sym2_index(i, j)] * y[i] * nu[j];
                q[7 + k] += s * dS;
            }
        }
    }
    return q;
}

double ConservationDefect::max_abs() const {
    double m = 0.0;
    for (double v : energy_center) m = std::max(m, std::abs(v));
    for (double v : momentum_angular) m = std::max(m, std::abs(v));
    return m;
}

ConservationDefect conservation_defect(const HPiPair& pair, double r0, double r1) {
    const Grid& grid = pair.h.grid();
    ChargeVector q0 = charges_averaged(pair, r0);
    ChargeVector q1 = charges_averaged(pair, r1);

    ScalarVectorPair pp = principal_part(pair);
    TransitionProfile chi(r0, r1);

    auto vol_integral = [&](const std::function<double(std::int64_t, Vec3)>& f) {
        double s = parallel_sum(grid.num_points(), [&](std::int64_t p) {
            Vec3 x = grid.point(p);
            double w = chi.value(norm(x));
            if (w == 0.0) return 0.0;
            return w * f(p, x);
        });
        return s * grid.cell_volume();
    };

    ConservationDefect d{};
    // (E, C) rows against (1, x_k)
    d.energy_center[0] =
        q1[0] - q0[0] - vol_integral([&](std::int64_t p, Vec3) { return 0.5 * pp.scalar_part.at(0, p); });
    for (int k = 0; k < 3; ++k)
        d.energy_center[1 + k] = q1[4 + k] - q0[4 + k] -
                                 vol_integral([&](std::int64_t p, Vec3 x) {
                                     return 0.5 * pp.scalar_part.at(0, p) * x[k];
                                 });
    // (P, J) rows against (e_m, Y_m)
    for (int m = 0; m < 3; ++m)
        d.momentum_angular[m] = q1[1 + m] - q0[1 + m] -
                                vol_integral([&](std::int64_t p, Vec3) {
                                    return pp.vector_part.at(m, p);
                                });
    for (int m = 0; m < 3; ++m) {
        Vec3 em{m == 0 ? 1.0 : 0.0, m == 1 ? 1.0 : 0.0, m == 2 ? 1.0 : 0.0};
        d.momentum_angular[3 + m] =
            q1[7 + m] - q0[7 + m] - vol_integral([&](std::int64_t p, Vec3 x) {
                Vec3 y = cross(em, x);
                double s = 0.0;
                for (int j = 0; j < 3; ++j) s += pp.vector_part.at(j, p) * y[j];
                return s;
            });
    }
    return d;
}

ChargeVector lorentz_transform_charges(const ChargeVector& q, const Mat4& lambda, Vec4 xi) {
    require(is_proper_orthochronous(lambda, 1e-10), "bad-isometry",
            "matrix is not proper orthochronous Lorentz");
    // mixed(mu, mu') = Lambda_mu^{mu'} = (Lambda^{-1})^{mu'}_mu
    Mat4 linv = lorentz_inverse(lambda);
    auto mixed = [&](int mu, int mup) { return linv(mup, mu); };

    double P[4] = {q[0], q[1], q[2], q[3]};
    double J[4][4] = {};
    for (int i = 0; i < 3; ++i) {
        J[i + 1][0] = q[4 + i];  // J_{i0} = C_i
        J[0][i + 1] = -q[4 + i];
    }
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
            double s = 0.0;
            for (int i = 0; i < 3; ++i) s += levi_civita(i, j, k) * q[7 + i];
            J[j + 1][k + 1] = s;
        }

    double xi_low[4];
    for (int mu = 0; mu < 4; ++mu) xi_low[mu] = minkowski(mu) * xi[mu];

    double Pp[4] = {};
    for (int mu = 0; mu < 4; ++mu)
        for (int mup = 0; mup < 4; ++mup) Pp[mu] += mixed(mu, mup) * P[mup];

    double Jp[4][4] = {};
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu) {
            double s = 0.0;
            for (int mup = 0; mup < 4; ++mup)
                for (int nup = 0; nup < 4; ++nup)
                    s += mixed(mu, mup) * mixed(nu, nup) * J[mup][nup];
            double lp_nu = 0.0, lp_mu = 0.0;
            for (int t = 0; t < 4; ++t) {
                lp_nu += mixed(nu, t) * P[t];
                lp_mu += mixed(mu, t) * P[t];
            }
            Jp[mu][nu] = s + xi_low[mu] * lp_nu - xi_low[nu] * lp_mu;
        }

    ChargeVector out;
    out[0] = Pp[0];
    for (int i = 0; i < 3; ++i) out[1 + i] = Pp[i + 1];
    for (int i = 0; i < 3; ++i) out[4 + i] = Jp[i + 1][0];
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) s += 0.5 * levi_civita(i, j, k) * Jp[j + 1][k + 1];
        out[7 + i] = s;
    }
    return out;
}

AdmExtrapolation adm_extrapolate(const std::vector<double>& radii,
                                 const std::vector<ChargeVector>& measured) {
    require(radii.size() >= 3 && radii.size() == measured.size(), "bad-input",
            "need at least 3 radii");
    AdmExtrapolation out;
    out.radii = radii;
    out.per_radius = measured;

    auto fit_component = [&](int comp, double& value, double& exponent, bool& identifiable) {
        const std::size_t n = radii.size();
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(measured[i][comp]));
        double spread = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            spread = std::max(spread, std::abs(measured[i][comp] - measured[0][comp]));
        if (spread <= 1e-12 * std::max(scale, 1e-300) || scale == 0.0) {
            value = measured[n - 1][comp];
            exponent = 0.0;
            identifiable = false;
            return;
        }
        // linear LS in (value, c) at fixed p; scan then golden-section refine
        auto residual_at = [&](double p, double* v_out, double* c_out) {
            double s11 = static_cast<double>(n), s12 = 0.0, s22 = 0.0, b1 = 0.0, b2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double w = std::pow(radii[i], -p);
                s12 += w;
                s22 += w * w;
                b1 += measured[i][comp];
                b2 += w * measured[i][comp];
            }
            double det = s11 * s22 - s12 * s12;
            double v = (s22 * b1 - s12 * b2) / det;
            double c = (s11 * b2 - s12 * b1) / det;
            double r2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double e = measured[i][comp] - v - c * std::pow(radii[i], -p);
                r2 += e * e;
            }
            if (v_out) *v_out = v;
            if (c_out) *c_out = c;
            return r2;
        };
        double best_p = 1.0, best_r = 1e300;
        for (double p = 0.25; p <= 4.0 + 1e-9; p += 0.05) {
            double r2 = residual_at(p, nullptr, nullptr);
            if (r2 < best_r) {
                best_r = r2;
                best_p = p;
            }
        }
        double lo = std::max(0.05, best_p - 0.05), hi = best_p + 0.05;
        for (int it = 0; it < 60; ++it) {
            double m1 = lo + 0.382 * (hi - lo), m2 = lo + 0.618 * (hi - lo);
            if (residual_at(m1, nullptr, nullptr) < residual_at(m2, nullptr, nullptr)) hi = m2;
            else lo = m1;
        }
        double p = 0.5 * (lo + hi), v, c;
        double r2 = residual_at(p, &v, &c);
        require(std::sqrt(r2 / n) <= 0.2 * std::max(scale, 1e-300), "no-convergence",
                "power-law fit residual too large");
        value = v;
        exponent = p;
        identifiable = true;
    };

    bool id = true;
    fit_component(0, out.q_infinity[0], out.decay_exponent, id);
    out.exponent_identifiable = id;
    for (int c = 1; c <= 3; ++c) {
        double p;
        bool id2;
        fit_component(c, out.q_infinity[c], p, id2);
    }
    for (int c = 4; c < 10; ++c) out.q_infinity[c] = measured.back()[c];
    return out;
}

}  // namespace gravglue
