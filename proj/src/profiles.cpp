#include "gravglue/profiles.hpp"

#include <cmath>

#include "gravglue/errors.hpp"
#include "gravglue/quadrature.hpp"

namespace gravglue {

double bump_psi_mass() {
    static double m = adaptive_simpson([](double u) { return bump_psi(u); }, -1.0, 1.0, 1e-14);
    return m;
}

MollifierSpec::MollifierSpec(Vec3 center_, double radius_) : center(center_), radius(radius_) {
    require(radius > 0.0, "bad-mollifier", "radius must be positive");
    // int_{B_R} psi(|z|/R) dz = 4 pi R^3 int_0^1 psi(u) u^2 du
    static double radial = adaptive_simpson(
        [](double u) { return bump_psi(u) * u * u; }, 0.0, 1.0, 1e-14);
    norm_const = 1.0 / (4.0 * M_PI * radius * radius * radius * radial);
    double mass = quadrature_mass();
    require(std::abs(mass - 1.0) <= 1e-8, "bad-mollifier", "mollifier mass check failed");
}

double MollifierSpec::quadrature_mass(int radial_nodes) const {
    double r3 = radius * radius * radius;
    double v = gl_integrate([&](double u) { return bump_psi(u) * u * u; }, 0.0, 1.0, radial_nodes);
    return norm_const * 4.0 * M_PI * r3 * v;
}

AveragingProfile::AveragingProfile() {
    // base 1D bump on (1,2): eta(s) = psi(2s-3)/norm
    norm_ = 0.5 * bump_psi_mass();
    table_n_ = 4096;
    cdf_.resize(table_n_ + 1);
    // Simpson on a uniform table for the cumulative
    double hstep = 1.0 / table_n_;
    cdf_[0] = 0.0;
    for (int i = 1; i <= table_n_; ++i) {
        double a = 1.0 + (i - 1) * hstep, b = 1.0 + i * hstep;
        double m = 0.5 * (a + b);
        cdf_[i] = cdf_[i - 1] + (b - a) / 6.0 * (eta(a) + 4.0 * eta(m) + eta(b));
    }
    // exact unit mass for the cumulative table
    double total = cdf_[table_n_];
    for (auto& v : cdf_) v /= total;
}

double AveragingProfile::eta(double s) const { return bump_psi(2.0 * s - 3.0) / norm_; }

double AveragingProfile::cumulative(double s) const {
    if (s <= 1.0) return 0.0;
    if (s >= 2.0) return 1.0;
    double u = (s - 1.0) * table_n_;
    int i = static_cast<int>(u);
    if (i >= table_n_) return 1.0;
    double t = u - i;
    return cdf_[i] * (1.0 - t) + cdf_[i + 1] * t;
}

double AveragingProfile::mass_check() const {
    return adaptive_simpson([&](double s) { return eta(s); }, 1.0, 2.0, 1e-12);
}

const AveragingProfile& averaging_profile() {
    static AveragingProfile p;
    return p;
}

TransitionProfile::TransitionProfile(double r0_, double r1_) : r0(r0_), r1(r1_) {
    require(0.0 < r0 && r0 < r1, "bad-transition", "need 0 < r0 < r1");
}

double TransitionProfile::value(double s) const {
    const AveragingProfile& p = averaging_profile();
    return p.cumulative(s / r0) - p.cumulative(s / r1);
}

}  // namespace gravglue
