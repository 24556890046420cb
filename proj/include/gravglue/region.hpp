#pragma once

#include <memory>
#include <vector>

#include "gravglue/geometry.hpp"

namespace gravglue {

// =============================================================================
// Region: exact closed-form membership tests for the domains used everywhere.
//   ball(c, r)          : |x - c| < r
//   annulus(r, xi)      : A_r(xi)  = B_{2r}(xi) \ closed B_r(xi)
//   fat_annulus(r, xi)  : ~A_r(xi) = B_{4r}(xi) \ closed B_{r/2}(xi)
//   cone(omega, theta)  : C_theta(omega), optional apex shift
// plus complement / intersection / union set algebra.
// =============================================================================
class Region {
  public:
    static Region everything();
    static Region ball(Vec3 center, double radius);
    static Region annulus(double r, Vec3 center = Vec3{});
    static Region fat_annulus(double r, Vec3 center = Vec3{});
    static Region shell(double r_inner, double r_outer, Vec3 center = Vec3{});  // r_in < |x-c| < r_out
    static Region cone(Vec3 omega, double theta, Vec3 apex = Vec3{});
    static Region cone_union(const std::vector<Vec3>& axes, double theta, Vec3 apex = Vec3{});

    Region complement() const;
    friend Region intersect(const Region& a, const Region& b);
    friend Region join(const Region& a, const Region& b);

    bool contains(Vec3 p) const;

  private:
    enum class Kind { everything, ball, shell, cone, complement, intersection, join };

    Kind kind_ = Kind::everything;
    Vec3 center_;        // ball/shell center or cone apex
    Vec3 axis_;          // cone axis (unit)
    double r0_ = 0.0;    // ball radius or shell inner radius
    double r1_ = 0.0;    // shell outer radius
    double cos_theta_ = 0.0;
    std::vector<std::shared_ptr<const Region>> children_;

    Region() = default;
};

Region intersect(const Region& a, const Region& b);
Region join(const Region& a, const Region& b);

}  // namespace gravglue
