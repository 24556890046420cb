#include "gravglue/region.hpp"

#include <cmath>

#include "gravglue/errors.hpp"

namespace gravglue {

Region Region::everything() { return Region(); }

Region Region::ball(Vec3 center, double radius) {
    require(radius > 0.0, "bad-region", "ball radius must be positive");
    Region r;
    r.kind_ = Kind::ball;
    r.center_ = center;
    r.r0_ = radius;
    return r;
}

Region Region::shell(double r_inner, double r_outer, Vec3 center) {
    require(0.0 <= r_inner && r_inner < r_outer, "bad-region", "need 0 <= r_in < r_out");
    Region r;
    r.kind_ = Kind::shell;
    r.center_ = center;
    r.r0_ = r_inner;
    r.r1_ = r_outer;
    return r;
}

Region Region::annulus(double r, Vec3 center) { return shell(r, 2.0 * r, center); }

Region Region::fat_annulus(double r, Vec3 center) { return shell(0.5 * r, 4.0 * r, center); }

Region Region::cone(Vec3 omega, double theta, Vec3 apex) {
    require(theta > 0.0 && theta < M_PI, "bad-region", "cone opening must be in (0, pi)");
    Region r;
    r.kind_ = Kind::cone;
    r.center_ = apex;
    r.axis_ = normalized(omega);
    r.cos_theta_ = std::cos(theta);
    return r;
}

Region Region::cone_union(const std::vector<Vec3>& axes, double theta, Vec3 apex) {
    require(!axes.empty(), "bad-region", "cone union needs at least one axis");
    Region acc = cone(axes[0], theta, apex);
    for (std::size_t i = 1; i < axes.size(); ++i) acc = join(acc, cone(axes[i], theta, apex));
    return acc;
}

Region Region::complement() const {
    Region r;
    r.kind_ = Kind::complement;
    r.children_.push_back(std::make_shared<Region>(*this));
    return r;
}

Region intersect(const Region& a, const Region& b) {
    Region r;
    r.kind_ = Region::Kind::intersection;
    r.children_.push_back(std::make_shared<Region>(a));
    r.children_.push_back(std::make_shared<Region>(b));
    return r;
}

Region join(const Region& a, const Region& b) {
    Region r;
    r.kind_ = Region::Kind::join;
    r.children_.push_back(std::make_shared<Region>(a));
    r.children_.push_back(std::make_shared<Region>(b));
    return r;
}

bool Region::contains(Vec3 p) const {
    switch (kind_) {
        case Kind::everything:
            return true;
        case Kind::ball:
            return norm2(p - center_) < r0_ * r0_;
        case Kind::shell: {
            double d2 = norm2(p - center_);
            return d2 > r0_ * r0_ && d2 < r1_ * r1_;
        }
        case Kind::cone: {
            Vec3 d = p - center_;
            double n = norm(d);
            if (n == 0.0) return false;
            return dot(d, axis_) > cos_theta_ * n;
        }
        case Kind::complement:
            return !children_[0]->contains(p);
        case Kind::intersection:
            return children_[0]->contains(p) && children_[1]->contains(p);
        case Kind::join:
            return children_[0]->contains(p) || children_[1]->contains(p);
    }
    return false;
}

}  // namespace gravglue
