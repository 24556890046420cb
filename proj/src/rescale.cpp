#include "gravglue/rescale.hpp"

#include <cmath>

#include "gravglue/interp.hpp"
#include "gravglue/parallel.hpp"

namespace gravglue {

TensorField rescale_field(const TensorField& f, double r, const Grid& target, int weight_power) {
    require(r > 0.0, "bad-scale", "scale factor must be positive");
    TensorField out(target, f.rank());
    double w = std::pow(r, weight_power);
    parallel_for(target.num_points(), [&](std::int64_t p) {
        Vec3 x = r * target.point(p);
        for (int c = 0; c < f.components(); ++c) out.at(c, p) = w * tricubic(f, c, x);
    });
    return out;
}

InitialDataSet rescale(const InitialDataSet& data, double r, const Grid& target) {
    InitialDataSet out;
    out.g = rescale_field(data.g, r, target, 0);
    out.k = rescale_field(data.k, r, target, 1);
    return out;
}

}  // namespace gravglue
