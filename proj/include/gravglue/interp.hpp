#pragma once

#include "gravglue/grid.hpp"

namespace gravglue {

// Catmull-Rom cubic interpolation weights at local coordinate t in [0,1]
// between nodes 1 and 2 of a 4-node window.
inline void cubic_weights(double t, double w[4]) {
    double t2 = t * t, t3 = t2 * t;
    w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
    w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
    w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
    w[3] = 0.5 * (t3 - t2);
}

// d/dt of the weights (divide by h for a spatial derivative)
inline void cubic_weights_deriv(double t, double w[4]) {
    double t2 = t * t;
    w[0] = 0.5 * (-3.0 * t2 + 4.0 * t - 1.0);
    w[1] = 0.5 * (9.0 * t2 - 10.0 * t);
    w[2] = 0.5 * (-9.0 * t2 + 8.0 * t + 1.0);
    w[3] = 0.5 * (3.0 * t2 - 2.0 * t);
}

// Tricubic (C^1) interpolation of one component at physical point x.
// Window indices are clamped near edges (one-sided cubic); x must lie inside
// the sample hull, else throws "out-of-domain".
double tricubic(const TensorField& f, int component, Vec3 x);

// value and spatial gradient from the same 4^3 window
void tricubic_with_gradient(const TensorField& f, int component, Vec3 x, double& value,
                            Vec3& gradient);

// true if x lies within the grid's sample hull (interpolation possible)
bool in_sample_hull(const Grid& g, Vec3 x);

}  // namespace gravglue
