#include "gravglue/interp.hpp"

#include <cmath>

#include "gravglue/errors.hpp"

namespace gravglue {

namespace {

struct Window {
    int base[3];     // index of node 0 of the 4-node window per axis
    double t[3];     // local coordinate relative to node 1
};

Window locate(const Grid& g, Vec3 x) {
    Window w;
    for (int a = 0; a < 3; ++a) {
        double u = (x[a] - g.origin[a]) / g.h - 0.5;  // sample-index coordinate
        require(u >= -1e-9 && u <= g.n - 1 + 1e-9, "out-of-domain",
                "interpolation point outside sample hull");
        int i1 = static_cast<int>(std::floor(u));
        double t = u - i1;
        // clamp the 4-node window inside [0, n-1], adjusting t accordingly
        int b = i1 - 1;
        if (b < 0) {
            t += b;  // t becomes negative -> extrapolating the shifted window's interior
            b = 0;
        } else if (b > g.n - 4) {
            t += b - (g.n - 4);
            b = g.n - 4;
        }
        w.base[a] = b;
        w.t[a] = t;
    }
    return w;
}

}  // namespace

bool in_sample_hull(const Grid& g, Vec3 x) {
    for (int a = 0; a < 3; ++a) {
        double u = (x[a] - g.origin[a]) / g.h - 0.5;
        if (u < 0.0 || u > g.n - 1) return false;
    }
    return true;
}

double tricubic(const TensorField& f, int component, Vec3 x) {
    const Grid& g = f.grid();
    Window win = locate(g, x);
    double wx[4], wy[4], wz[4];
    cubic_weights(win.t[0], wx);
    cubic_weights(win.t[1], wy);
    cubic_weights(win.t[2], wz);
    const auto& data = f.comp(component);
    double acc = 0.0;
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j) {
            double wyz = wy[j] * wz[k];
            std::int64_t row = g.index(win.base[0], win.base[1] + j, win.base[2] + k);
            for (int i = 0; i < 4; ++i)
                acc += wx[i] * wyz * data[static_cast<std::size_t>(row + i)];
        }
    return acc;
}

void tricubic_with_gradient(const TensorField& f, int component, Vec3 x, double& value,
                            Vec3& gradient) {
    const Grid& g = f.grid();
    Window win = locate(g, x);
    double w[3][4], d[3][4];
    for (int a = 0; a < 3; ++a) {
        cubic_weights(win.t[a], w[a]);
        cubic_weights_deriv(win.t[a], d[a]);
    }
    const auto& data = f.comp(component);
    double v = 0.0, gx = 0.0, gy = 0.0, gz = 0.0;
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j) {
            std::int64_t row = g.index(win.base[0], win.base[1] + j, win.base[2] + k);
            for (int i = 0; i < 4; ++i) {
                double s = data[static_cast<std::size_t>(row + i)];
                v += w[0][i] * w[1][j] * w[2][k] * s;
                gx += d[0][i] * w[1][j] * w[2][k] * s;
                gy += w[0][i] * d[1][j] * w[2][k] * s;
                gz += w[0][i] * w[1][j] * d[2][k] * s;
            }
        }
    value = v;
    gradient = Vec3{gx, gy, gz} / g.h;
}

}  // namespace gravglue
