#include "gravglue/calculus.hpp"

#include <cmath>
#include <functional>

#include "gravglue/parallel.hpp"

namespace gravglue {

namespace {

// 4th-order first-derivative stencils; row = left offset count (0,1,center,
// n-2, n-1), columns are the 5 taps.
constexpr double D1_EDGE0[5] = {-25.0 / 12, 4.0, -3.0, 4.0 / 3, -1.0 / 4};
constexpr double D1_EDGE1[5] = {-1.0 / 4, -5.0 / 6, 3.0 / 2, -1.0 / 2, 1.0 / 12};
constexpr double D1_CENT[5] = {1.0 / 12, -2.0 / 3, 0.0, 2.0 / 3, -1.0 / 12};

// 4th-order second-derivative stencils
constexpr double D2_CENT[5] = {-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12};
constexpr double D2_EDGE0[6] = {15.0 / 4, -77.0 / 6, 107.0 / 6, -13.0, 61.0 / 12, -5.0 / 6};
constexpr double D2_EDGE1[6] = {5.0 / 6, -5.0 / 4, -1.0 / 3, 7.0 / 6, -1.0 / 2, 1.0 / 12};

// Apply a 1D stencil sweep along `axis` (0-based) to one component array.
void sweep(const std::vector<double>& in, std::vector<double>& out, int n, int axis, int order,
           double h) {
    const std::int64_t sx = 1, sy = n, sz = static_cast<std::int64_t>(n) * n;
    const std::int64_t stride = axis == 0 ? sx : (axis == 1 ? sy : sz);
    const double inv = order == 1 ? 1.0 / h : 1.0 / (h * h);

    // iterate over all lines along `axis`
    const std::int64_t nlines = static_cast<std::int64_t>(n) * n;
    parallel_for(nlines, [&](std::int64_t line) {
        std::int64_t a = line % n, b = line / n;
        std::int64_t base;
        if (axis == 0) base = a * sy + b * sz;
        else if (axis == 1) base = a * sx + b * sz;
        else base = a * sx + b * sy;

        auto val = [&](int i) { return in[static_cast<std::size_t>(base + i * stride)]; };
        auto set = [&](int i, double v) { out[static_cast<std::size_t>(base + i * stride)] = v * inv; };

        if (order == 1) {
            {
                double v0 = 0.0, v1 = 0.0;
                for (int t = 0; t < 5; ++t) {
                    v0 += D1_EDGE0[t] * val(t);
                    v1 += D1_EDGE1[t] * val(t);
                }
                set(0, v0);
                set(1, v1);
            }
            for (int i = 2; i <= n - 3; ++i) {
                double v = 0.0;
                for (int t = 0; t < 5; ++t) v += D1_CENT[t] * val(i - 2 + t);
                set(i, v);
            }
            {
                // mirrored one-sided stencils at the right edge
                double v0 = 0.0, v1 = 0.0;
                for (int t = 0; t < 5; ++t) {
                    v0 -= D1_EDGE0[t] * val(n - 1 - t);
                    v1 -= D1_EDGE1[t] * val(n - 1 - t);
                }
                set(n - 1, v0);
                set(n - 2, v1);
            }
        } else {
            {
                double v0 = 0.0, v1 = 0.0;
                for (int t = 0; t < 6; ++t) {
                    v0 += D2_EDGE0[t] * val(t);
                    v1 += D2_EDGE1[t] * val(t);
                }
                set(0, v0);
                set(1, v1);
            }
            for (int i = 2; i <= n - 3; ++i) {
                double v = 0.0;
                for (int t = 0; t < 5; ++t) v += D2_CENT[t] * val(i - 2 + t);
                set(i, v);
            }
            {
                double v0 = 0.0, v1 = 0.0;
                for (int t = 0; t < 6; ++t) {
                    v0 += D2_EDGE0[t] * val(n - 1 - t);
                    v1 += D2_EDGE1[t] * val(n - 1 - t);
                }
                set(n - 1, v0);
                set(n - 2, v1);
            }
        }
    });
}

// Adjoint sweep: out = M^T in for the 1D derivative matrix M along `axis`.
// M's rows are the stencils applied by `sweep` (one-sided at rows 0,1,n-2,n-1,
// central in between); the adjoint gathers column-wise.
void adjoint_sweep(const std::vector<double>& in, std::vector<double>& out, int n, int axis,
                   double h) {
    const std::int64_t sx = 1, sy = n, sz = static_cast<std::int64_t>(n) * n;
    const std::int64_t stride = axis == 0 ? sx : (axis == 1 ? sy : sz);
    const double inv = 1.0 / h;
    const std::int64_t nlines = static_cast<std::int64_t>(n) * n;
    parallel_for(nlines, [&](std::int64_t line) {
        std::int64_t a = line % n, b = line / n;
        std::int64_t base;
        if (axis == 0) base = a * sy + b * sz;
        else if (axis == 1) base = a * sx + b * sz;
        else base = a * sx + b * sy;

        auto val = [&](int i) { return in[static_cast<std::size_t>(base + i * stride)]; };

        // accumulate row-stencil contributions into columns
        std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
        for (int t = 0; t < 5; ++t) {
            acc[static_cast<std::size_t>(t)] += D1_EDGE0[t] * val(0);
            acc[static_cast<std::size_t>(t)] += D1_EDGE1[t] * val(1);
            acc[static_cast<std::size_t>(n - 1 - t)] -= D1_EDGE0[t] * val(n - 1);
            acc[static_cast<std::size_t>(n - 1 - t)] -= D1_EDGE1[t] * val(n - 2);
        }
        for (int i = 2; i <= n - 3; ++i) {
            double v = val(i);
            for (int t = 0; t < 5; ++t) acc[static_cast<std::size_t>(i - 2 + t)] += D1_CENT[t] * v;
        }
        for (int i = 0; i < n; ++i)
            out[static_cast<std::size_t>(base + i * stride)] = acc[static_cast<std::size_t>(i)] * inv;
    });
}

}  // namespace

TensorField finite_diff_adjoint(const TensorField& f, int axis) {
    require(axis >= 1 && axis <= 3, "bad-axis", "axis must be 1..3");
    const int n = f.grid().n;
    require(n >= 5, "insufficient-extent", "grid too small for 4th-order stencils");
    TensorField out(f.grid(), f.rank());
    for (int c = 0; c < f.components(); ++c)
        adjoint_sweep(f.comp(c), out.comp(c), n, axis - 1, f.grid().h);
    return out;
}

TensorField finite_diff(const TensorField& f, int axis, int order) {
    require(axis >= 1 && axis <= 3, "bad-axis", "axis must be 1..3");
    require(order == 1 || order == 2, "bad-order", "order must be 1 or 2");
    const int n = f.grid().n;
    require(n >= 5 && (order == 1 || n >= 6), "insufficient-extent",
            "grid too small for 4th-order stencils");
    TensorField out(f.grid(), f.rank());
    for (int c = 0; c < f.components(); ++c)
        sweep(f.comp(c), out.comp(c), n, axis - 1, order, f.grid().h);
    return out;
}

TensorField laplacian(const TensorField& f) {
    TensorField r = finite_diff(f, 1, 2);
    r = r + finite_diff(f, 2, 2);
    r = r + finite_diff(f, 3, 2);
    return r;
}

IntegralResult integrate(const TensorField& f, const Region& region) {
    require(f.rank() == Rank::scalar, "bad-rank", "integrate expects a scalar field");
    const Grid& g = f.grid();
    const auto& data = f.comp(0);
    bool any = false;
    // membership per point; deterministic chunked reduction
    double sum = parallel_sum(g.num_points(), [&](std::int64_t p) {
        if (!region.contains(g.point(p))) return 0.0;
        return data[static_cast<std::size_t>(p)];
    });
    // cheap second pass for the empty-intersection flag (exact, no race)
    for (std::int64_t p = 0; p < g.num_points() && !any; ++p)
        if (region.contains(g.point(p))) any = true;
    IntegralResult r;
    r.value = sum * g.cell_volume();
    r.empty_intersection = !any;
    return r;
}

double integrate_value(const TensorField& f, const Region& region) {
    return integrate(f, region).value;
}

double l2_norm(const TensorField& f, const Region& region) {
    const Grid& g = f.grid();
    double s = parallel_sum(g.num_points(), [&](std::int64_t p) {
        if (!region.contains(g.point(p))) return 0.0;
        double acc = 0.0;
        for (int c = 0; c < f.components(); ++c) {
            double v = f.at(c, p);
            acc += v * v;
        }
        return acc;
    });
    return std::sqrt(s * g.cell_volume());
}

double linf_norm(const TensorField& f, const Region& region) {
    const Grid& g = f.grid();
    double m = 0.0;
    for (std::int64_t p = 0; p < g.num_points(); ++p) {
        if (!region.contains(g.point(p))) continue;
        for (int c = 0; c < f.components(); ++c) m = std::max(m, std::abs(f.at(c, p)));
    }
    return m;
}

double sobolev_norm(const TensorField& f, int m, const Region& region,
                    std::optional<double> weight_delta) {
    require(m >= 0 && m <= 3, "unsupported-order", "sobolev_norm supports m <= 3");
    const Grid& g = f.grid();

    double total = 0.0;
    // enumerate multi-indices (a,b,c) with a+b+c <= m
    for (int a = 0; a <= m; ++a)
        for (int b = 0; a + b <= m; ++b)
            for (int c = 0; a + b + c <= m; ++c) {
                int ord = a + b + c;
                TensorField d = f;
                for (int t = 0; t < a; ++t) d = finite_diff(d, 1, 1);
                for (int t = 0; t < b; ++t) d = finite_diff(d, 2, 1);
                for (int t = 0; t < c; ++t) d = finite_diff(d, 3, 1);
                double term = parallel_sum(g.num_points(), [&](std::int64_t p) {
                    Vec3 x = g.point(p);
                    if (!region.contains(x)) return 0.0;
                    double w = 1.0;
                    if (weight_delta) {
                        double jap2 = 1.0 + norm2(x);
                        w = std::pow(jap2, ord + *weight_delta);  // <x>^{2(|alpha|+delta)}
                    }
                    double acc = 0.0;
                    for (int cc = 0; cc < d.components(); ++cc) {
                        double v = d.at(cc, p);
                        acc += v * v;
                    }
                    return w * acc;
                });
                total += term * g.cell_volume();
            }
    return std::sqrt(total);
}

double h1_l2_norm(const HPiPair& p, const Region& region) {
    double a = sobolev_norm(p.h, 1, region);
    double b = l2_norm(p.pi, region);
    return std::sqrt(a * a + b * b);
}

TensorField make_field(const Grid& grid, Rank rank) { return TensorField(grid, rank); }

TensorField sampled_scalar(const Grid& grid, const std::function<double(Vec3)>& f) {
    TensorField r(grid, Rank::scalar);
    auto& d = r.comp(0);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        d[static_cast<std::size_t>(p)] = f(grid.point(p));
    });
    return r;
}

}  // namespace gravglue
