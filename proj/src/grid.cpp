#include "gravglue/grid.hpp"

#include <cmath>

#include "gravglue/parallel.hpp"

namespace gravglue {

bool TensorField::finite() const {
    for (const auto& c : comp_)
        for (double v : c)
            if (!std::isfinite(v)) return false;
    return true;
}

double TensorField::max_abs() const {
    double m = 0.0;
    for (const auto& c : comp_)
        for (double v : c) m = std::max(m, std::abs(v));
    return m;
}

static void check_same_shape(const TensorField& a, const TensorField& b) {
    require(a.grid().same_as(b.grid()) && a.rank() == b.rank(), "bad-shape",
            "field shapes do not match");
}

TensorField operator+(const TensorField& a, const TensorField& b) {
    check_same_shape(a, b);
    TensorField r = a;
    for (int c = 0; c < r.components(); ++c) {
        auto& rc = r.comp(c);
        const auto& bc = b.comp(c);
        for (std::size_t i = 0; i < rc.size(); ++i) rc[i] += bc[i];
    }
    return r;
}

TensorField operator-(const TensorField& a, const TensorField& b) {
    check_same_shape(a, b);
    TensorField r = a;
    for (int c = 0; c < r.components(); ++c) {
        auto& rc = r.comp(c);
        const auto& bc = b.comp(c);
        for (std::size_t i = 0; i < rc.size(); ++i) rc[i] -= bc[i];
    }
    return r;
}

TensorField operator*(double s, const TensorField& a) {
    TensorField r = a;
    for (int c = 0; c < r.components(); ++c)
        for (auto& v : r.comp(c)) v *= s;
    return r;
}

TensorField& axpy(TensorField& y, double a, const TensorField& x) {
    check_same_shape(y, x);
    for (int c = 0; c < y.components(); ++c) {
        auto& yc = y.comp(c);
        const auto& xc = x.comp(c);
        for (std::size_t i = 0; i < yc.size(); ++i) yc[i] += a * xc[i];
    }
    return y;
}

bool InitialDataSet::metric_positive_definite() const {
    const std::int64_t np = g.grid().num_points();
    for (std::int64_t p = 0; p < np; ++p) {
        double a11 = g.sym(0, 0, p), a12 = g.sym(0, 1, p), a13 = g.sym(0, 2, p);
        double a22 = g.sym(1, 1, p), a23 = g.sym(1, 2, p), a33 = g.sym(2, 2, p);
        double m1 = a11;
        double m2 = a11 * a22 - a12 * a12;
        double m3 = a11 * (a22 * a33 - a23 * a23) - a12 * (a12 * a33 - a23 * a13) +
                    a13 * (a12 * a23 - a22 * a13);
        if (!(m1 > 0.0 && m2 > 0.0 && m3 > 0.0)) return false;
    }
    return true;
}

}  // namespace gravglue
