#include "gravglue/constraints.hpp"

#include <cmath>
#include <sstream>

#include "gravglue/parallel.hpp"

namespace gravglue {

HPiPair gk_to_hpi(const InitialDataSet& data) {
    const Grid& grid = data.g.grid();
    HPiPair out{TensorField(grid, Rank::sym2), TensorField(grid, Rank::sym2)};
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        double trg = 0.0, trk = 0.0;
        for (int i = 0; i < 3; ++i) {
            trg += data.g.sym(i, i, p) - 1.0;
            trk += data.k.sym(i, i, p);
        }
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                double gij = data.g.sym(i, j, p) - (i == j ? 1.0 : 0.0);
                out.h.sym(i, j, p) = gij - (i == j ? trg : 0.0);
                out.pi.sym(i, j, p) = data.k.sym(i, j, p) - (i == j ? trk : 0.0);
            }
    });
    return out;
}

InitialDataSet hpi_to_gk(const HPiPair& pair) {
    const Grid& grid = pair.h.grid();
    InitialDataSet out{TensorField(grid, Rank::sym2), TensorField(grid, Rank::sym2)};
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        double trh = 0.0, trpi = 0.0;
        for (int i = 0; i < 3; ++i) {
            trh += pair.h.sym(i, i, p);
            trpi += pair.pi.sym(i, i, p);
        }
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                out.g.sym(i, j, p) = (i == j ? 1.0 : 0.0) + pair.h.sym(i, j, p) -
                                     (i == j ? 0.5 * trh : 0.0);
                out.k.sym(i, j, p) = pair.pi.sym(i, j, p) - (i == j ? 0.5 * trpi : 0.0);
            }
    });
    return out;
}

namespace {

constexpr double kDetFloor = 1e-8;

// pointwise inverse metric, with the determinant floor
TensorField inverse_metric(const TensorField& g) {
    const Grid& grid = g.grid();
    TensorField inv(grid, Rank::sym2);
    for (std::int64_t p = 0; p < grid.num_points(); ++p) {
        Mat3 m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = g.sym(i, j, p);
        double det = det3(m);
        if (!(det > kDetFloor)) {
            Vec3 x = grid.point(p);
            std::ostringstream os;
            os << "metric determinant " << det << " at (" << x[0] << ", " << x[1] << ", " << x[2]
               << ")";
            fail("degenerate-metric", os.str());
        }
        Mat3 mi = inverse3(m, det);
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) inv.sym(i, j, p) = mi(i, j);
    }
    return inv;
}

struct ChristoffelData {
    // gamma[k] holds Gamma^k_{ij} as a sym2 field
    TensorField gamma[3];
    TensorField ginv;
};

ChristoffelData christoffel(const TensorField& g) {
    const Grid& grid = g.grid();
    ChristoffelData out{{TensorField(grid, Rank::sym2), TensorField(grid, Rank::sym2),
                         TensorField(grid, Rank::sym2)},
                        inverse_metric(g)};
    TensorField dg[3];
    for (int a = 0; a < 3; ++a) dg[a] = finite_diff(g, a + 1, 1);

    parallel_for(grid.num_points(), [&](std::int64_t p) {
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 3; ++i)
                for (int j = i; j < 3; ++j) {
                    double s = 0.0;
                    for (int l = 0; l < 3; ++l)
                        s += out.ginv.sym(k, l, p) *
                             (dg[i].sym(j, l, p) + dg[j].sym(i, l, p) - dg[l].sym(i, j, p));
                    out.gamma[k].sym(i, j, p) = 0.5 * s;
                }
    });
    return out;
}

TensorField scalar_curvature_impl(const Grid& grid, const ChristoffelData& ch);

}  // namespace

TensorField scalar_curvature(const TensorField& g) {
    require(g.rank() == Rank::sym2, "bad-rank", "metric must be sym2");
    ChristoffelData ch = christoffel(g);
    return scalar_curvature_impl(g.grid(), ch);
}

namespace {

TensorField scalar_curvature_impl(const Grid& grid, const ChristoffelData& ch) {

    // d_k Gamma^k_{ij} and the contracted trace field T_i = Gamma^k_{ik}
    TensorField dgamma[3][3];  // dgamma[a][k] = d_a Gamma^k
    for (int a = 0; a < 3; ++a)
        for (int k = 0; k < 3; ++k) dgamma[a][k] = finite_diff(ch.gamma[k], a + 1, 1);

    TensorField trace_gamma(grid, Rank::vector);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        for (int i = 0; i < 3; ++i) {
            double t = 0.0;
            for (int k = 0; k < 3; ++k) t += ch.gamma[k].sym(i, k, p);
            trace_gamma.at(i, p) = t;
        }
    });
    TensorField dtrace[3];
    for (int a = 0; a < 3; ++a) dtrace[a] = finite_diff(trace_gamma, a + 1, 1);

    TensorField r(grid, Rank::scalar);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        double acc = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double gij = ch.ginv.sym(i, j, p);
                double term = 0.0;
                for (int k = 0; k < 3; ++k) term += dgamma[k][k].sym(i, j, p);
                term -= dtrace[j].at(i, p);
                for (int l = 0; l < 3; ++l) term += trace_gamma.at(l, p) * ch.gamma[l].sym(i, j, p);
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l)
                        term -= ch.gamma[k].sym(i, l, p) * ch.gamma[l].sym(j, k, p);
                acc += gij * term;
            }
        r.at(0, p) = acc;
    });
    return r;
}

}  // namespace

ScalarVectorPair constraint_operator(const InitialDataSet& data) {
    const Grid& grid = data.g.grid();
    ChristoffelData ch = christoffel(data.g);
    TensorField r = scalar_curvature_impl(grid, ch);

    // tr_g k and |k|_g^2
    TensorField trk(grid, Rank::scalar);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        double t = 0.0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) t += ch.ginv.sym(a, b, p) * data.k.sym(a, b, p);
        trk.at(0, p) = t;
    });

    TensorField ham(grid, Rank::scalar);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        double k2 = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b)
                        k2 += ch.ginv.sym(i, a, p) * ch.ginv.sym(j, b, p) * data.k.sym(i, j, p) *
                              data.k.sym(a, b, p);
        double t = trk.at(0, p);
        ham.at(0, p) = r.at(0, p) + t * t - k2;
    });

    // momentum: g^{ii'} D_i k_{i'j} - d_j tr_g k  (lower index j)
    TensorField dk[3];
    for (int a = 0; a < 3; ++a) dk[a] = finite_diff(data.k, a + 1, 1);
    TensorField dtrk[3];
    for (int a = 0; a < 3; ++a) dtrk[a] = finite_diff(trk, a + 1, 1);

    TensorField mom(grid, Rank::vector);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int i = 0; i < 3; ++i)
                for (int ip = 0; ip < 3; ++ip) {
                    double cov = dk[i].sym(ip, j, p);
                    for (int l = 0; l < 3; ++l)
                        cov -= ch.gamma[l].sym(i, ip, p) * data.k.sym(l, j, p) +
                               ch.gamma[l].sym(i, j, p) * data.k.sym(ip, l, p);
                    s += ch.ginv.sym(i, ip, p) * cov;
                }
            mom.at(j, p) = s - dtrk[j].at(0, p);
        }
    });
    return {ham, mom};
}

ConstraintResidual constraint_residual(const InitialDataSet& data, const Region& region) {
    ScalarVectorPair c = constraint_operator(data);
    ConstraintResidual out{c.scalar_part, c.vector_part, 0.0, 0.0, 0.0};
    double l2h = l2_norm(c.scalar_part, region);
    double l2m = l2_norm(c.vector_part, region);
    out.l2 = std::sqrt(l2h * l2h + l2m * l2m);
    const Grid& g = data.g.grid();
    std::int64_t inside = 0;
    for (std::int64_t p = 0; p < g.num_points(); ++p)
        if (region.contains(g.point(p))) ++inside;
    double vol = static_cast<double>(inside) * g.cell_volume();
    out.rms = vol > 0.0 ? out.l2 / std::sqrt(vol) : 0.0;
    out.linf = std::max(linf_norm(c.scalar_part, region), linf_norm(c.vector_part, region));
    return out;
}

ScalarVectorPair principal_part(const HPiPair& pair) {
    const Grid& grid = pair.h.grid();
    // dd h^{ij}: compositions of first-derivative stencils
    TensorField dh[3];
    for (int a = 0; a < 3; ++a) dh[a] = finite_diff(pair.h, a + 1, 1);
    // row_i = sum_j d_j h_{ij} as a vector field, then one more divergence
    TensorField div_h(grid, Rank::vector);
    TensorField div_pi(grid, Rank::vector);
    TensorField dpi[3];
    for (int a = 0; a < 3; ++a) dpi[a] = finite_diff(pair.pi, a + 1, 1);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        for (int i = 0; i < 3; ++i) {
            double sh = 0.0, sp = 0.0;
            for (int j = 0; j < 3; ++j) {
                sh += dh[j].sym(i, j, p);
                sp += dpi[j].sym(i, j, p);
            }
            div_h.at(i, p) = sh;
            div_pi.at(i, p) = sp;
        }
    });
    TensorField ddiv[3];
    for (int a = 0; a < 3; ++a) ddiv[a] = finite_diff(div_h, a + 1, 1);
    TensorField ddh(grid, Rank::scalar);
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        double s = 0.0;
        for (int i = 0; i < 3; ++i) s += ddiv[i].at(i, p);
        ddh.at(0, p) = s;
    });
    return {ddh, div_pi};
}

ScalarVectorPair nonlinearity(const HPiPair& pair) {
    InitialDataSet data = hpi_to_gk(pair);
    ScalarVectorPair c = constraint_operator(data);
    ScalarVectorPair pp = principal_part(pair);
    const Grid& grid = pair.h.grid();

    TensorField ginv = inverse_metric(data.g);  // raises the momentum row

    ScalarVectorPair out{TensorField(grid, Rank::scalar), TensorField(grid, Rank::vector)};
    parallel_for(grid.num_points(), [&](std::int64_t p) {
        out.scalar_part.at(0, p) = pp.scalar_part.at(0, p) - c.scalar_part.at(0, p);
        for (int j = 0; j < 3; ++j) {
            double raised = 0.0;
            for (int jp = 0; jp < 3; ++jp) raised += ginv.sym(j, jp, p) * c.vector_part.at(jp, p);
            out.vector_part.at(j, p) = pp.vector_part.at(j, p) - raised;
        }
    });
    return out;
}

ScalarVectorPair linearized_constraint(const HPiPair& pair) {
    ScalarVectorPair pp = principal_part(pair);
    return {0.5 * pp.scalar_part, pp.vector_part};
}

}  // namespace gravglue
