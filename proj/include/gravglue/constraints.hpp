#pragma once

#include "gravglue/calculus.hpp"
#include "gravglue/grid.hpp"
#include "gravglue/region.hpp"

namespace gravglue {

// =============================================================================
// The Einstein vacuum constraint operator around flat space and the
// (g,k) <-> (h,pi) change of variables:
//   h = (g - delta) - delta tr(g - delta),   pi = k - delta tr k
// with inverse g = delta + h - (1/2) delta tr h, k = pi - (1/2) delta tr pi.
// =============================================================================

HPiPair gk_to_hpi(const InitialDataSet& data);
InitialDataSet hpi_to_gk(const HPiPair& pair);

// Scalar curvature via Christoffel symbols with FD derivatives; the metric
// inverse is the pointwise closed-form 3x3 inverse. Determinants below the
// floor raise "degenerate-metric" with the point location.
TensorField scalar_curvature(const TensorField& g);

struct ScalarVectorPair {
    TensorField scalar_part;   // Hamiltonian side
    TensorField vector_part;   // momentum side
};

// Full constraint operator: ( R[g] + (tr_g k)^2 - |k|_g^2 ,  div_g k - d tr_g k ).
// The momentum component is returned with the lower index.
ScalarVectorPair constraint_operator(const InitialDataSet& data);

struct ConstraintResidual {
    TensorField hamiltonian;
    TensorField momentum;
    double l2 = 0.0;    // sqrt(int |.|^2) over the region
    double rms = 0.0;   // volume-normalized l2, the residual-per-unit-volume
    double linf = 0.0;
};

ConstraintResidual constraint_residual(const InitialDataSet& data, const Region& region);

// Flat-background principal part P(h,pi) = (d_i d_j h^{ij}, d_i pi^{ij}).
// Second derivatives are compositions of first-derivative stencils so that the
// linear part of the full constraint operator cancels it exactly in floating
// point (the quadratic smallness of N below depends on this).
ScalarVectorPair principal_part(const HPiPair& pair);

// Nonlinearity N(h,pi) with P(h,pi) = N(h,pi) iff the constraints hold;
// computed as P(h,pi) - C(g(h,pi), k(h,pi)) with the momentum row raised by
// g^{-1} to match the schematic form.
ScalarVectorPair nonlinearity(const HPiPair& pair);

// Linearization of the constraints at flat data applied to the pair, i.e.
// ((1/2) d_i d_j h^{ij}, d_i pi^{ij}).
ScalarVectorPair linearized_constraint(const HPiPair& pair);

}  // namespace gravglue
