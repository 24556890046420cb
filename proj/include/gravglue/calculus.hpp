#pragma once

#include <functional>
#include <optional>

#include "gravglue/grid.hpp"
#include "gravglue/region.hpp"

namespace gravglue {

// =============================================================================
// Finite differences. 4th-order: 5-point central in the interior, shifted
// one-sided stencils in the two boundary layers (first derivative), 6-point
// one-sided for second derivatives. Exact on polynomials of degree <= 4.
// =============================================================================

// axis in {1,2,3}, order in {1,2}
TensorField finite_diff(const TensorField& f, int axis, int order = 1);

// exact adjoint of finite_diff(., axis, 1) under the unweighted grid inner
// product: <D f, g> = <f, D^T g> to roundoff (used by the least-squares
// correction of the solution operators)
TensorField finite_diff_adjoint(const TensorField& f, int axis);

// scalar Laplacian via the fused order-2 stencils
TensorField laplacian(const TensorField& f);

struct IntegralResult {
    double value = 0.0;
    bool empty_intersection = false;
};

// Midpoint rule: sum of samples at cell centers inside `region`, times h^3.
// Deterministic (pairwise) reduction. Scalar fields only.
IntegralResult integrate(const TensorField& f, const Region& region);
double integrate_value(const TensorField& f, const Region& region);

// Sum over components of integrate(comp^2) -> for L2 norms of any rank.
double l2_norm(const TensorField& f, const Region& region);
double linf_norm(const TensorField& f, const Region& region);

// Discrete Sobolev norm: sqrt( sum_{|alpha|<=m} int_region w |D^alpha f|^2 )
// with w = <x>^{2(|alpha|+delta)} when `weight_delta` is supplied (b-Sobolev
// style) and w = 1 otherwise. Supports m <= 3; sums over all components.
double sobolev_norm(const TensorField& f, int m, const Region& region,
                    std::optional<double> weight_delta = std::nullopt);

// H^1 x L^2 distance of a pair, the Picard stopping metric.
double h1_l2_norm(const HPiPair& p, const Region& region);

// pointwise field builders
TensorField make_field(const Grid& grid, Rank rank);
TensorField sampled_scalar(const Grid& grid, const std::function<double(Vec3)>& f);

}  // namespace gravglue
