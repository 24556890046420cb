#pragma once

#include "gravglue/grid.hpp"

namespace gravglue {

// Invariant scaling transformation: (g,k) -> (g(rx), r k(rx)) sampled on
// `target` by tricubic interpolation of the source fields. Every sample point
// r*x must lie inside the source grid's hull ("out-of-domain" otherwise).
InitialDataSet rescale(const InitialDataSet& data, double r, const Grid& target);

// same map on a single field with an explicit weight r^p (p=0 for g, 1 for k)
TensorField rescale_field(const TensorField& f, double r, const Grid& target, int weight_power);

}  // namespace gravglue
