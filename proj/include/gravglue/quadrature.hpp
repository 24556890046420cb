#pragma once

#include <functional>
#include <vector>

namespace gravglue {

// Gauss-Legendre nodes/weights on [-1, 1], computed once per order via Newton
// iteration on the Legendre polynomial and cached.
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;
};

const GaussLegendre& gauss_legendre(int order);

// integral of f over [a, b] with a single n-node Gauss-Legendre panel
double gl_integrate(const std::function<double(double)>& f, double a, double b, int order = 32);

// adaptive Simpson, for profile normalizations
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12, int max_depth = 40);

}  // namespace gravglue
