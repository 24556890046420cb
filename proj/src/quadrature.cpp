#include "gravglue/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace gravglue {

static GaussLegendre compute_gl(int n) {
    GaussLegendre gl;
    gl.nodes.resize(n);
    gl.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // Chebyshev-like initial guess, then Newton on P_n(x)
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        gl.nodes[i] = x;
        gl.weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    }
    return gl;
}

const GaussLegendre& gauss_legendre(int order) {
    static std::map<int, GaussLegendre> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, compute_gl(order)).first;
    return it->second;
}

double gl_integrate(const std::function<double(double)>& f, double a, double b, int order) {
    const GaussLegendre& gl = gauss_legendre(order);
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < order; ++i) s += gl.weights[i] * f(mid + half * gl.nodes[i]);
    return s * half;
}

static double simpson(const std::function<double(double)>& f, double a, double fa, double m,
                      double fm, double b, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

static double adsimp(const std::function<double(double)>& f, double a, double fa, double m,
                     double fm, double b, double fb, double whole, double tol, int depth) {
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = simpson(f, a, fa, lm, flm, m, fm);
    double right = simpson(f, m, fm, rm, frm, b, fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adsimp(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1) +
           adsimp(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    double whole = simpson(f, a, fa, m, fm, b, fb);
    return adsimp(f, a, fa, m, fm, b, fb, whole, tol, max_depth);
}

}  // namespace gravglue
