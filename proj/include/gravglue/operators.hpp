#pragma once

#include <array>
#include <memory>
#include <vector>

#include "gravglue/calculus.hpp"
#include "gravglue/grid.hpp"
#include "gravglue/profiles.hpp"
#include "gravglue/region.hpp"

namespace gravglue {

// =============================================================================
// Support-preserving right inverses of the double divergence (S) and the
// symmetric divergence (T). Kernels:
//   (S f)^{ij}(x)   = int Psi^{ij}(x,y) f(y) dy,
//   Psi^{ij}(z+y,y) = G(z,y) z^i z^j / |z|^3,
//   G(z,y)          = int_{|z|}^inf eta(t z/|z| + y) t^2 dt
// and the T kernel obtained by applying the z-derivatives analytically to the
// radial factor. Source integrals are midpoint sums over an internally refined
// sampling of the coarse field; the radial factor uses 32-node Gauss-Legendre
// on the exact ray-ball intersection interval.
// =============================================================================

struct StarShapedDomain {
    Region domain;
    MollifierSpec mollifier;

    // Samples segment midpoints between domain points and ball points; throws
    // "not-star-shaped" when a midpoint escapes the domain.
    void spot_check(const Grid& grid, int segment_samples = 2000, unsigned seed = 7) const;
};

// internally refined source sampling
struct SourceSamples {
    std::vector<Vec3> pts;
    std::vector<std::array<double, 3>> val;  // scalar uses [0]
    int ncomp = 1;
    double weight = 0.0;       // subcell volume
    double skip_radius = 0.0;  // self-cell skip distance for singular kernels

    std::size_t size() const { return pts.size(); }
};

// Subdivides coarse cells by `refine` per axis, keeps subcell centers inside
// `mask`, values by tricubic interpolation. With keep_all the full point set
// inside the mask is retained (needed when moment corrections are added to
// the samples); otherwise near-zero samples are dropped.
SourceSamples refine_source(const TensorField& f, const Region& mask, int refine,
                            bool keep_all = false);

// -----------------------------------------------------------------------------
// Biorthogonal moment basis over a point cloud: theta^A = (G^-1)^{AB} g_B w
// for a smooth nonnegative weight w compactly supported in the overlap region,
// with exact discrete biorthogonality on the sample set. Scalar mode uses
// g = (1, x); vector mode (e_i, Y_i).
// -----------------------------------------------------------------------------
class BiorthBasis {
  public:
    BiorthBasis(bool vector_mode, const std::function<double(Vec3)>& weight,
                const SourceSamples& src);

    int nmoments() const { return vector_mode_ ? 6 : 4; }
    bool vector_mode() const { return vector_mode_; }

    // moments of the values over the full source set
    std::vector<double> moments(const SourceSamples& src) const;
    // subtract sum_A m_A theta^A from src values (in place)
    void subtract(SourceSamples& src, const std::vector<double>& m) const;

    double condition() const { return condition_; }

  private:
    bool vector_mode_;
    std::vector<std::size_t> support_;         // indices into the source set
    std::vector<std::vector<double>> theta_;   // [A][support * ncomp]
    double condition_ = 0.0;
};

// Public moment projection on coarse fields (scalar or vector): returns the
// projected field and the measured moments before/after.
struct MomentReport {
    std::vector<double> before;
    std::vector<double> after;
};
TensorField moment_project(const TensorField& f, const MollifierSpec& ball, MomentReport* report);

// -----------------------------------------------------------------------------
// Single star-shaped domain operator.
// -----------------------------------------------------------------------------
class StarBogovskii {
  public:
    StarBogovskii(StarShapedDomain dom, int internal_refine = 2);

    // f scalar -> sym2 on f's grid, culled to the domain (exact zero outside)
    TensorField apply_S(const TensorField& f) const;
    // F vector -> sym2
    TensorField apply_T(const TensorField& F) const;

    // low-level: accumulate the kernel application at one output point
    static void s_kernel_at(const MollifierSpec& eta, Vec3 x, const SourceSamples& src,
                            double out[6]);
    static void t_kernel_at(const MollifierSpec& eta, Vec3 x, const SourceSamples& src,
                            double out[6]);

    // apply to a prepared source, evaluating on the points of `grid` inside
    // `out_mask` (other samples are exactly zero)
    TensorField apply_samples(bool vector_mode, const SourceSamples& src, const Grid& grid,
                              const Region& out_mask) const;

    const StarShapedDomain& domain() const { return dom_; }
    int refine() const { return refine_; }

  private:
    StarShapedDomain dom_;
    int refine_;
};

// -----------------------------------------------------------------------------
// Union plan: covering of an annulus by cap pieces, each star-shaped with
// respect to its own mollifier ball, chained through overlap balls carrying
// the biorthogonal bases of the decomposition recursion.
// -----------------------------------------------------------------------------
struct UnionPlanSpec {
    double inner_r = 1.0;           // annulus (inner_r, 2 inner_r)
    Vec3 center;
    std::vector<Vec3> cap_axes;     // visit order
    std::vector<int> predecessor;   // overlap partner (index into cap_axes), -1 for first
    double cap_half_angle = 0.0;
    double ball_center_radius = 0.0;  // piece mollifier center radius (units of inner_r)
    double ball_radius = 0.0;         // piece mollifier radius (units of inner_r)
    double internal_h = 0.1875;       // internal source spacing (units of inner_r)
    bool kernel_pass = true;          // evaluate the quadrature kernels first
    int correction_iters = 400;       // discrete least-squares correction budget
    double correction_tol = 0.0;      // <= 0: auto, 0.25 (h / inner_r)^2 (scheme order)
};

// 26-direction covering (axes, edge midpoints, corners) with a visit order
// whose consecutive overlaps admit usable balls.
UnionPlanSpec default_annulus_plan(double inner_r = 1.0, Vec3 center = Vec3{});

class DivergenceCorrector;

class AnnulusBogovskii {
  public:
    AnnulusBogovskii(const Grid& grid, UnionPlanSpec spec = default_annulus_plan());

    // support-leak checked; moments are the caller's business (returned by
    // the moment helpers below)
    TensorField apply_S(const TensorField& f) const;
    TensorField apply_T(const TensorField& F) const;

    std::array<double, 4> scalar_moments(const TensorField& f) const;
    std::array<double, 6> vector_moments(const TensorField& F) const;

    const Region& support_region() const { return region_; }
    const Grid& grid() const { return grid_; }
    const UnionPlanSpec& spec() const { return spec_; }

    // Identity-residual baseline |dd S f0 - f0| / |f0| for a fixed smooth
    // moment-free reference source; measured once and cached.
    double baseline_error() const;

  private:
    TensorField apply(bool vector_mode, const TensorField& f) const;

    Grid grid_;
    UnionPlanSpec spec_;
    Region region_;  // union of pieces = the annulus
    std::vector<StarShapedDomain> pieces_;
    mutable double baseline_ = -1.0;
    mutable std::shared_ptr<DivergenceCorrector> corr_s_;
    mutable std::shared_ptr<DivergenceCorrector> corr_t_;
};

// -----------------------------------------------------------------------------
// Conic operators: translation-invariant kernels supported in a cone.
//   K^{ij}(z)    = kappa(zhat) zhat^i zhat^j / |z|
//   (K)^{ij}_k(z)= [3 kappa(zhat) zhat_k - grad_tan kappa] zhat^i zhat^j /|z|^2
// with kappa a normalized smooth cap profile.
// -----------------------------------------------------------------------------
struct ConicKernelSpec {
    Vec3 axis;          // unit
    double theta = 0.0; // opening in (0, pi/2)
    Vec3 apex;          // translation of the cone
    double norm_const = 0.0;

    ConicKernelSpec() = default;
    ConicKernelSpec(Vec3 axis_, double theta_, Vec3 apex_ = Vec3{});

    double kappa(Vec3 zhat) const;
    // returns kappa and the tangential gradient coefficient vector
    void kappa_with_grad(Vec3 zhat, double& value, Vec3& grad) const;
    double quadrature_mass() const;  // int_{S^2} kappa
    Region cone_region() const { return Region::cone(axis, theta, apex); }
};

class ConicOperator {
  public:
    ConicOperator(ConicKernelSpec spec, int internal_refine = 2);

    TensorField apply_S(const TensorField& f) const;
    TensorField apply_T(const TensorField& F) const;

    // evaluation on an arbitrary output grid (e.g. a coarse far-field grid)
    TensorField apply_S_on(const TensorField& f, const Grid& out) const;
    TensorField apply_T_on(const TensorField& F, const Grid& out) const;

    // evaluation of the S/T convolution at arbitrary points
    void eval(bool vector_mode, const SourceSamples& src, const std::vector<Vec3>& points,
              std::vector<std::array<double, 6>>& out) const;

    const ConicKernelSpec& spec() const { return spec_; }
    int refine() const { return refine_; }

  private:
    TensorField apply(bool vector_mode, const TensorField& f, const Grid& out) const;

    ConicKernelSpec spec_;
    int refine_;
};

// -----------------------------------------------------------------------------
// Outward extension operator S_out on A_2 u C_theta(omega0):
//   S_out f = S_c(f - P S_B(chi f)) + S_B(chi f),
// where S_B is the chained Bogovskii operator whose per-piece moment defects
// are transported along overlap joins into the terminal ball inside the cone.
// Holds the divergence identity on the whole region without moment conditions.
// -----------------------------------------------------------------------------
struct OutwardPlanSpec {
    ConicKernelSpec cone;
    double annulus_r = 2.0;       // chain covers A_{annulus_r} plus the cone within the cutoff
    double cutoff_inner = 6.0;    // chi = 1 inside, -> 0 across (inner, outer)
    double cutoff_outer = 8.0;
    double internal_h = 0.375;
    int correction_iters = 400;
    double correction_tol = 0.0;  // <= 0: auto (scheme order)
};

class OutwardOperator {
  public:
    OutwardOperator(const Grid& grid, OutwardPlanSpec spec);

    // scalar f -> sym2 (double divergence inverse) / vector F -> sym2
    TensorField apply_S(const TensorField& f) const;
    TensorField apply_T(const TensorField& F) const;

    Region support_region() const;   // A_{r} u cone
    const OutwardPlanSpec& spec() const { return spec_; }

  private:
    TensorField apply(bool vector_mode, const TensorField& f) const;

    Grid grid_;
    OutwardPlanSpec spec_;
    std::vector<StarShapedDomain> chain_;       // [0] = cone piece, then caps
    std::vector<int> predecessor_;
    ConicOperator conic_;
};

// checks |f| <= tol * max|f| outside `region`; throws "support-leak"
void check_support(const TensorField& f, const Region& region, double rel_tol = 1e-12);

// -----------------------------------------------------------------------------
// Matrix-free least-squares solver for the discrete divergence identities:
// finds the minimum-norm sym2 field supported exactly on the grid points of
// `support` with  mask(DD u) ~ rhs (scalar mode) or mask(div u) ~ rhs (vector
// mode), via CGNR on the composed 4th-order stencils and their exact adjoints.
// The sampled moment functionals (1,x) resp. (e,Y) lie in the discrete
// cokernel (stencils are exact on linear polynomials), so the attainable
// residual for moment-carrying sources is exactly the moment obstruction.
// -----------------------------------------------------------------------------
class DivergenceCorrector {
  public:
    // The residual rows always cover the support dilated by the composed
    // stencil halo, so the sampled affine/Killing functionals remain exactly
    // in the discrete cokernel (summation by parts has nothing cut off) and
    // the moment obstructions cannot leak out of the solve.
    DivergenceCorrector(const Grid& grid, Region support, bool vector_mode,
                        double halo_weight = 0.25);
    DivergenceCorrector(const Grid& grid, std::vector<char> support_mask,
                        std::vector<char> residual_mask, bool vector_mode);

    struct Result {
        TensorField u;
        double rel_residual = 0.0;
        int iterations = 0;
    };
    Result solve(const TensorField& rhs, int max_iters, double rel_tol,
                 const TensorField* warm_start = nullptr) const;

    TensorField forward(const TensorField& u) const;  // mask(DD u) or mask(div u)
    const std::vector<char>& residual_mask() const { return in_mask_; }

    // Direct minimum-norm solve through the assembled interior stencil rows
    // (A A^T Cholesky). Available when every residual row uses only central
    // stencils and the row count is moderate; exact linearity, floor accuracy.
    bool direct_available() const { return direct_ready_; }
    TensorField solve_direct(const TensorField& rhs) const;

  private:
    TensorField adjoint(const TensorField& r) const;
    TensorField project(const TensorField& u) const;  // restrict to support points
    void try_build_direct();

    Grid grid_;
    bool vector_mode_;
    std::vector<char> in_support_;
    std::vector<char> in_mask_;
    std::vector<float> row_weight_;  // per-point row weight (halo rows damped)

    // direct-path data
    bool direct_ready_ = false;
    std::vector<std::int64_t> dof_points_;   // support grid indices
    std::vector<std::int64_t> row_points_;   // residual grid indices
    std::vector<double> amat_;               // rows x (6 * ndof), row-major
    std::vector<double> chol_;               // Cholesky factor of A A^T + eps
    int nrows_ = 0;
    int ndof_ = 0;
};

}  // namespace gravglue

namespace gravglue {
// kernel-core regularization scale in units of the internal cell size
extern double g_core_delta_factor;
}

namespace gravglue {
// toggle for the chain defect transports (experimentation)
extern bool g_chain_transports;
}
