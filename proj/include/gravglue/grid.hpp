#pragma once

#include <cstdint>
#include <vector>

#include "gravglue/errors.hpp"
#include "gravglue/geometry.hpp"

namespace gravglue {

// =============================================================================
// Uniform cubic Cartesian grid. Samples live at cell centers:
//   x(i,j,k) = origin + h * (i+1/2, j+1/2, k+1/2),   0 <= i,j,k < n.
// The physical box is origin + [0, n*h)^3.
// =============================================================================
struct Grid {
    int n = 0;
    double h = 0.0;
    Vec3 origin;

    Grid() = default;
    Grid(int n_, double h_, Vec3 origin_) : n(n_), h(h_), origin(origin_) {
        require(h > 0.0, "bad-grid", "spacing must be positive");
        require(n >= 8, "bad-grid", "need at least 8 cells per axis");
    }

    // Centered box [-half, half]^3
    static Grid centered(int n, double half_extent) {
        return Grid(n, 2.0 * half_extent / n, Vec3{-half_extent, -half_extent, -half_extent});
    }

    std::int64_t num_points() const {
        return static_cast<std::int64_t>(n) * n * n;
    }
    std::int64_t index(int i, int j, int k) const {
        return i + static_cast<std::int64_t>(n) * (j + static_cast<std::int64_t>(n) * k);
    }
    Vec3 point(int i, int j, int k) const {
        return origin + h * Vec3{i + 0.5, j + 0.5, k + 0.5};
    }
    Vec3 point(std::int64_t idx) const {
        int i = static_cast<int>(idx % n);
        int j = static_cast<int>((idx / n) % n);
        int k = static_cast<int>(idx / (static_cast<std::int64_t>(n) * n));
        return point(i, j, k);
    }
    double cell_volume() const { return h * h * h; }

    bool same_as(const Grid& o) const {
        return n == o.n && h == o.h && origin[0] == o.origin[0] && origin[1] == o.origin[1] &&
               origin[2] == o.origin[2];
    }
};

enum class Rank : int { scalar = 0, vector = 1, sym2 = 2 };

inline int component_count(Rank r) {
    switch (r) {
        case Rank::scalar: return 1;
        case Rank::vector: return 3;
        case Rank::sym2: return 6;
    }
    return 0;
}

// sym2 storage order (11,12,13,22,23,33)
inline int sym2_index(int i, int j) {
    static const int map[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
    return map[i][j];
}

// =============================================================================
// TensorField: per-point samples of a scalar / vector / symmetric 2-tensor.
// Fields are treated as immutable values by all operations (pure functions);
// mutation is only used while a field is being built.
// =============================================================================
class TensorField {
  public:
    TensorField() = default;
    TensorField(const Grid& grid, Rank rank)
        : grid_(grid), rank_(rank),
          comp_(component_count(rank),
                std::vector<double>(static_cast<std::size_t>(grid.num_points()), 0.0)) {}

    const Grid& grid() const { return grid_; }
    Rank rank() const { return rank_; }
    int components() const { return static_cast<int>(comp_.size()); }

    std::vector<double>& comp(int c) { return comp_[c]; }
    const std::vector<double>& comp(int c) const { return comp_[c]; }

    double& at(int c, std::int64_t idx) { return comp_[c][static_cast<std::size_t>(idx)]; }
    double at(int c, std::int64_t idx) const { return comp_[c][static_cast<std::size_t>(idx)]; }

    // sym2 access by (i,j)
    double& sym(int i, int j, std::int64_t idx) { return comp_[sym2_index(i, j)][static_cast<std::size_t>(idx)]; }
    double sym(int i, int j, std::int64_t idx) const { return comp_[sym2_index(i, j)][static_cast<std::size_t>(idx)]; }

    bool finite() const;
    double max_abs() const;

  private:
    Grid grid_;
    Rank rank_ = Rank::scalar;
    std::vector<std::vector<double>> comp_;
};

// elementwise algebra (shapes must match)
TensorField operator+(const TensorField& a, const TensorField& b);
TensorField operator-(const TensorField& a, const TensorField& b);
TensorField operator*(double s, const TensorField& a);
TensorField& axpy(TensorField& y, double a, const TensorField& x);  // y += a*x

// =============================================================================
// Initial data set (g, k) and the (h, pi) change of variables carrier.
// =============================================================================
struct InitialDataSet {
    TensorField g;  // sym2, metric
    TensorField k;  // sym2, second fundamental form

    // pointwise positive-definiteness of g via principal minors
    bool metric_positive_definite() const;
};

struct HPiPair {
    TensorField h;
    TensorField pi;
};

}  // namespace gravglue
