#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "eigendrift/model.hpp"
#include "eigendrift/operators.hpp"

namespace eigendrift {

/// Solver failure: non-convergence or a non-positive principal vector.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EigenPair {
    double lambda = 0.0;
    std::vector<double> vector;  // unit 2-norm, positive
    std::size_t iterations = 0;
};

/// Number of eigenvalues of a symmetric tridiagonal matrix strictly below x.
std::size_t sturm_count(const TridiagonalMatrix& t, double x);

/// Smallest eigenvalue by Sturm bisection, vector by inverse iteration,
/// eigenvalue finally replaced by the Rayleigh quotient.
EigenPair principal_eig_sym_tridiag(const TridiagonalMatrix& t);

struct PowerOptions {
    double tolerance = 1e-12;           // direction change per step
    std::size_t max_iterations = 10000;
    /// Start from σ = 0 on Z-matrices with nonnegative row sums (one of them
    /// positive) instead of the Gershgorin bound minus one.
    bool allow_zero_shift = true;
    /// Move σ halfway toward the Collatz-Wielandt lower bound as it improves.
    bool adapt_shift = true;
};

/// Shift-inverted power iteration converging to the eigenvalue with a
/// positive eigenvector.
EigenPair principal_eig_power(const TridiagonalMatrix& a, const PowerOptions& options = {});
EigenPair principal_eig_power(const SparseMatrix& a, const PowerOptions& options = {});
/// Tridiagonal input with lower[i+1]·upper[i] >= 0: diagonal similarity to a
/// symmetric tridiagonal, then principal_eig_sym_tridiag; vector mapped back
/// in log scale.
EigenPair principal_eig_similar(const TridiagonalMatrix& a);
/// Symmetric sparse input: same iteration on a sparse LDLᵀ factorization.
EigenPair principal_eig_sym_sparse(const SparseMatrix& a, const PowerOptions& options = {});

enum class FormPolicy { Auto, Direct, Symmetrized, Both };

/// Second solution produced under FormPolicy::Both.
struct FormComparison {
    double lambda = 0.0;
    std::string form;
    double discrepancy = 0.0;  // |λ_primary - λ_other|
};

struct EigenResult {
    double lambda = 0.0;
    /// Nodal values of w (Symmetrized) or φ (Direct), ∫f² = 1 by the
    /// trapezoid rule, positive.
    Field eigenfunction;
    /// ‖Av - λv‖∞ / ‖v‖∞ on the assembled matrix.
    double residual = 0.0;
    std::size_t iterations = 0;
    DiscretizationForm form;
    std::size_t grid_cells = 0;
    std::optional<FormComparison> comparison;
};

/// Form selected by FormPolicy::Auto.
FormTag auto_form(const ProblemSpec& spec);

EigenResult solve(const ProblemSpec& spec, const Grid1D& grid, FormPolicy policy = FormPolicy::Auto);
EigenResult solve(const ProblemSpec& spec, const Grid2D& grid, FormPolicy policy = FormPolicy::Auto);

/// Discrete ∫ D|∇w - (α/D)w∇m|² + Vw² plus Σ D·c·w² over Robin faces,
/// divided by ∫w². Gradient terms use the midpoint rule per cell edge,
/// the rest trapezoid weights.
double rayleigh_quotient(const ProblemSpec& spec, const Grid1D& grid, const Field& w);
double rayleigh_quotient(const ProblemSpec& spec, const Grid2D& grid, const Field& w);

}  // namespace eigendrift
