#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "eigendrift/model.hpp"

namespace eigendrift {

/// B(t) = t / (e^t - 1), with B(0) = 1.
double bernoulli(double t);

/// Square tridiagonal matrix. lower[i] = A(i, i-1), upper[i] = A(i, i+1);
/// lower[0] and upper[n-1] are unused and kept at 0.
///
/// `excess` optionally holds the exact row sums, computed analytically by the
/// assembler. Solvers use it instead of diag + lower + upper, which loses all
/// relative accuracy when the principal eigenvalue is tiny.
struct TridiagonalMatrix {
    std::vector<double> lower;
    std::vector<double> diag;
    std::vector<double> upper;
    std::vector<double> excess;
    bool symmetric = false;

    TridiagonalMatrix() = default;
    explicit TridiagonalMatrix(std::size_t n, bool symmetric_flag = false);

    std::size_t size() const { return diag.size(); }
    std::vector<double> multiply(std::span<const double> x) const;
    double gershgorin_lower() const;
    double gershgorin_upper() const;
    /// Copy with c added to the diagonal.
    TridiagonalMatrix shifted(double c) const;
    /// Off-diagonals <= 0 everywhere.
    bool is_z_matrix() const;
    /// Row sums: `excess` when present, else computed.
    std::vector<double> row_excess() const;
};

/// Compressed-row matrix from the 2D five-point stencil.
struct SparseMatrix {
    Eigen::SparseMatrix<double, Eigen::RowMajor> data;
    bool symmetric = false;

    std::size_t size() const { return static_cast<std::size_t>(data.rows()); }
    std::vector<double> multiply(std::span<const double> x) const;
    double gershgorin_lower() const;
    double gershgorin_upper() const;
    SparseMatrix shifted(double c) const;
};

enum class FormTag { Direct, Symmetrized };
enum class Scheme { Centered, Fitted };

/// Which discrete operator is built. Symmetrized carries the potential
/// Q = α²/D·|∇m|² + αΔm + V sampled at the grid nodes.
struct DiscretizationForm {
    FormTag tag = FormTag::Direct;
    Scheme scheme = Scheme::Fitted;
    Field Q;

    static DiscretizationForm direct(Scheme s = Scheme::Fitted);
    static DiscretizationForm symmetrized();
    /// "direct-fitted", "direct-centered" or "sym".
    std::string name() const;
};

/// Q(x) of the symmetrized operator.
double symmetrized_potential(const ProblemSpec& spec, Point p);
/// Robin coefficient of the transformed condition ∂w/∂n + γw = 0 on a face.
double transformed_robin(const ProblemSpec& spec, Face f, Point p);

/// A 1D operator restricted to its unknowns (Dirichlet nodes removed).
/// Matrix eigenvector v maps back to nodal values by node_scale[k]·v[k].
struct Assembled1D {
    TridiagonalMatrix matrix;
    DiscretizationForm form;
    std::vector<std::size_t> nodes;   // grid index of each unknown
    std::vector<double> node_scale;   // 1/sqrt(weight) for Symmetrized, 1 otherwise
    std::size_t grid_size = 0;

    /// Nodal values on the full grid, zero at eliminated nodes.
    std::vector<double> to_nodal(std::span<const double> v) const;
};

/// Vertex-centred finite volumes for -D w'' + Q w, scaled by the inverse
/// square root of the dual-cell lengths so the result is exactly symmetric.
Assembled1D assemble_symmetrized_1d(const ProblemSpec& spec, const Grid1D& grid);

/// Finite volumes for -Dφ'' - 2αm'φ' + Vφ on the untransformed unknown.
Assembled1D assemble_direct_1d(const ProblemSpec& spec, const Grid1D& grid, Scheme scheme);

struct Assembled2D {
    SparseMatrix matrix;
    DiscretizationForm form;
    std::vector<std::size_t> nodes;
    std::vector<double> node_scale;
    std::vector<double> weights;  // tensor trapezoid weight of each unknown
    std::size_t grid_size = 0;

    std::vector<double> to_nodal(std::span<const double> v) const;
};

/// Five-point finite volumes on a tensor grid; `form` picks the operator.
Assembled2D assemble_2d(const ProblemSpec& spec, const Grid2D& grid, const DiscretizationForm& form);

/// "i j value" triplets, 17 significant digits, row-major, nonzeros only.
void dump_triplets(std::ostream& os, const TridiagonalMatrix& m);
void dump_triplets(std::ostream& os, const SparseMatrix& m);

}  // namespace eigendrift
