#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eigendrift/eigen.hpp"
#include "eigendrift/model.hpp"

namespace eigendrift {

// ---------------------------------------------------------------------------
// critical sets

struct CriticalPoint {
    Point location;
    std::vector<double> kappa;
};

/// Degenerate interior interval where |∇m| stays below tol_grad.
struct CriticalInterval {
    double left = 0.0;
    double right = 0.0;
};

struct BoundaryPoint {
    Face face = Face::Left;
    Point location;
    std::vector<double> kappa;
    double grad_norm = 0.0;
};

struct CriticalSet {
    std::vector<CriticalPoint> sigma1_points;
    std::vector<CriticalInterval> sigma1_intervals;
    std::vector<BoundaryPoint> sigma2;  // boundary, |∇m| < tol_grad
    std::vector<BoundaryPoint> sigma3;  // boundary, ∇m·n > tol_grad
    double tol_grad = 0.0;
    std::vector<std::string> diagnostics;
};

/// Default tolerance: 1e-8 times max |∇m| over the domain.
CriticalSet critical_points(const Drift& drift, const Domain& domain, const std::vector<double>& kinks = {},
                            std::optional<double> tol_grad = std::nullopt);

/// 1D: (m''). 2D: closed-form eigenvalues of the symmetric Hessian, descending.
std::vector<double> hessian_eigs(const Drift& drift, Point p, int dimension);

// ---------------------------------------------------------------------------
// D → 0

struct Candidate {
    std::string set;  // "sigma1", "sigma1-interval", "sigma2", "sigma3"
    Point location;
    std::optional<CriticalInterval> interval;
    double V = 0.0;
    double curvature = 0.0;   // α·Σ(|κᵢ| + κᵢ)
    double correction = 0.0;  // 2α·c·|∇m| on Robin faces
    double total = 0.0;
};

struct AsymptoticReport {
    double limit = 0.0;  // may be ±infinity
    std::optional<Point> location;
    std::vector<Candidate> candidates;
    std::string theorem;  // "neumann", "dirichlet", "robin" or "mixed"
    std::vector<std::string> warnings;
    CriticalSet critical;
};

/// Closed-form limit of λ(D) as D → 0.
AsymptoticReport limit_small_D(const ProblemSpec& spec, std::optional<double> tol_grad = std::nullopt);

// ---------------------------------------------------------------------------
// D → ∞

enum class LargeDVerdict { PlusInfinity, MinusInfinity, Finite };
const char* verdict_name(LargeDVerdict v);

struct LargeDReport {
    double mu1 = 0.0;
    LargeDVerdict verdict = LargeDVerdict::Finite;
    bool algebraic = false;        // sign fixed by exact algebra rather than a gate
    bool tolerance_based = false;  // Finite decided only by |μ1| under the gate
    std::optional<double> value;   // the finite limit
    Field phi0;
    std::string method;
};

/// φ₀ = a·x + b on [0, 1] with -φ'(0) + k0φ(0) = 0, φ'(1) + k1φ(1) = 0,
/// ∫φ₀² = 1. Requires k0 > -1 and k0 + k1 + k0k1 = 0.
struct LinePhi0 {
    double a = 0.0;
    double b = 0.0;
};
LinePhi0 robin_line_phi0(double k0, double k1);

/// Sign of μ1 on (0, 1) with constant Robin coefficients: +1, -1 or 0.
int classify_robin_line(double k0, double k1);

/// μ1 of -φ'' = μφ on the problem's domain with its boundary conditions,
/// computed with a uniform grid of `cells` cells.
double mu1_numeric(const ProblemSpec& spec, std::size_t cells = 2000);

LargeDReport limit_large_D(const ProblemSpec& spec);

// ---------------------------------------------------------------------------
// sweeps

/// Copy of `spec` with diffusion D. Robin faces with InverseD scaling keep
/// D·k fixed.
ProblemSpec with_diffusion(const ProblemSpec& spec, double D);

struct GridPolicy {
    std::size_t base_cells = 256;
    std::size_t nodes_per_layer = 16;
    std::size_t max_levels = 7;
    /// 2D cap on cells per axis; the finest level is reported if unconverged.
    std::size_t max_cells_2d = 512;
    double rel_tol = 1e-3;
    double abs_tol = 1e-10;
    /// Also refine toward boundary faces where the drift is nonzero.
    bool inflow_layers = true;
};

struct SweepRow {
    double D = 0.0;
    std::size_t grid_n = 0;
    double lambda = 0.0;
    double residual = 0.0;
    std::string form;
    std::size_t levels = 0;
    bool converged = false;
    std::string error;  // nonempty when the row failed
};

struct SweepTable {
    std::vector<SweepRow> rows;
};

/// Layers used for a 1D solve at diffusion D.
std::vector<Layer> sweep_layers(const ProblemSpec& spec, const CriticalSet& critical, double D,
                                const GridPolicy& policy);

/// Converged principal eigenvalue at one D (1D graded grids, or 2D tensor
/// grids graded per axis).
SweepRow solve_converged(const ProblemSpec& spec, const CriticalSet& critical, const GridPolicy& policy,
                         FormPolicy form = FormPolicy::Auto);

/// Rows in input order; row failures are recorded, never thrown.
/// Worker count: EIGENDRIFT_THREADS (0 or unset = hardware concurrency).
SweepTable sweep(const std::function<ProblemSpec(double)>& make_spec, const std::vector<double>& Ds,
                 const GridPolicy& policy = {}, FormPolicy form = FormPolicy::Auto);
SweepTable sweep(const ProblemSpec& spec, const std::vector<double>& Ds, const GridPolicy& policy = {},
                 FormPolicy form = FormPolicy::Auto);

/// Worker count from EIGENDRIFT_THREADS.
std::size_t worker_count();

/// Runs f(0..n-1) on worker_count() threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f);

// ---------------------------------------------------------------------------
// rate fitting

enum class RateModel { PowerLaw, ExpInverse };

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t points = 0;
    std::vector<std::string> diagnostics;
};

/// PowerLaw: log λ against log D. ExpInverse: log λ against 1/D.
RateFit fit_rate(const SweepTable& table, RateModel model);

}  // namespace eigendrift
