#include "eigendrift/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace eigendrift {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Scaled so that vectors of magnitude up to the overflow threshold survive.
double norm2(const std::vector<double>& v) {
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, std::abs(x));
    if (mx == 0.0 || !std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : v) s += (x / mx) * (x / mx);
    return mx * std::sqrt(s);
}

void normalize(std::vector<double>& v) {
    const double n = norm2(v);
    for (double& x : v) x /= n;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Entries below this fraction of the max are treated as underflowed zeros.
constexpr double kTinyFraction = 1e-250;

void check_positive(std::vector<double>& v) {
    double mx = 0.0;
    std::size_t imax = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) > mx) {
            mx = std::abs(v[i]);
            imax = i;
        }
    if (v[imax] < 0.0)
        for (double& x : v) x = -x;
    for (double x : v)
        if (x < -1e-10 * mx) throw NumericalError("principal vector has negative entries: wrong eigenpair");
    for (double& x : v)
        if (x < 0.0) x = 0.0;
}

// Thomas elimination for (A - σI)x = b. When A - σI is a Z-matrix whose
// shifted row sums are nonnegative the pivots are formed without
// subtraction, which keeps full relative accuracy for nearly singular
// M-matrices.
std::vector<double> tridiag_solve(const TridiagonalMatrix& a, const std::vector<double>& excess, double sigma,
                                  const std::vector<double>& b, bool subtraction_free) {
    const std::size_t n = a.size();
    std::vector<double> d(n), y(n), x(n);
    if (subtraction_free) {
        double s_prev = excess[0] - sigma;
        d[0] = s_prev + std::abs(a.upper[0]) * (n > 1 ? 1.0 : 0.0);
        y[0] = b[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double f = std::abs(a.lower[i]) / d[i - 1];
            const double s = (excess[i] - sigma) + f * s_prev;
            d[i] = s + (i + 1 < n ? std::abs(a.upper[i]) : 0.0);
            y[i] = b[i] + f * y[i - 1];
            s_prev = s;
        }
        x[n - 1] = y[n - 1] / d[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) x[i] = (y[i] + std::abs(a.upper[i]) * x[i + 1]) / d[i];
        return x;
    }
    d[0] = a.diag[0] - sigma;
    y[0] = b[0];
    for (std::size_t i = 1; i < n; ++i) {
        const double f = a.lower[i] / d[i - 1];
        d[i] = a.diag[i] - sigma - f * a.upper[i - 1];
        y[i] = b[i] - f * y[i - 1];
    }
    x[n - 1] = y[n - 1] / d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (y[i] - a.upper[i] * x[i + 1]) / d[i];
    return x;
}

struct ShiftStart {
    double sigma;
    bool zero_shift;
};

ShiftStart initial_shift(bool z_matrix, const std::vector<double>& excess, double gershgorin_lower,
                         const PowerOptions& options) {
    if (options.allow_zero_shift && z_matrix) {
        const bool nonneg = std::all_of(excess.begin(), excess.end(), [](double e) { return e >= 0.0; });
        const bool some_pos = std::any_of(excess.begin(), excess.end(), [](double e) { return e > 0.0; });
        if (nonneg && some_pos) return {0.0, true};
    }
    return {gershgorin_lower - 1.0, false};
}

// Shifted inverse iteration on a positive start vector. `solve(σ, b)`
// returns (A - σI)^{-1} b; `refactor(σ)` is called whenever σ moves.
EigenPair inverse_iteration(std::size_t n, ShiftStart start, double min_excess, const PowerOptions& options,
                            std::size_t max_refactors, const std::function<void(double)>& refactor,
                            const std::function<std::vector<double>(const std::vector<double>&)>& solve) {
    double sigma = start.sigma;
    refactor(sigma);
    std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
    std::size_t refactors = 0;
    double lambda = sigma;
    for (std::size_t it = 1; it <= options.max_iterations; ++it) {
        std::vector<double> y = solve(x);
        double ymax = 0.0;
        for (double v : y) ymax = std::max(ymax, std::abs(v));
        if (!(ymax > 0.0) || !std::isfinite(ymax)) throw NumericalError("inverse iteration produced a non-finite vector");
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += x[i] * (y[i] / ymax);
        if (!(mu > 0.0))
            throw NumericalError("inverse iteration lost positivity (shift above the principal eigenvalue)");
        lambda = sigma + 1.0 / (mu * ymax);

        // Collatz-Wielandt lower bound over entries that did not underflow
        double lower = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            if (y[i] > kTinyFraction * ymax && x[i] > 0.0) lower = std::min(lower, x[i] / y[i]);

        normalize(y);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) change += (y[i] - x[i]) * (y[i] - x[i]);
        change = std::sqrt(change);
        x = std::move(y);
        if (change < options.tolerance) {
            check_positive(x);
            return {lambda, std::move(x), it};
        }

        if (options.adapt_shift && refactors < max_refactors && std::isfinite(lower) && lower > 0.0) {
            const double next = sigma + 0.5 * lower;
            // a zero start shift stays subtraction-free only below every row sum
            if (!start.zero_shift || next <= min_excess) {
                if (next - sigma > 1e-3 * std::max(std::abs(lambda - sigma), kEps)) {
                    sigma = next;
                    refactor(sigma);
                    ++refactors;
                }
            }
        }
    }
    throw NumericalError("inverse iteration stagnated after " + std::to_string(options.max_iterations) +
                         " iterations");
}

}  // namespace

// ---------------------------------------------------------------------------
// symmetric tridiagonal

std::size_t sturm_count(const TridiagonalMatrix& t, double x) {
    const std::size_t n = t.size();
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(t.diag[i]) + 2.0 * std::abs(t.upper[i]));
    const double pivmin = std::max(std::numeric_limits<double>::min(), kEps * kEps * scale);
    std::size_t count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double off = i > 0 ? t.lower[i] : 0.0;
        d = (t.diag[i] - x) - (i > 0 ? off * off / d : 0.0);
        if (std::abs(d) < pivmin) d = -pivmin;
        if (d < 0.0) ++count;
    }
    return count;
}

EigenPair principal_eig_sym_tridiag(const TridiagonalMatrix& t) {
    const std::size_t n = t.size();
    if (n == 0) throw std::invalid_argument("empty matrix");
    double lo = t.gershgorin_lower();
    double hi = *std::min_element(t.diag.begin(), t.diag.end());
    hi = std::max(hi, lo) + kEps * (1.0 + std::abs(hi));
    const double scale = std::max(std::abs(t.gershgorin_lower()), std::abs(t.gershgorin_upper()));
    const double tol = 1e-12 * scale;

    int it = 0;
    for (; it < 200; ++it) {
        if (hi - lo <= std::max(4.0 * kEps * std::max(std::abs(lo), std::abs(hi)), 1e-300)) break;
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (sturm_count(t, mid) == 0)
            lo = mid;
        else
            hi = mid;
    }
    if (hi - lo > tol) throw NumericalError("Sturm bisection did not converge in 200 iterations");

    // a few inverse-iteration steps just below the bracket
    const double sigma = lo - std::max(2.0 * (hi - lo), 4.0 * kEps * std::max(1.0, std::abs(lo)));
    const std::vector<double> excess = t.row_excess();
    std::vector<double> v(n, 1.0);
    normalize(v);
    for (int k = 0; k < 3; ++k) {
        v = tridiag_solve(t, excess, sigma, v, false);
        normalize(v);
    }
    check_positive(v);
    const std::vector<double> tv = t.multiply(v);
    const double rq = dot(v, tv);
    return {rq, std::move(v), static_cast<std::size_t>(it) + 3};
}

EigenPair principal_eig_similar(const TridiagonalMatrix& a) {
    const std::size_t n = a.size();
    if (n == 0) throw std::invalid_argument("empty matrix");
    TridiagonalMatrix s = a;
    s.symmetric = true;
    std::vector<double> logd(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double l = a.lower[i + 1], u = a.upper[i];
        if (l * u < 0.0) throw std::invalid_argument("off-diagonal pairs must share a sign");
        const double off = (l < 0.0 ? -1.0 : 1.0) * std::sqrt(std::abs(l)) * std::sqrt(std::abs(u));
        s.upper[i] = off;
        s.lower[i + 1] = off;
        logd[i + 1] = logd[i] + (l != 0.0 && u != 0.0 ? 0.5 * (std::log(std::abs(l)) - std::log(std::abs(u))) : 0.0);
    }
    s.excess.clear();
    EigenPair p = principal_eig_sym_tridiag(s);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (p.vector[i] > 0.0) top = std::max(top, logd[i] + std::log(p.vector[i]));
    for (std::size_t i = 0; i < n; ++i)
        p.vector[i] = p.vector[i] > 0.0 ? std::exp(logd[i] + std::log(p.vector[i]) - top) : 0.0;
    normalize(p.vector);
    // polish on the original matrix just below λ
    const std::vector<double> excess = a.row_excess();
    const double scale = std::max(std::abs(a.gershgorin_lower()), std::abs(a.gershgorin_upper()));
    const double sigma = p.lambda - (1e-6 * std::abs(p.lambda) + 16.0 * kEps * scale);
    for (int k = 0; k < 3; ++k) {
        std::vector<double> y = tridiag_solve(a, excess, sigma, p.vector, false);
        if (!std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); })) break;
        normalize(y);
        p.vector = std::move(y);
    }
    check_positive(p.vector);
    p.iterations += 3;
    return p;
}

// ---------------------------------------------------------------------------
// inverse power iteration

EigenPair principal_eig_power(const TridiagonalMatrix& a, const PowerOptions& options) {
    const std::size_t n = a.size();
    if (n == 0) throw std::invalid_argument("empty matrix");
    const std::vector<double> excess = a.row_excess();
    const bool z = a.is_z_matrix();
    const ShiftStart start = initial_shift(z, excess, a.gershgorin_lower(), options);
    const double min_excess = *std::min_element(excess.begin(), excess.end());
    double sigma = start.sigma;
    try {
        return inverse_iteration(
            n, start, min_excess, options, std::numeric_limits<std::size_t>::max(), [&](double s) { sigma = s; },
            [&](const std::vector<double>& b) { return tridiag_solve(a, excess, sigma, b, z); });
    } catch (const NumericalError&) {
        if (!z) throw;
    }
    return principal_eig_similar(a);
}

namespace {

std::vector<double> sparse_row_sums(const SparseMatrix& a) {
    std::vector<double> e(a.size(), 0.0);
    for (Eigen::Index r = 0; r < a.data.outerSize(); ++r)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a.data, r); it; ++it)
            e[static_cast<std::size_t>(r)] += it.value();
    return e;
}

bool sparse_is_z(const SparseMatrix& a) {
    for (Eigen::Index r = 0; r < a.data.outerSize(); ++r)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a.data, r); it; ++it)
            if (it.col() != r && it.value() > 0.0) return false;
    return true;
}

Eigen::SparseMatrix<double> shifted_colmajor(const SparseMatrix& a, double sigma) {
    Eigen::SparseMatrix<double> m = a.data;
    Eigen::SparseMatrix<double> id(m.rows(), m.cols());
    id.setIdentity();
    m -= sigma * id;
    m.makeCompressed();
    return m;
}

constexpr std::size_t kMaxSparseRefactors = 4;

}  // namespace

EigenPair principal_eig_power(const SparseMatrix& a, const PowerOptions& options) {
    const std::size_t n = a.size();
    if (n == 0) throw std::invalid_argument("empty matrix");
    const std::vector<double> excess = sparse_row_sums(a);
    const ShiftStart start = initial_shift(sparse_is_z(a), excess, a.gershgorin_lower(), options);
    const double min_excess = *std::min_element(excess.begin(), excess.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    return inverse_iteration(
        n, start, min_excess, options, kMaxSparseRefactors,
        [&](double s) {
            lu.compute(shifted_colmajor(a, s));
            if (lu.info() != Eigen::Success) throw NumericalError("sparse LU factorization failed");
        },
        [&](const std::vector<double>& b) {
            Eigen::Map<const Eigen::VectorXd> bb(b.data(), static_cast<Eigen::Index>(n));
            Eigen::VectorXd x = lu.solve(bb);
            return std::vector<double>(x.data(), x.data() + x.size());
        });
}

EigenPair principal_eig_sym_sparse(const SparseMatrix& a, const PowerOptions& options) {
    const std::size_t n = a.size();
    if (n == 0) throw std::invalid_argument("empty matrix");
    PowerOptions opt = options;
    opt.allow_zero_shift = false;
    const ShiftStart start{a.gershgorin_lower() - 1.0, false};
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    EigenPair p = inverse_iteration(
        n, start, 0.0, opt, kMaxSparseRefactors,
        [&](double s) {
            ldlt.compute(shifted_colmajor(a, s));
            if (ldlt.info() != Eigen::Success) throw NumericalError("sparse LDLT factorization failed");
        },
        [&](const std::vector<double>& b) {
            Eigen::Map<const Eigen::VectorXd> bb(b.data(), static_cast<Eigen::Index>(n));
            Eigen::VectorXd x = ldlt.solve(bb);
            return std::vector<double>(x.data(), x.data() + x.size());
        });
    p.lambda = dot(p.vector, a.multiply(p.vector));
    return p;
}

// ---------------------------------------------------------------------------
// dispatch

FormTag auto_form(const ProblemSpec& spec) {
    if (spec.kinks.empty() && spec.exponent_range() < 700.0) return FormTag::Symmetrized;
    return FormTag::Direct;
}

namespace {

template <class M>
double residual_of(const M& a, const EigenPair& p) {
    const std::vector<double> av = a.multiply(p.vector);
    double r = 0.0, vmax = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        r = std::max(r, std::abs(av[i] - p.lambda * p.vector[i]));
        vmax = std::max(vmax, std::abs(p.vector[i]));
    }
    return r / vmax;
}

void normalize_trapezoid(std::vector<double>& u, const std::vector<double>& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += weights[i] * u[i] * u[i];
    const double f = 1.0 / std::sqrt(s);
    for (double& x : u) x *= f;
}

std::vector<double> tensor_weights(const Grid2D& g) {
    const std::vector<double> wx = g.x().weights(), wy = g.y().weights();
    std::vector<double> w(g.size());
    for (std::size_t j = 0; j < g.ny(); ++j)
        for (std::size_t i = 0; i < g.nx(); ++i) w[g.index(i, j)] = wx[i] * wy[j];
    return w;
}

EigenResult solve_1d_form(const ProblemSpec& spec, const Grid1D& grid, FormTag tag) {
    EigenResult r;
    r.grid_cells = grid.cells();
    if (tag == FormTag::Symmetrized) {
        const Assembled1D a = assemble_symmetrized_1d(spec, grid);
        const EigenPair p = principal_eig_sym_tridiag(a.matrix);
        r.lambda = p.lambda;
        r.iterations = p.iterations;
        r.residual = residual_of(a.matrix, p);
        r.form = a.form;
        std::vector<double> u = a.to_nodal(p.vector);
        normalize_trapezoid(u, grid.weights());
        r.eigenfunction = Field(grid, std::move(u));
        return r;
    }
    const Assembled1D a = assemble_direct_1d(spec, grid, Scheme::Fitted);
    const EigenPair p = principal_eig_power(a.matrix);
    r.lambda = p.lambda;
    r.iterations = p.iterations;
    r.residual = residual_of(a.matrix, p);
    r.form = a.form;
    std::vector<double> u = a.to_nodal(p.vector);
    normalize_trapezoid(u, grid.weights());
    r.eigenfunction = Field(grid, std::move(u));
    return r;
}

EigenResult solve_2d_form(const ProblemSpec& spec, const Grid2D& grid, FormTag tag) {
    const DiscretizationForm form =
        tag == FormTag::Symmetrized ? DiscretizationForm::symmetrized() : DiscretizationForm::direct();
    const Assembled2D a = assemble_2d(spec, grid, form);
    const EigenPair p = tag == FormTag::Symmetrized ? principal_eig_sym_sparse(a.matrix) : principal_eig_power(a.matrix);
    EigenResult r;
    r.grid_cells = grid.x().cells();
    r.lambda = p.lambda;
    r.iterations = p.iterations;
    r.residual = residual_of(a.matrix, p);
    r.form = a.form;
    std::vector<double> u = a.to_nodal(p.vector);
    normalize_trapezoid(u, tensor_weights(grid));
    r.eigenfunction = Field(grid, std::move(u));
    return r;
}

template <class G, class F>
EigenResult dispatch(const ProblemSpec& spec, const G& grid, FormPolicy policy, F&& solve_form) {
    const auto problems = validate(spec);
    if (!problems.empty()) throw std::invalid_argument("invalid problem: " + problems.front());
    switch (policy) {
    case FormPolicy::Auto: return solve_form(spec, grid, auto_form(spec));
    case FormPolicy::Direct: return solve_form(spec, grid, FormTag::Direct);
    case FormPolicy::Symmetrized:
        if (!spec.kinks.empty()) throw std::invalid_argument("symmetrized form needs a kink-free drift");
        return solve_form(spec, grid, FormTag::Symmetrized);
    case FormPolicy::Both: {
        if (!spec.kinks.empty()) throw std::invalid_argument("symmetrized form needs a kink-free drift");
        EigenResult primary = solve_form(spec, grid, FormTag::Symmetrized);
        const EigenResult other = solve_form(spec, grid, FormTag::Direct);
        primary.comparison = FormComparison{other.lambda, other.form.name(), std::abs(primary.lambda - other.lambda)};
        return primary;
    }
    }
    throw std::logic_error("unknown form policy");
}

}  // namespace

EigenResult solve(const ProblemSpec& spec, const Grid1D& grid, FormPolicy policy) {
    if (spec.dimension() != 1) throw std::invalid_argument("1D grid for a 2D problem");
    return dispatch(spec, grid, policy, solve_1d_form);
}

EigenResult solve(const ProblemSpec& spec, const Grid2D& grid, FormPolicy policy) {
    if (spec.dimension() != 2) throw std::invalid_argument("2D grid for a 1D problem");
    return dispatch(spec, grid, policy, solve_2d_form);
}

// ---------------------------------------------------------------------------
// Rayleigh quotient

double rayleigh_quotient(const ProblemSpec& spec, const Grid1D& grid, const Field& w) {
    if (w.size() != grid.size()) throw std::invalid_argument("field does not match grid");
    const double D = spec.D, a = spec.alpha;
    const std::vector<double> wt = grid.weights();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < grid.cells(); ++i) {
        const double h = grid.spacing(i);
        const double mid = 0.5 * (grid[i] + grid[i + 1]);
        const double g = (w[i + 1] - w[i]) / h - (a / D) * 0.5 * (w[i] + w[i + 1]) * evaluate(spec.drift.mx(), mid);
        num += D * h * g * g;
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        num += wt[i] * evaluate(spec.V, grid[i]) * w[i] * w[i];
        den += wt[i] * w[i] * w[i];
    }
    const BoundaryCondition& l = spec.face(Face::Left);
    const BoundaryCondition& r = spec.face(Face::Right);
    if (l.kind == BcKind::Robin) num += D * l.coefficient_at({grid.a(), 0.0}) * w[0] * w[0];
    if (r.kind == BcKind::Robin) num += D * r.coefficient_at({grid.b(), 0.0}) * w[grid.size() - 1] * w[grid.size() - 1];
    if (!(den > 0.0)) throw std::invalid_argument("rayleigh_quotient of a zero field");
    return num / den;
}

double rayleigh_quotient(const ProblemSpec& spec, const Grid2D& grid, const Field& w) {
    if (w.size() != grid.size()) throw std::invalid_argument("field does not match grid");
    const double D = spec.D, a = spec.alpha;
    const Grid1D& gx = grid.x();
    const Grid1D& gy = grid.y();
    const std::vector<double> wx = gx.weights(), wy = gy.weights();
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < grid.ny(); ++j) {
        for (std::size_t i = 0; i + 1 < grid.nx(); ++i) {
            const double h = gx.spacing(i);
            const std::size_t p = grid.index(i, j), q = grid.index(i + 1, j);
            const Point mid{0.5 * (gx[i] + gx[i + 1]), gy[j]};
            const double g = (w[q] - w[p]) / h - (a / D) * 0.5 * (w[p] + w[q]) * evaluate(spec.drift.mx(), mid);
            num += D * h * wy[j] * g * g;
        }
    }
    for (std::size_t j = 0; j + 1 < grid.ny(); ++j) {
        for (std::size_t i = 0; i < grid.nx(); ++i) {
            const double h = gy.spacing(j);
            const std::size_t p = grid.index(i, j), q = grid.index(i, j + 1);
            const Point mid{gx[i], 0.5 * (gy[j] + gy[j + 1])};
            const double g = (w[q] - w[p]) / h - (a / D) * 0.5 * (w[p] + w[q]) * evaluate(spec.drift.my(), mid);
            num += D * h * wx[i] * g * g;
        }
    }
    for (std::size_t j = 0; j < grid.ny(); ++j) {
        for (std::size_t i = 0; i < grid.nx(); ++i) {
            const std::size_t p = grid.index(i, j);
            const double wt = wx[i] * wy[j];
            num += wt * evaluate(spec.V, Point{gx[i], gy[j]}) * w[p] * w[p];
            den += wt * w[p] * w[p];
        }
    }
    const auto face = [&](Face f, std::size_t i, std::size_t j, double len) {
        if (spec.face(f).kind != BcKind::Robin) return;
        const std::size_t p = grid.index(i, j);
        num += D * spec.face(f).coefficient_at({gx[i], gy[j]}) * len * w[p] * w[p];
    };
    for (std::size_t j = 0; j < grid.ny(); ++j) {
        face(Face::Left, 0, j, wy[j]);
        face(Face::Right, grid.nx() - 1, j, wy[j]);
    }
    for (std::size_t i = 0; i < grid.nx(); ++i) {
        face(Face::Bottom, i, 0, wx[i]);
        face(Face::Top, i, grid.ny() - 1, wx[i]);
    }
    if (!(den > 0.0)) throw std::invalid_argument("rayleigh_quotient of a zero field");
    return num / den;
}

}  // namespace eigendrift
