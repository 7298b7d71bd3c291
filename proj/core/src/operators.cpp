#include "eigendrift/operators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace eigendrift {

double bernoulli(double t) {
    if (std::abs(t) < 1e-4) return 1.0 - 0.5 * t + t * t / 12.0;
    if (t > 700.0) return t * std::exp(-t);
    return t / std::expm1(t);
}

// ---------------------------------------------------------------------------
// TridiagonalMatrix

TridiagonalMatrix::TridiagonalMatrix(std::size_t n, bool symmetric_flag)
    : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), symmetric(symmetric_flag) {}

std::vector<double> TridiagonalMatrix::multiply(std::span<const double> x) const {
    const std::size_t n = size();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = diag[i] * x[i];
        if (i > 0) s += lower[i] * x[i - 1];
        if (i + 1 < n) s += upper[i] * x[i + 1];
        y[i] = s;
    }
    return y;
}

double TridiagonalMatrix::gershgorin_lower() const {
    double g = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size(); ++i) g = std::min(g, diag[i] - std::abs(lower[i]) - std::abs(upper[i]));
    return g;
}

double TridiagonalMatrix::gershgorin_upper() const {
    double g = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size(); ++i) g = std::max(g, diag[i] + std::abs(lower[i]) + std::abs(upper[i]));
    return g;
}

TridiagonalMatrix TridiagonalMatrix::shifted(double c) const {
    TridiagonalMatrix t = *this;
    for (double& d : t.diag) d += c;
    for (double& e : t.excess) e += c;
    return t;
}

std::vector<double> TridiagonalMatrix::row_excess() const {
    if (excess.size() == size()) return excess;
    std::vector<double> e(size());
    for (std::size_t i = 0; i < size(); ++i) e[i] = diag[i] + lower[i] + upper[i];
    return e;
}

bool TridiagonalMatrix::is_z_matrix() const {
    for (std::size_t i = 0; i < size(); ++i)
        if (lower[i] > 0.0 || upper[i] > 0.0) return false;
    return true;
}

// ---------------------------------------------------------------------------
// SparseMatrix

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
    std::vector<double> y(size(), 0.0);
    for (Eigen::Index r = 0; r < data.outerSize(); ++r) {
        double s = 0.0;
        for (decltype(data)::InnerIterator it(data, r); it; ++it) s += it.value() * x[static_cast<std::size_t>(it.col())];
        y[static_cast<std::size_t>(r)] = s;
    }
    return y;
}

double SparseMatrix::gershgorin_lower() const {
    double g = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < data.outerSize(); ++r) {
        double d = 0.0, off = 0.0;
        for (decltype(data)::InnerIterator it(data, r); it; ++it) {
            if (it.col() == r)
                d = it.value();
            else
                off += std::abs(it.value());
        }
        g = std::min(g, d - off);
    }
    return g;
}

double SparseMatrix::gershgorin_upper() const {
    double g = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < data.outerSize(); ++r) {
        double s = 0.0;
        for (decltype(data)::InnerIterator it(data, r); it; ++it) s += it.col() == r ? it.value() : std::abs(it.value());
        g = std::max(g, s);
    }
    return g;
}

SparseMatrix SparseMatrix::shifted(double c) const {
    SparseMatrix m = *this;
    for (Eigen::Index r = 0; r < m.data.outerSize(); ++r)
        for (decltype(m.data)::InnerIterator it(m.data, r); it; ++it)
            if (it.col() == r) it.valueRef() += c;
    return m;
}

// ---------------------------------------------------------------------------
// forms and coefficients

DiscretizationForm DiscretizationForm::direct(Scheme s) {
    DiscretizationForm f;
    f.tag = FormTag::Direct;
    f.scheme = s;
    return f;
}

DiscretizationForm DiscretizationForm::symmetrized() {
    DiscretizationForm f;
    f.tag = FormTag::Symmetrized;
    return f;
}

std::string DiscretizationForm::name() const {
    if (tag == FormTag::Symmetrized) return "sym";
    return scheme == Scheme::Fitted ? "direct-fitted" : "direct-centered";
}

double symmetrized_potential(const ProblemSpec& spec, Point p) {
    const int dim = spec.dimension();
    return spec.alpha * spec.alpha / spec.D * spec.drift.gradient_squared(p, dim) +
           spec.alpha * spec.drift.laplacian(p, dim) + evaluate(spec.V, p);
}

double transformed_robin(const ProblemSpec& spec, Face f, Point p) {
    const BoundaryCondition& bc = spec.face(f);
    const Point n = outward_normal(f);
    double dmdn = n.x * evaluate(spec.drift.mx(), p);
    if (n.y != 0.0) dmdn = n.y * evaluate(spec.drift.my(), p);
    return bc.coefficient_at(p) - spec.alpha / spec.D * dmdn;
}

namespace {

void require_smooth(const ProblemSpec& spec) {
    if (!spec.kinks.empty())
        throw std::logic_error("symmetrized assembly needs a kink-free drift");
}

// Indices of non-Dirichlet nodes along one axis.
std::vector<std::size_t> free_nodes(std::size_t n, bool lo_dirichlet, bool hi_dirichlet) {
    std::vector<std::size_t> out;
    for (std::size_t i = lo_dirichlet ? 1 : 0; i < (hi_dirichlet ? n - 1 : n); ++i) out.push_back(i);
    return out;
}

// Coefficients of the two-point flux across one cell, before division by
// the dual-cell length.
struct EdgeWeights {
    double forward;   // multiplies (φ_i - φ_{i+1}) in row i
    double backward;  // multiplies (φ_{i+1} - φ_i) in row i+1
};

EdgeWeights edge_weights(double D, double h, double t, Scheme scheme) {
    const double g = D / h;
    if (scheme == Scheme::Fitted) return {g * bernoulli(-t), g * bernoulli(t)};
    return {g * (1.0 + 0.5 * t), g * (1.0 - 0.5 * t)};
}

}  // namespace

std::vector<double> Assembled1D::to_nodal(std::span<const double> v) const {
    std::vector<double> u(grid_size, 0.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) u[nodes[k]] = node_scale[k] * v[k];
    return u;
}

std::vector<double> Assembled2D::to_nodal(std::span<const double> v) const {
    std::vector<double> u(grid_size, 0.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) u[nodes[k]] = node_scale[k] * v[k];
    return u;
}

// ---------------------------------------------------------------------------
// 1D

Assembled1D assemble_symmetrized_1d(const ProblemSpec& spec, const Grid1D& grid) {
    require_smooth(spec);
    const std::size_t n = grid.size();
    const BoundaryCondition& left = spec.face(Face::Left);
    const BoundaryCondition& right = spec.face(Face::Right);
    const double D = spec.D;

    Assembled1D out;
    out.form = DiscretizationForm::symmetrized();
    out.grid_size = n;
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = symmetrized_potential(spec, {grid[i], 0.0});
    out.form.Q = Field(grid, q);

    const std::vector<double> w = grid.weights();
    out.nodes = free_nodes(n, left.kind == BcKind::Dirichlet, right.kind == BcKind::Dirichlet);
    const std::size_t m = out.nodes.size();
    out.matrix = TridiagonalMatrix(m, true);
    out.node_scale.resize(m);

    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = out.nodes[k];
        double d = w[i] * q[i];
        if (i > 0) d += D / grid.spacing(i - 1);
        if (i + 1 < n) d += D / grid.spacing(i);
        if (i == 0) d += D * transformed_robin(spec, Face::Left, {grid.a(), 0.0});
        if (i + 1 == n) d += D * transformed_robin(spec, Face::Right, {grid.b(), 0.0});
        out.matrix.diag[k] = d / w[i];
        out.node_scale[k] = 1.0 / std::sqrt(w[i]);
    }
    for (std::size_t k = 0; k + 1 < m; ++k) {
        const std::size_t i = out.nodes[k];
        const double v = -(D / grid.spacing(i)) / std::sqrt(w[i] * w[i + 1]);
        out.matrix.upper[k] = v;
        out.matrix.lower[k + 1] = v;
    }
    return out;
}

Assembled1D assemble_direct_1d(const ProblemSpec& spec, const Grid1D& grid, Scheme scheme) {
    const std::size_t n = grid.size();
    const BoundaryCondition& left = spec.face(Face::Left);
    const BoundaryCondition& right = spec.face(Face::Right);
    const double D = spec.D;

    Assembled1D out;
    out.form = DiscretizationForm::direct(scheme);
    out.grid_size = n;
    const std::vector<double> w = grid.weights();

    // full nodal operator first, then restriction to the unknowns
    TridiagonalMatrix full(n, false);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = grid.spacing(i);
        const double mid = 0.5 * (grid[i] + grid[i + 1]);
        const double t = 2.0 * spec.alpha * evaluate(spec.drift.mx(), mid) * h / D;
        const EdgeWeights e = edge_weights(D, h, t, scheme);
        full.diag[i] += e.forward;
        full.upper[i] = -e.forward;
        full.diag[i + 1] += e.backward;
        full.lower[i + 1] = -e.backward;
    }
    std::vector<double> robin(n, 0.0);
    if (left.kind == BcKind::Robin) robin[0] = D * left.coefficient_at({grid.a(), 0.0});
    if (right.kind == BcKind::Robin) robin[n - 1] = D * right.coefficient_at({grid.b(), 0.0});
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = evaluate(spec.V, grid[i]);
        full.diag[i] = (full.diag[i] + robin[i]) / w[i] + v[i];
        full.lower[i] /= w[i];
        full.upper[i] /= w[i];
    }

    out.nodes = free_nodes(n, left.kind == BcKind::Dirichlet, right.kind == BcKind::Dirichlet);
    const std::size_t m = out.nodes.size();
    out.matrix = TridiagonalMatrix(m, false);
    out.matrix.excess.assign(m, 0.0);
    out.node_scale.assign(m, 1.0);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = out.nodes[k];
        out.matrix.diag[k] = full.diag[i];
        if (k > 0) out.matrix.lower[k] = full.lower[i];
        if (k + 1 < m) out.matrix.upper[k] = full.upper[i];
        // flux terms cancel in the row sum; what is left is V, the Robin
        // term and any coupling to an eliminated Dirichlet neighbour
        double e = robin[i];
        if (k == 0 && i > 0) e -= full.lower[i] * w[i];
        if (k + 1 == m && i + 1 < n) e -= full.upper[i] * w[i];
        out.matrix.excess[k] = e / w[i] + v[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// 2D

Assembled2D assemble_2d(const ProblemSpec& spec, const Grid2D& grid, const DiscretizationForm& form) {
    if (spec.dimension() != 2) throw std::invalid_argument("assemble_2d needs a 2D problem");
    const bool sym = form.tag == FormTag::Symmetrized;
    if (sym) require_smooth(spec);
    const std::size_t nx = grid.nx(), ny = grid.ny();
    const double D = spec.D;
    const Grid1D& gx = grid.x();
    const Grid1D& gy = grid.y();
    const std::vector<double> wx = gx.weights();
    const std::vector<double> wy = gy.weights();
    const auto dir = [&](Face f) { return spec.face(f).kind == BcKind::Dirichlet; };

    Assembled2D out;
    out.form = form;
    out.grid_size = grid.size();

    std::vector<long> unknown(grid.size(), -1);
    const std::vector<std::size_t> ix = free_nodes(nx, dir(Face::Left), dir(Face::Right));
    const std::vector<std::size_t> iy = free_nodes(ny, dir(Face::Bottom), dir(Face::Top));
    for (std::size_t j : iy) {
        for (std::size_t i : ix) {
            unknown[grid.index(i, j)] = static_cast<long>(out.nodes.size());
            out.nodes.push_back(grid.index(i, j));
        }
    }
    const std::size_t m = out.nodes.size();

    if (sym) {
        std::vector<double> q(grid.size());
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i) q[grid.index(i, j)] = symmetrized_potential(spec, {gx[i], gy[j]});
        out.form.Q = Field(grid, std::move(q));
    }

    std::vector<double> diag(m, 0.0);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * m);
    out.weights.resize(m);
    out.node_scale.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = out.nodes[k] % nx, j = out.nodes[k] / nx;
        out.weights[k] = wx[i] * wy[j];
        out.node_scale[k] = sym ? 1.0 / std::sqrt(out.weights[k]) : 1.0;
    }

    // Edge between node p and node q with face length `len`, spacing h and
    // drift exponent t (direct form only).
    const auto edge = [&](std::size_t p, std::size_t qn, double len, double h, double t) {
        const long kp = unknown[p], kq = unknown[qn];
        if (sym) {
            const double g = D * len / h;
            if (kp >= 0) diag[static_cast<std::size_t>(kp)] += g;
            if (kq >= 0) diag[static_cast<std::size_t>(kq)] += g;
            if (kp >= 0 && kq >= 0) {
                const double v = -g / std::sqrt(out.weights[static_cast<std::size_t>(kp)] *
                                                 out.weights[static_cast<std::size_t>(kq)]);
                trip.emplace_back(kp, kq, v);
                trip.emplace_back(kq, kp, v);
            }
            return;
        }
        const EdgeWeights e = edge_weights(D, h, t, form.scheme);
        if (kp >= 0) {
            diag[static_cast<std::size_t>(kp)] += len * e.forward;
            if (kq >= 0) trip.emplace_back(kp, kq, -len * e.forward / out.weights[static_cast<std::size_t>(kp)]);
        }
        if (kq >= 0) {
            diag[static_cast<std::size_t>(kq)] += len * e.backward;
            if (kp >= 0) trip.emplace_back(kq, kp, -len * e.backward / out.weights[static_cast<std::size_t>(kq)]);
        }
    };

    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i + 1 < nx; ++i) {
            const double h = gx.spacing(i);
            double t = 0.0;
            if (!sym) t = 2.0 * spec.alpha * evaluate(spec.drift.mx(), Point{0.5 * (gx[i] + gx[i + 1]), gy[j]}) * h / D;
            edge(grid.index(i, j), grid.index(i + 1, j), wy[j], h, t);
        }
    }
    for (std::size_t j = 0; j + 1 < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const double h = gy.spacing(j);
            double t = 0.0;
            if (!sym) t = 2.0 * spec.alpha * evaluate(spec.drift.my(), Point{gx[i], 0.5 * (gy[j] + gy[j + 1])}) * h / D;
            edge(grid.index(i, j), grid.index(i, j + 1), wx[i], h, t);
        }
    }

    // Robin faces
    const auto face_term = [&](Face f, std::size_t i, std::size_t j, double len) {
        const long k = unknown[grid.index(i, j)];
        if (k < 0 || spec.face(f).kind != BcKind::Robin) return;
        const Point p{gx[i], gy[j]};
        const double c = sym ? transformed_robin(spec, f, p) : spec.face(f).coefficient_at(p);
        diag[static_cast<std::size_t>(k)] += D * c * len;
    };
    for (std::size_t j = 0; j < ny; ++j) {
        face_term(Face::Left, 0, j, wy[j]);
        face_term(Face::Right, nx - 1, j, wy[j]);
    }
    for (std::size_t i = 0; i < nx; ++i) {
        face_term(Face::Bottom, i, 0, wx[i]);
        face_term(Face::Top, i, ny - 1, wx[i]);
    }
    // Neumann faces in the symmetrized form still carry the drift term
    for (Face f : {Face::Left, Face::Right, Face::Bottom, Face::Top}) {
        if (!sym || spec.face(f).kind != BcKind::Neumann) continue;
        const bool vertical = f == Face::Left || f == Face::Right;
        const std::size_t count = vertical ? ny : nx;
        for (std::size_t s = 0; s < count; ++s) {
            const std::size_t i = vertical ? (f == Face::Left ? 0 : nx - 1) : s;
            const std::size_t j = vertical ? s : (f == Face::Bottom ? 0 : ny - 1);
            const long k = unknown[grid.index(i, j)];
            if (k < 0) continue;
            diag[static_cast<std::size_t>(k)] +=
                D * transformed_robin(spec, f, {gx[i], gy[j]}) * (vertical ? wy[j] : wx[i]);
        }
    }

    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t node = out.nodes[k];
        const std::size_t i = node % nx, j = node / nx;
        const double zeroth = sym ? out.form.Q[node] : evaluate(spec.V, Point{gx[i], gy[j]});
        trip.emplace_back(k, k, diag[k] / out.weights[k] + zeroth);
    }

    out.matrix.symmetric = sym;
    out.matrix.data.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    out.matrix.data.setFromTriplets(trip.begin(), trip.end());
    out.matrix.data.makeCompressed();
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void put(std::ostream& os, std::size_t i, std::size_t j, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu %zu %.17g\n", i, j, v);
    os << buf;
}

}  // namespace

void dump_triplets(std::ostream& os, const TridiagonalMatrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i > 0 && m.lower[i] != 0.0) put(os, i, i - 1, m.lower[i]);
        if (m.diag[i] != 0.0) put(os, i, i, m.diag[i]);
        if (i + 1 < m.size() && m.upper[i] != 0.0) put(os, i, i + 1, m.upper[i]);
    }
}

void dump_triplets(std::ostream& os, const SparseMatrix& m) {
    for (Eigen::Index r = 0; r < m.data.outerSize(); ++r)
        for (decltype(m.data)::InnerIterator it(m.data, r); it; ++it)
            if (it.value() != 0.0) put(os, static_cast<std::size_t>(r), static_cast<std::size_t>(it.col()), it.value());
}

}  // namespace eigendrift
