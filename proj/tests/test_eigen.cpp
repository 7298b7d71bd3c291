#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "eigendrift/eigen.hpp"

using namespace eigendrift;

namespace {

TridiagonalMatrix laplacian(std::size_t n) {
    const double h = 1.0 / static_cast<double>(n + 1);
    TridiagonalMatrix t(n, true);
    for (std::size_t i = 0; i < n; ++i) {
        t.diag[i] = 2.0 / (h * h);
        if (i > 0) t.lower[i] = -1.0 / (h * h);
        if (i + 1 < n) t.upper[i] = -1.0 / (h * h);
    }
    return t;
}

Eigen::MatrixXd dense(const TridiagonalMatrix& t) {
    const auto n = static_cast<Eigen::Index>(t.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        a(i, i) = t.diag[i];
        if (i > 0) a(i, i - 1) = t.lower[i];
        if (i + 1 < n) a(i, i + 1) = t.upper[i];
    }
    return a;
}

double smallest_real_eig(const Eigen::MatrixXd& a) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(a);
    double best = 1e300;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) best = std::min(best, es.eigenvalues()[i].real());
    return best;
}

ProblemSpec spec_1d(const char* m, BoundaryCondition l, BoundaryCondition r, double D) {
    ProblemSpec p;
    p.D = D;
    p.alpha = 1.0;
    p.drift = Drift::from_potential(parse(m), 1);
    p.V = parse("0");
    p.bc = {l, r};
    return p;
}

}  // namespace

TEST(Sturm, CountsDiagonal) {
    TridiagonalMatrix t(4, true);
    t.diag = {1, 2, 3, 4};
    EXPECT_EQ(sturm_count(t, 0.5), 0u);
    EXPECT_EQ(sturm_count(t, 2.5), 2u);
    EXPECT_EQ(sturm_count(t, 10.0), 4u);
}

TEST(SymTridiag, DiscreteLaplacian) {
    const std::size_t n = 200;
    const double h = 1.0 / (n + 1);
    const EigenPair e = principal_eig_sym_tridiag(laplacian(n));
    const double exact = 4.0 / (h * h) * std::pow(std::sin(std::numbers::pi * h / 2), 2);
    EXPECT_NEAR(e.lambda, exact, 1e-10 * exact);
    EXPECT_TRUE(std::all_of(e.vector.begin(), e.vector.end(), [](double v) { return v > 0; }));
}

TEST(Power, NonsymmetricZMatrixMatchesDense) {
    TridiagonalMatrix t(30);
    for (std::size_t i = 0; i < 30; ++i) {
        t.diag[i] = 3.0 + std::sin(static_cast<double>(i));
        if (i > 0) t.lower[i] = -0.5 - 0.01 * i;
        if (i + 1 < 30) t.upper[i] = -1.5 + 0.02 * i;
    }
    const EigenPair e = principal_eig_power(t);
    EXPECT_NEAR(e.lambda, smallest_real_eig(dense(t)), 1e-10);
    EXPECT_TRUE(std::all_of(e.vector.begin(), e.vector.end(), [](double v) { return v > 0; }));
    const EigenPair s = principal_eig_similar(t);
    EXPECT_NEAR(s.lambda, e.lambda, 1e-10);
}

TEST(Power, SparseSymmetricAgree) {
    const TridiagonalMatrix t = laplacian(50);
    SparseMatrix s;
    s.data.resize(50, 50);
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < 50; ++i) {
        trip.emplace_back(i, i, t.diag[i]);
        if (i > 0) trip.emplace_back(i, i - 1, t.lower[i]);
        if (i + 1 < 50) trip.emplace_back(i, i + 1, t.upper[i]);
    }
    s.data.setFromTriplets(trip.begin(), trip.end());
    s.symmetric = true;
    const double ref = principal_eig_sym_tridiag(t).lambda;
    EXPECT_NEAR(principal_eig_sym_sparse(s).lambda, ref, 1e-9 * ref);
    EXPECT_NEAR(principal_eig_power(s).lambda, ref, 1e-9 * ref);
}

TEST(AutoForm, Policy) {
    ProblemSpec p = spec_1d("(x-0.5)^2", BoundaryCondition::dirichlet(), BoundaryCondition::dirichlet(), 1e-2);
    EXPECT_EQ(auto_form(p), FormTag::Symmetrized);
    p.D = 1e-4;
    EXPECT_EQ(auto_form(p), FormTag::Direct);
    p.D = 1e-2;
    p.kinks = {0.5};
    EXPECT_EQ(auto_form(p), FormTag::Direct);
}

TEST(Solve, BothFormsCompared) {
    const ProblemSpec p = spec_1d("x", BoundaryCondition::dirichlet(), BoundaryCondition::dirichlet(), 0.1);
    const Grid1D g = Grid1D::uniform(0.0, 1.0, 800);
    const EigenResult r = solve(p, g, FormPolicy::Both);
    const double exact = 1.0 / 0.1 + 0.1 * std::numbers::pi * std::numbers::pi;
    EXPECT_NEAR(r.lambda, exact, 1e-4 * exact);
    ASSERT_TRUE(r.comparison.has_value());
    EXPECT_LT(r.comparison->discrepancy, 1e-4 * exact);
    EXPECT_LT(r.residual, 1e-8 * exact);
    EXPECT_EQ(r.grid_cells, 800u);
    // ∫f² = 1 by the trapezoid rule
    const auto w = g.weights();
    double norm = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) norm += w[i] * r.eigenfunction[i] * r.eigenfunction[i];
    EXPECT_NEAR(norm, 1.0, 1e-12);
}

TEST(Solve, TwoDimensionalSeparable) {
    // m = 0, Dirichlet square: λ = 2Dπ²
    ProblemSpec p;
    p.domain.dimension = 2;
    p.D = 0.5;
    p.alpha = 0.0;
    p.V = parse("0");
    p.bc.assign(4, BoundaryCondition::dirichlet());
    const Grid2D g(Grid1D::uniform(0, 1, 64), Grid1D::uniform(0, 1, 64));
    const double exact = 2 * 0.5 * std::numbers::pi * std::numbers::pi;
    for (FormPolicy f : {FormPolicy::Direct, FormPolicy::Symmetrized})
        EXPECT_NEAR(solve(p, g, f).lambda, exact, 1e-3 * exact);
}

TEST(Solve, InvalidSpecRejected) {
    ProblemSpec p = spec_1d("x", BoundaryCondition::dirichlet(), BoundaryCondition::dirichlet(), -1.0);
    EXPECT_THROW(solve(p, Grid1D::uniform(0, 1, 16)), std::invalid_argument);
}

TEST(RayleighQuotient, MatchesEigenvalueOnResolvedGrid) {
    const ProblemSpec p = spec_1d("0.2*sin(2*x)", BoundaryCondition::robin(1.0), BoundaryCondition::neumann(), 1.0);
    const Grid1D g = Grid1D::uniform(0, 1, 4000);
    const EigenResult r = solve(p, g, FormPolicy::Symmetrized);
    EXPECT_NEAR(rayleigh_quotient(p, g, r.eigenfunction), r.lambda, 1e-6 * (1 + r.lambda));
}
