#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "eigendrift/stream.hpp"

using namespace eigendrift;

namespace {

constexpr const char* kRampB = "((x-0.3+abs(x-0.3))/2)^2";
constexpr const char* kRampC = "((0.4-x+abs(0.4-x))/2)^2+((x-0.6+abs(x-0.6))/2)^2";
constexpr const char* kRampD = "((0.7-x+abs(0.7-x))/2)^2";

StreamSpec stream(const char* q, const char* r, Downstream d = Downstream::NF, double D = 1e-3) {
    StreamSpec s;
    s.q = parse(q);
    s.r = parse(r);
    s.downstream = d;
    s.D = D;
    return s;
}

Grid1D fine(std::size_t n = 1024) { return Grid1D::uniform(0.0, 1.0, n); }

}  // namespace

TEST(Downstream, Names) {
    EXPECT_EQ(parse_downstream("FF"), Downstream::FF);
    EXPECT_EQ(parse_downstream("h"), Downstream::H);
    EXPECT_FALSE(parse_downstream("XX").has_value());
    EXPECT_STREQ(downstream_name(Downstream::NF), "NF");
}

TEST(Mapping, BoundaryConditions) {
    const ProblemSpec nf = to_eigenproblem(stream("1+x", "1", Downstream::NF, 0.1));
    EXPECT_EQ(nf.bc[0].kind, BcKind::Neumann);
    EXPECT_EQ(nf.bc[1].kind, BcKind::Neumann);
    EXPECT_DOUBLE_EQ(evaluate(nf.V, 0.3), -1.0);
    EXPECT_NEAR(evaluate(nf.drift.mx(), 0.5), 0.75, 1e-15);
    const ProblemSpec ff = to_eigenproblem(stream("1+x", "1", Downstream::FF, 0.1));
    EXPECT_EQ(ff.bc[1].kind, BcKind::Robin);
    EXPECT_NEAR(ff.bc[1].coefficient, 2.0 / 0.1, 1e-12);
    EXPECT_EQ(ff.bc[1].decomposition->scaling, RobinScaling::InverseD);
    EXPECT_EQ(to_eigenproblem(stream("1", "1", Downstream::H)).bc[1].kind, BcKind::Dirichlet);
    EXPECT_EQ(to_eigenproblem(stream(kRampB, "1")).kinks.size(), 1u);
}

TEST(Validate, Stream) {
    EXPECT_TRUE(validate(stream("1", "1")).empty());
    EXPECT_FALSE(validate(stream("x-0.5", "1")).empty());
    StreamSpec s = stream("1", "1");
    s.D = 0.0;
    EXPECT_FALSE(validate(s).empty());
}

TEST(Buffers, Patterns) {
    EXPECT_EQ(detect_buffers(stream("1", "1")).kind, BufferCase::A);
    const BufferPattern b = detect_buffers(stream(kRampB, "1"));
    EXPECT_EQ(b.kind, BufferCase::B);
    ASSERT_EQ(b.buffers.size(), 1u);
    EXPECT_NEAR(b.buffers[0].right, 0.3, 1e-3);
    EXPECT_EQ(detect_buffers(stream(kRampC, "1")).kind, BufferCase::C);
    EXPECT_EQ(detect_buffers(stream(kRampD, "1")).kind, BufferCase::D);
    EXPECT_THROW(detect_buffers(stream("0", "1")), std::invalid_argument);
    EXPECT_STREQ(buffer_case_name(BufferCase::C), "c");
}

TEST(Limits, ClosedFormsCrossChecked) {
    const StreamLimits a = small_D_limits(stream("1", "1"));
    ASSERT_EQ(a.rows.size(), 3u);
    EXPECT_DOUBLE_EQ(a.rows[0].closed_form, -1.0);
    EXPECT_TRUE(std::isinf(a.rows[1].closed_form));
    EXPECT_TRUE(std::isinf(a.rows[2].closed_form));
    const StreamLimits b = small_D_limits(stream(kRampB, "x"));
    EXPECT_DOUBLE_EQ(b.rows[2].closed_form, -0.3);
    EXPECT_NEAR(b.rows[0].large_D, -0.5, 1e-9);
    EXPECT_TRUE(std::isinf(b.rows[2].large_D));
    for (const auto& row : b.rows) EXPECT_EQ(row.closed_form, row.report.limit);
}

TEST(PsiForm, MatchesTransformedEigenvalue) {
    for (Downstream d : {Downstream::FF, Downstream::H}) {
        const StreamSpec s = stream("1+x^2", "1+sin(3*x)", d, 0.1);
        const Grid1D g = fine(6400);
        const double psi = psi_form_lambda(s, g);
        const double phi = solve(to_eigenproblem(s), g, FormPolicy::Direct).lambda;
        EXPECT_NEAR(psi, phi, 1e-6 * (1 + std::abs(phi))) << downstream_name(d);
    }
}

TEST(Persistence, Dichotomy) {
    const PersistenceReport p = classify_persistence(stream(kRampB, "1", Downstream::H), fine());
    EXPECT_EQ(p.fate, Fate::Persistence);
    EXPECT_LT(p.lambda, 0.0);
    const PersistenceReport e = classify_persistence(stream("0.5+x", "1", Downstream::H), fine());
    EXPECT_EQ(e.fate, Fate::Extinction);
    EXPECT_GT(e.lambda, 0.0);
    EXPECT_STREQ(fate_name(Fate::Extinction), "extinction");
}

TEST(Simulate, LogisticReachesCarryingCapacity) {
    const Grid1D g = fine(64);
    const Trajectory t = simulate(stream("0", "1"), g, std::vector<double>(g.size(), 0.1), 20.0, 0.01);
    EXPECT_NEAR(t.final_min, 1.0, 1e-7);
    EXPECT_NEAR(t.final_max, 1.0, 1e-7);
    EXPECT_LE(t.snapshots.size(), 200u);
    EXPECT_EQ(t.times.front(), 0.0);
    EXPECT_EQ(t.times.back(), 20.0);
    EXPECT_EQ(t.observed, Fate::Persistence);
}

TEST(Simulate, Preconditions) {
    const Grid1D g = fine(64);
    const StreamSpec s = stream("1", "1");
    EXPECT_THROW(simulate(s, g, std::vector<double>(g.size(), 0.0), 1.0, 0.01), std::invalid_argument);
    EXPECT_THROW(simulate(s, g, std::vector<double>(g.size(), -0.1), 1.0, 0.01), std::invalid_argument);
    EXPECT_THROW(simulate(s, g, std::vector<double>(g.size(), 1.0), 1.0, 0.3), std::invalid_argument);
    EXPECT_THROW(simulate(s, g, std::vector<double>(3, 1.0), 1.0, 0.01), std::invalid_argument);
}

TEST(Simulate, CsvLongFormat) {
    const Grid1D g = fine(8);
    const Trajectory t = simulate(stream("1", "1", Downstream::H, 0.1), g, std::vector<double>(g.size(), 0.1), 0.05, 0.01);
    std::ostringstream os;
    write_trajectory_csv(os, t);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,x,u");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, t.times.size() * g.size());
}

TEST(SteadyState, PositiveStateSolvesEquation) {
    const SteadyState s = steady_state(stream(kRampB, "1", Downstream::H, 1e-2), fine(256));
    EXPECT_EQ(s.fate, Fate::Persistence);
    ASSERT_FALSE(s.u.empty());
    EXPECT_LT(s.residual, 1e-9);
    const SteadyState z = steady_state(stream("0.5+x", "1", Downstream::H, 1e-2), fine(256));
    EXPECT_EQ(z.fate, Fate::Extinction);
    EXPECT_TRUE(z.u.empty());
}
