#include "eigendrift/stream.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <tuple>

#include "eigendrift/operators.hpp"

namespace eigendrift {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kSamples = 10000;

double sample_x(std::size_t k) { return k == kSamples ? 1.0 : static_cast<double>(k) / kSamples; }

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

// same sampling as the interval candidates of limit_small_D
double min_over(const Expr& f, double l, double r) {
    constexpr int M = 2000;
    double best = kInf;
    for (int i = 0; i <= M; ++i) best = std::min(best, evaluate(f, i == M ? r : l + (r - l) * i / M));
    return best;
}

}  // namespace

const char* downstream_name(Downstream d) {
    switch (d) {
    case Downstream::NF: return "NF";
    case Downstream::FF: return "FF";
    case Downstream::H: return "H";
    }
    return "?";
}

std::optional<Downstream> parse_downstream(std::string_view s) {
    if (s == "NF" || s == "nf") return Downstream::NF;
    if (s == "FF" || s == "ff") return Downstream::FF;
    if (s == "H" || s == "h") return Downstream::H;
    return std::nullopt;
}

const char* buffer_case_name(BufferCase c) {
    switch (c) {
    case BufferCase::A: return "a";
    case BufferCase::B: return "b";
    case BufferCase::C: return "c";
    case BufferCase::D: return "d";
    case BufferCase::Other: return "other";
    }
    return "?";
}

const char* fate_name(Fate f) { return f == Fate::Extinction ? "extinction" : "persistence"; }

double stream_tol_q(const StreamSpec& s) {
    double qmax = 0.0;
    for (std::size_t k = 0; k <= kSamples; ++k) {
        const double v = evaluate(s.q, sample_x(k));
        if (std::isfinite(v)) qmax = std::max(qmax, v);
    }
    return qmax > 0.0 ? 1e-10 * qmax : std::numeric_limits<double>::min();
}

std::vector<std::string> validate(const StreamSpec& s) {
    std::vector<std::string> out;
    if (!(s.D > 0.0) || !std::isfinite(s.D)) out.push_back("nonpositive diffusion");
    if (s.q.depends_on(Variable::Y) || s.r.depends_on(Variable::Y)) out.push_back("stream coefficients depend on y");
    try {
        const double tol = stream_tol_q(s);
        for (std::size_t k = 0; k <= kSamples; ++k) {
            const double x = sample_x(k);
            const double q = evaluate(s.q, x);
            const double r = evaluate(s.r, x);
            if (!std::isfinite(q) || !std::isfinite(r)) {
                out.push_back("non-finite q or r at x=" + fmt(x));
                break;
            }
            if (q < -tol) {
                out.push_back("negative flow q=" + fmt(q) + " at x=" + fmt(x));
                break;
            }
        }
    } catch (const DomainError& e) {
        out.push_back(std::string("q or r not evaluable: ") + e.what());
    }
    return out;
}

ProblemSpec to_eigenproblem(const StreamSpec& s) {
    const auto problems = validate(s);
    if (!problems.empty()) throw std::invalid_argument("invalid stream problem: " + problems.front());
    ProblemSpec p;
    p.domain.dimension = 1;
    p.D = s.D;
    p.alpha = 1.0;
    p.drift = Drift::from_gradient(s.q / Expr(2.0), 0.0, 1.0);
    p.V = -s.r;
    p.kinks = abs_kinks(s.q, 0.0, 1.0);
    BoundaryCondition down;
    switch (s.downstream) {
    case Downstream::NF: down = BoundaryCondition::neumann(); break;
    case Downstream::FF:
        down = BoundaryCondition::robin(1.0 / s.D, s.q, Point{1.0, 0.0}, RobinScaling::InverseD);
        break;
    case Downstream::H: down = BoundaryCondition::dirichlet(); break;
    }
    p.bc = {BoundaryCondition::neumann(), down};
    return p;
}

BufferPattern detect_buffers(const StreamSpec& s) {
    const double tol = stream_tol_q(s);
    BufferPattern bp;
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    bool isolated = false;
    for (std::size_t k = 0; k <= kSamples;) {
        if (!(evaluate(s.q, sample_x(k)) < tol)) {
            ++k;
            continue;
        }
        std::size_t e = k;
        while (e + 1 <= kSamples && evaluate(s.q, sample_x(e + 1)) < tol) ++e;
        if (e > k)
            runs.emplace_back(k, e);
        else
            isolated = true;
        k = e + 1;
    }
    for (const auto& [l, r] : runs) bp.buffers.push_back({sample_x(l), sample_x(r)});
    if (runs.size() == 1 && runs[0].first == 0 && runs[0].second == kSamples)
        throw std::invalid_argument("buffer covers the whole habitat; no buffer case applies");
    if (isolated || runs.size() > 1) {
        bp.kind = BufferCase::Other;
    } else if (runs.empty()) {
        bp.kind = BufferCase::A;
    } else if (runs[0].first == 0) {
        bp.kind = BufferCase::B;
    } else if (runs[0].second == kSamples) {
        bp.kind = BufferCase::D;
    } else {
        bp.kind = BufferCase::C;
    }
    return bp;
}

PersistenceReport classify_persistence(const StreamSpec& s, const Grid1D& grid, FormPolicy form) {
    PersistenceReport rep;
    rep.eigen = solve(to_eigenproblem(s), grid, form);
    rep.lambda = rep.eigen.lambda;
    const double tol = 1e-8 * (1.0 + std::abs(rep.lambda));
    rep.fate = rep.lambda >= -tol ? Fate::Extinction : Fate::Persistence;
    rep.borderline = std::abs(rep.lambda) < tol;
    return rep;
}

StreamLimits small_D_limits(const StreamSpec& s) {
    StreamLimits out;
    out.pattern = detect_buffers(s);
    const Expr V = -s.r;
    const double v1 = evaluate(V, 1.0);
    double mean_r = 0.0;
    {
        constexpr int M = 20000;
        for (int i = 0; i < M; ++i) mean_r += evaluate(s.r, (i + 0.5) / M) / M;
    }
    const double tol_q = stream_tol_q(s);
    for (Downstream d : {Downstream::NF, Downstream::FF, Downstream::H}) {
        StreamSpec sd = s;
        sd.downstream = d;
        StreamLimitRow row;
        row.downstream = d;
        const ProblemSpec p = to_eigenproblem(sd);
        row.report = limit_small_D(p, 0.5 * tol_q);
        const bool nf = d == Downstream::NF;
        const auto& bufs = out.pattern.buffers;
        switch (out.pattern.kind) {
        case BufferCase::A: row.closed_form = nf ? v1 : kInf; break;
        case BufferCase::B: {
            const double m = min_over(V, 0.0, bufs[0].right);
            row.closed_form = nf ? std::min(m, v1) : m;
            break;
        }
        case BufferCase::C: {
            const double m = min_over(V, bufs[0].left, bufs[0].right);
            row.closed_form = nf ? std::min(v1, m) : m;
            break;
        }
        case BufferCase::D: row.closed_form = min_over(V, bufs[0].left, 1.0); break;
        case BufferCase::Other: row.closed_form = row.report.limit; break;
        }
        const double a = row.closed_form, b = row.report.limit;
        const bool agree = (std::isinf(a) && std::isinf(b) && (a > 0) == (b > 0)) ||
                           std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a));
        if (!agree)
            throw CrossCheckError(std::string("buffer-table limit ") + fmt(a) + " disagrees with general limit " +
                                  fmt(b) + " for " + downstream_name(d));

        row.large_D = d == Downstream::H ? kInf : -mean_r;
        row.large_report = limit_large_D(p);
        const LargeDReport& lr = row.large_report;
        const bool large_ok = d == Downstream::H
                                  ? lr.verdict == LargeDVerdict::PlusInfinity
                                  : lr.verdict == LargeDVerdict::Finite && lr.value &&
                                        std::abs(*lr.value - row.large_D) <= 1e-6 * (1.0 + std::abs(row.large_D));
        if (!large_ok)
            throw CrossCheckError(std::string("large-D limit disagrees with -integral of r for ") +
                                  downstream_name(d));
        out.rows.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// flux operator [D u_x - q u]_x on the active nodes

namespace {

struct FluxOperator {
    std::vector<double> lower, diag, upper;  // entries of A on active nodes
    std::size_t active = 0;
};

FluxOperator flux_operator(const StreamSpec& s, const Grid1D& g) {
    const std::size_t n = g.size();
    const bool hostile = s.downstream == Downstream::H;
    FluxOperator op;
    op.active = hostile ? n - 1 : n;
    op.lower.assign(op.active, 0.0);
    op.diag.assign(op.active, 0.0);
    op.upper.assign(op.active, 0.0);
    const std::vector<double> w = g.weights();
    for (std::size_t e = 0; e + 1 < n; ++e) {
        const double h = g.spacing(e);
        const double q = evaluate(s.q, 0.5 * (g[e] + g[e + 1]));
        const double t = q * h / s.D;
        const double fwd = s.D / h * bernoulli(t);   // coefficient of u_{e+1} in J
        const double bwd = s.D / h * bernoulli(-t);  // coefficient of u_e in J
        // J_e enters row e with +, row e+1 with -
        if (e < op.active) {
            op.diag[e] -= bwd / w[e];
            if (e + 1 < op.active) op.upper[e] += fwd / w[e];
        }
        if (e + 1 < op.active) {
            op.diag[e + 1] -= fwd / w[e + 1];
            op.lower[e + 1] += bwd / w[e + 1];
        }
    }
    if (s.downstream == Downstream::FF) op.diag[n - 1] -= evaluate(s.q, 1.0) / w[n - 1];
    return op;
}

// Thomas algorithm; stable for the M-matrices used here.
std::vector<double> thomas(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c,
                           std::vector<double> d) {
    const std::size_t n = b.size();
    std::vector<double> cp(n);
    double beta = b[0];
    cp[0] = c[0] / beta;
    d[0] /= beta;
    for (std::size_t i = 1; i < n; ++i) {
        beta = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / beta;
        d[i] = (d[i] - a[i] * d[i - 1]) / beta;
    }
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= cp[i] * d[i + 1];
    return d;
}

}  // namespace

double psi_form_lambda(const StreamSpec& s, const Grid1D& grid) {
    const FluxOperator op = flux_operator(s, grid);
    TridiagonalMatrix t;
    t.lower.resize(op.active);
    t.diag.resize(op.active);
    t.upper.resize(op.active);
    for (std::size_t i = 0; i < op.active; ++i) {
        t.lower[i] = -op.lower[i];
        t.upper[i] = -op.upper[i];
        t.diag[i] = -op.diag[i] - evaluate(s.r, grid[i]);
    }
    return principal_eig_power(t).lambda;
}

SweepTable stream_sweep(const StreamSpec& s, const std::vector<double>& Ds, const GridPolicy& policy,
                        FormPolicy form) {
    return sweep(
        [&](double D) {
            StreamSpec sd = s;
            sd.D = D;
            return to_eigenproblem(sd);
        },
        Ds, policy, form);
}

// ---------------------------------------------------------------------------

Trajectory simulate(const StreamSpec& s, const Grid1D& grid, const std::vector<double>& u0, double T, double dt,
                    const SimulationOptions& options) {
    const auto problems = validate(s);
    if (!problems.empty()) throw std::invalid_argument("invalid stream problem: " + problems.front());
    const std::size_t n = grid.size();
    if (u0.size() != n) throw std::invalid_argument("initial state size does not match the grid");
    double u0max = 0.0;
    for (double v : u0) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("initial state must be finite and >= 0");
        u0max = std::max(u0max, v);
    }
    if (!(u0max > 0.0)) throw std::invalid_argument("initial state is identically zero");
    if (!(T > 0.0) || !(dt > 0.0)) throw std::invalid_argument("T and dt must be positive");
    std::vector<double> r(n);
    double rmax = -kInf;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = evaluate(s.r, grid[i]);
        rmax = std::max(rmax, r[i]);
    }
    if (dt > 0.5 / (std::max(rmax, 0.0) + u0max) * (1.0 + 1e-12))
        throw std::invalid_argument("dt exceeds the explicit reaction bound 0.5/(max r + max u0)");

    const FluxOperator op = flux_operator(s, grid);
    const std::size_t m = op.active;
    const auto system = [&](double step) {
        std::vector<double> a(m), b(m), c(m);
        for (std::size_t i = 0; i < m; ++i) {
            a[i] = -step * op.lower[i];
            b[i] = 1.0 - step * op.diag[i];
            c[i] = -step * op.upper[i];
        }
        return std::make_tuple(a, b, c);
    };
    auto [la, lb, lc] = system(dt);

    const std::size_t steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    const std::size_t keep = std::max<std::size_t>(options.max_snapshots, 2);
    const std::size_t stride = std::max<std::size_t>(1, (steps + keep - 2) / (keep - 1));

    Trajectory tr{grid, {}, {}, 0.0, 0.0, std::nullopt};
    std::vector<double> u = u0;
    if (s.downstream == Downstream::H) u[n - 1] = 0.0;
    tr.times.push_back(0.0);
    tr.snapshots.push_back(u);
    double t = 0.0;
    for (std::size_t k = 1; k <= steps; ++k) {
        const double step = k == steps ? T - t : dt;
        if (k == steps && std::abs(step - dt) > 1e-12 * dt) std::tie(la, lb, lc) = system(step);
        std::vector<double> rhs(m);
        for (std::size_t i = 0; i < m; ++i) rhs[i] = u[i] + step * (r[i] * u[i] - u[i] * u[i]);
        std::vector<double> next = thomas(la, lb, lc, std::move(rhs));
        for (std::size_t i = 0; i < m; ++i) {
            if (!std::isfinite(next[i]))
                throw NumericalError("simulation unstable at t=" + fmt(t + step));
            if (next[i] < 0.0) {
                if (next[i] < -1e-14) throw NumericalError("simulation produced a negative density at t=" + fmt(t));
                next[i] = 0.0;
            }
            u[i] = next[i];
        }
        t = k == steps ? T : t + step;
        if (k % stride == 0 || k == steps) {
            if (tr.times.back() != t) {
                tr.times.push_back(t);
                tr.snapshots.push_back(u);
            }
        }
    }
    tr.final_max = *std::max_element(u.begin(), u.end());
    tr.final_min = *std::min_element(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(m));
    if (tr.final_max < 1e-6)
        tr.observed = Fate::Extinction;
    else if (tr.final_min > 1e-3)
        tr.observed = Fate::Persistence;
    return tr;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
    os << "t,x,u\n";
    char buf[96];
    for (std::size_t k = 0; k < t.times.size(); ++k) {
        for (std::size_t i = 0; i < t.grid.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t.times[k], t.grid[i], t.snapshots[k][i]);
            os << buf;
        }
    }
}

SteadyState steady_state(const StreamSpec& s, const Grid1D& grid) {
    SteadyState out;
    const PersistenceReport pr = classify_persistence(s, grid);
    out.fate = pr.fate;
    out.lambda = pr.lambda;
    if (pr.fate == Fate::Extinction) return out;

    const std::size_t n = grid.size();
    const FluxOperator op = flux_operator(s, grid);
    const std::size_t m = op.active;
    std::vector<double> r(n);
    double rmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = evaluate(s.r, grid[i]);
        rmax = std::max(rmax, r[i]);
    }
    const auto residual = [&](const std::vector<double>& u) {
        std::vector<double> f(m);
        for (std::size_t i = 0; i < m; ++i) {
            double au = op.diag[i] * u[i];
            if (i > 0) au += op.lower[i] * u[i - 1];
            if (i + 1 < m) au += op.upper[i] * u[i + 1];
            f[i] = au + r[i] * u[i] - u[i] * u[i];
        }
        return f;
    };
    const auto norm_inf = [](const std::vector<double>& v) {
        double x = 0.0;
        for (double e : v) x = std::max(x, std::abs(e));
        return x;
    };

    std::vector<double> u(n, 1e-2);
    if (s.downstream == Downstream::H) u[n - 1] = 0.0;
    const double dt = 0.25 / (rmax + std::max(rmax, 1e-2));
    double horizon = 1e3;
    for (int round = 0; round < 3; ++round, horizon *= 10.0) {
        // integrate in unit intervals until the state stops moving
        for (double elapsed = 0.0; elapsed < horizon; elapsed += 1.0) {
            const Trajectory tr = simulate(s, grid, u, 1.0, std::min(dt, 1.0), SimulationOptions{2});
            const std::vector<double>& next = tr.snapshots.back();
            double change = 0.0;
            for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(next[i] - u[i]));
            u = next;
            if (change < 1e-9) break;
        }
        // damped Newton on A u + r u - u² = 0
        std::vector<double> f = residual(u);
        double fn = norm_inf(f);
        for (int it = 0; it < 50 && fn >= 1e-10; ++it) {
            std::vector<Eigen::Triplet<double>> trip;
            for (std::size_t i = 0; i < m; ++i) {
                const int ii = static_cast<int>(i);
                trip.emplace_back(ii, ii, op.diag[i] + r[i] - 2.0 * u[i]);
                if (i > 0) trip.emplace_back(ii, ii - 1, op.lower[i]);
                if (i + 1 < m) trip.emplace_back(ii, ii + 1, op.upper[i]);
            }
            Eigen::SparseMatrix<double> J(static_cast<int>(m), static_cast<int>(m));
            J.setFromTriplets(trip.begin(), trip.end());
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
            if (lu.info() != Eigen::Success) break;
            Eigen::VectorXd rhs(static_cast<int>(m));
            for (std::size_t i = 0; i < m; ++i) rhs[static_cast<int>(i)] = -f[i];
            const Eigen::VectorXd delta = lu.solve(rhs);
            double step = 1.0;
            bool moved = false;
            for (int k = 0; k < 30; ++k, step *= 0.5) {
                std::vector<double> trial = u;
                bool positive = true;
                for (std::size_t i = 0; i < m; ++i) {
                    trial[i] += step * delta[static_cast<int>(i)];
                    positive = positive && trial[i] > 0.0;
                }
                if (!positive) continue;
                const std::vector<double> ft = residual(trial);
                const double ftn = norm_inf(ft);
                if (ftn < fn) {
                    u = std::move(trial);
                    f = ft;
                    fn = ftn;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
        if (fn < 1e-10) {
            out.u = std::move(u);
            out.residual = fn;
            return out;
        }
    }
    throw NumericalError("steady state Newton iteration did not converge after 3 rounds");
}

}  // namespace eigendrift
