#include "eigendrift/asymptotics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace eigendrift {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double safe_eval(const Expr& e, Point p) {
    try {
        const double v = evaluate(e, p);
        return std::isfinite(v) ? v : kNaN;
    } catch (const DomainError&) {
        return kNaN;
    }
}

template <class F>
double bisect_root(F&& f, double lo, double hi, double flo) {
    for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if (!std::isfinite(fm)) break;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

template <class F>
double golden_min(F&& f, double lo, double hi) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - r * (hi - lo), d = lo + r * (hi - lo);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    return 0.5 * (lo + hi);
}

bool kink_between(const std::vector<double>& kinks, double lo, double hi) {
    return std::any_of(kinks.begin(), kinks.end(), [&](double k) { return k >= lo && k <= hi; });
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

void add_point(CriticalSet& cs, const Drift& drift, double x, int dim) {
    for (const auto& p : cs.sigma1_points)
        if (std::abs(p.location.x - x) < 1e-9) return;
    const std::vector<double> k = hessian_eigs(drift, {x, 0.0}, dim);
    if (!std::isfinite(k[0])) {
        cs.diagnostics.push_back("critical point at x=" + fmt(x) + " has no finite Hessian; excluded");
        return;
    }
    cs.sigma1_points.push_back({{x, 0.0}, k});
}

CriticalSet critical_points_1d(const Drift& drift, const Domain& dom, const std::vector<double>& kinks,
                               std::optional<double> tol_opt) {
    CriticalSet cs;
    constexpr std::size_t N = 10000;
    const double a = dom.x[0], b = dom.x[1];
    std::vector<double> xs(N + 1), g(N + 1);
    double scale = 0.0;
    for (std::size_t k = 0; k <= N; ++k) {
        xs[k] = k == N ? b : a + (b - a) * static_cast<double>(k) / static_cast<double>(N);
        g[k] = safe_eval(drift.mx(), {xs[k], 0.0});
        if (std::isfinite(g[k])) scale = std::max(scale, std::abs(g[k]));
    }
    const double tol = tol_opt ? *tol_opt : (scale > 0.0 ? 1e-8 * scale : std::numeric_limits<double>::min());
    cs.tol_grad = tol;
    const auto mx = [&](double x) { return safe_eval(drift.mx(), {x, 0.0}); };
    const auto small = [&](std::size_t k) { return std::isfinite(g[k]) && std::abs(g[k]) < tol; };
    const auto boundary = [&](Face f, double x) {
        BoundaryPoint bp;
        bp.face = f;
        bp.location = {x, 0.0};
        const double k = safe_eval(drift.mxx(), {x, 0.0});
        bp.kappa = {std::isfinite(k) ? k : 0.0};
        bp.grad_norm = std::abs(mx(x));
        return bp;
    };

    // runs of small samples
    std::vector<bool> in_run(N + 1, false);
    for (std::size_t k = 0; k <= N;) {
        if (!small(k)) {
            ++k;
            continue;
        }
        std::size_t e = k;
        while (e + 1 <= N && small(e + 1)) ++e;
        for (std::size_t j = k; j <= e; ++j) in_run[j] = true;
        const bool at_a = k == 0, at_b = e == N;
        if (at_a) cs.sigma2.push_back(boundary(Face::Left, a));
        if (at_b) cs.sigma2.push_back(boundary(Face::Right, b));
        if (e > k) {
            const double l = at_a ? xs[1] : xs[k];
            const double r = at_b ? xs[N - 1] : xs[e];
            if (l <= r) cs.sigma1_intervals.push_back({l, r});
        } else if (!at_a && !at_b) {
            const double gl = g[k - 1], gr = g[k + 1];
            double x = xs[k];
            if (kink_between(kinks, xs[k - 1], xs[k + 1])) {
                cs.diagnostics.push_back("kink inside critical bracket near x=" + fmt(xs[k]) + "; excluded");
            } else {
                if (std::isfinite(gl) && std::isfinite(gr) && (gl < 0.0) != (gr < 0.0) && gl != 0.0 && gr != 0.0)
                    x = bisect_root(mx, xs[k - 1], xs[k + 1], gl);
                else
                    x = golden_min([&](double t) { return std::abs(mx(t)); }, xs[k - 1], xs[k + 1]);
                add_point(cs, drift, x, 1);
            }
        }
        k = e + 1;
    }

    // isolated sign changes, possibly across failed samples
    std::size_t prev = N + 1;
    for (std::size_t k = 0; k <= N; ++k) {
        if (!std::isfinite(g[k])) continue;
        if (prev <= N && !in_run[prev] && !in_run[k] && (g[prev] < 0.0) != (g[k] < 0.0)) {
            if (kink_between(kinks, xs[prev], xs[k]) || k - prev > 1)
                cs.diagnostics.push_back("kink inside critical bracket [" + fmt(xs[prev]) + ", " + fmt(xs[k]) +
                                         "]; excluded");
            else
                add_point(cs, drift, bisect_root(mx, xs[prev], xs[k], g[prev]), 1);
        }
        prev = k;
    }

    // touching zeros between samples
    for (std::size_t k = 1; k < N; ++k) {
        if (in_run[k] || !std::isfinite(g[k - 1]) || !std::isfinite(g[k]) || !std::isfinite(g[k + 1])) continue;
        if (!(std::abs(g[k]) < std::abs(g[k - 1]) && std::abs(g[k]) <= std::abs(g[k + 1]))) continue;
        if ((g[k - 1] < 0.0) != (g[k + 1] < 0.0) || (g[k] < 0.0) != (g[k + 1] < 0.0)) continue;
        if (kink_between(kinks, xs[k - 1], xs[k + 1])) continue;
        const double x = golden_min([&](double t) { return std::abs(mx(t)); }, xs[k - 1], xs[k + 1]);
        if (std::abs(mx(x)) < tol) add_point(cs, drift, x, 1);
    }
    std::sort(cs.sigma1_points.begin(), cs.sigma1_points.end(),
              [](const CriticalPoint& p, const CriticalPoint& q) { return p.location.x < q.location.x; });

    // Σ3: outward-pointing gradient at an endpoint
    if (!small(0) && std::isfinite(g[0]) && -g[0] > tol) {
        BoundaryPoint bp = boundary(Face::Left, a);
        bp.kappa = {0.0};
        cs.sigma3.push_back(bp);
    }
    if (!small(N) && std::isfinite(g[N]) && g[N] > tol) {
        BoundaryPoint bp = boundary(Face::Right, b);
        bp.kappa = {0.0};
        cs.sigma3.push_back(bp);
    }
    return cs;
}

CriticalSet critical_points_2d(const Drift& drift, const Domain& dom, std::optional<double> tol_opt) {
    CriticalSet cs;
    const double ax = dom.x[0], bx = dom.x[1], ay = dom.y[0], by = dom.y[1];
    constexpr int seeds = 200;
    double scale = 0.0;
    for (int j = 0; j <= seeds; ++j)
        for (int i = 0; i <= seeds; ++i) {
            const Point p{ax + (bx - ax) * i / seeds, ay + (by - ay) * j / seeds};
            const double gx = safe_eval(drift.mx(), p), gy = safe_eval(drift.my(), p);
            if (std::isfinite(gx) && std::isfinite(gy)) scale = std::max(scale, std::hypot(gx, gy));
        }
    const double tol = tol_opt ? *tol_opt : (scale > 0.0 ? 1e-8 * scale : std::numeric_limits<double>::min());
    cs.tol_grad = tol;
    const double margin = 1e-9 * std::max(bx - ax, by - ay);

    for (int j = 0; j < seeds; ++j) {
        for (int i = 0; i < seeds; ++i) {
            Point p{ax + (bx - ax) * (i + 0.5) / seeds, ay + (by - ay) * (j + 0.5) / seeds};
            bool ok = false;
            for (int it = 0; it < 50; ++it) {
                const double gx = safe_eval(drift.mx(), p), gy = safe_eval(drift.my(), p);
                const double hxx = safe_eval(drift.mxx(), p), hxy = safe_eval(drift.mxy(), p),
                             hyy = safe_eval(drift.myy(), p);
                if (!std::isfinite(gx + gy + hxx + hxy + hyy)) break;
                if (std::hypot(gx, gy) < tol) {
                    ok = true;
                    break;
                }
                const double det = hxx * hyy - hxy * hxy;
                if (std::abs(det) < 1e-300) break;
                p.x -= (hyy * gx - hxy * gy) / det;
                p.y -= (hxx * gy - hxy * gx) / det;
                if (p.x < ax - 1.0 || p.x > bx + 1.0 || p.y < ay - 1.0 || p.y > by + 1.0) break;
            }
            if (!ok) continue;
            if (p.x <= ax + margin || p.x >= bx - margin || p.y <= ay + margin || p.y >= by - margin) continue;
            const bool dup = std::any_of(cs.sigma1_points.begin(), cs.sigma1_points.end(), [&](const CriticalPoint& c) {
                return std::hypot(c.location.x - p.x, c.location.y - p.y) < 1e-6;
            });
            if (!dup) cs.sigma1_points.push_back({p, hessian_eigs(drift, p, 2)});
        }
    }

    // boundary: zeros of the tangential derivative along each face
    for (Face f : {Face::Left, Face::Right, Face::Bottom, Face::Top}) {
        const bool vertical = f == Face::Left || f == Face::Right;
        const Point n = outward_normal(f);
        const auto at = [&](double s) {
            if (vertical) return Point{f == Face::Left ? ax : bx, s};
            return Point{s, f == Face::Bottom ? ay : by};
        };
        const auto tangential = [&](double s) { return safe_eval(vertical ? drift.my() : drift.mx(), at(s)); };
        const double lo = vertical ? ay : ax, hi = vertical ? by : bx;
        constexpr int M = 2000;
        double s0 = lo, t0 = tangential(lo);
        std::vector<double> roots;
        for (int k = 0; k <= M; ++k) {
            const double s1 = lo + (hi - lo) * k / M;
            const double t1 = tangential(s1);
            if (t1 == 0.0)
                roots.push_back(s1);
            else if (k > 0 && std::isfinite(t0) && std::isfinite(t1) && t0 != 0.0 && (t0 < 0.0) != (t1 < 0.0))
                roots.push_back(bisect_root(tangential, s0, s1, t0));
            s0 = s1;
            t0 = t1;
        }
        for (double s : roots) {
            const Point p = at(s);
            const double gx = safe_eval(drift.mx(), p), gy = safe_eval(drift.my(), p);
            const double gn = gx * n.x + gy * n.y;
            BoundaryPoint bp;
            bp.face = f;
            bp.location = p;
            bp.grad_norm = std::hypot(gx, gy);
            const double ktan = safe_eval(vertical ? drift.myy() : drift.mxx(), p);
            if (bp.grad_norm < tol) {
                bp.kappa = hessian_eigs(drift, p, 2);
                cs.sigma2.push_back(bp);
            } else if (gn > tol) {
                bp.kappa = {ktan, 0.0};
                cs.sigma3.push_back(bp);
            }
        }
    }
    return cs;
}

}  // namespace

CriticalSet critical_points(const Drift& drift, const Domain& domain, const std::vector<double>& kinks,
                            std::optional<double> tol_grad) {
    if (domain.dimension == 1) return critical_points_1d(drift, domain, kinks, tol_grad);
    if (domain.dimension == 2) return critical_points_2d(drift, domain, tol_grad);
    throw std::invalid_argument("unsupported dimension");
}

std::vector<double> hessian_eigs(const Drift& drift, Point p, int dimension) {
    if (dimension == 1) return {safe_eval(drift.mxx(), p)};
    const double hxx = safe_eval(drift.mxx(), p), hxy = safe_eval(drift.mxy(), p), hyy = safe_eval(drift.myy(), p);
    const double mean = 0.5 * (hxx + hyy);
    const double rad = std::hypot(0.5 * (hxx - hyy), hxy);
    return {mean + rad, mean - rad};
}

// ---------------------------------------------------------------------------
// D → 0

namespace {

enum class FaceRole { DirichletLike, Neumann, Robin };

FaceRole role_of(const BoundaryCondition& bc) {
    if (bc.kind == BcKind::Dirichlet) return FaceRole::DirichletLike;
    if (bc.kind == BcKind::Neumann) return FaceRole::Neumann;
    if (bc.decomposition && bc.decomposition->scaling == RobinScaling::InverseD) return FaceRole::DirichletLike;
    return FaceRole::Robin;
}

double curvature_term(double alpha, const std::vector<double>& kappa) {
    double s = 0.0;
    for (double k : kappa) s += std::abs(k) + k;
    return alpha * s;
}

std::pair<double, double> min_over(const Expr& V, double l, double r) {
    constexpr int M = 2000;
    double best = kInf, at = l;
    for (int i = 0; i <= M; ++i) {
        const double x = i == M ? r : l + (r - l) * i / M;
        const double v = evaluate(V, x);
        if (v < best) {
            best = v;
            at = x;
        }
    }
    return {best, at};
}

std::string theorem_name(const ProblemSpec& spec) {
    bool all_n = true, all_d = true, all_r = true;
    for (const auto& bc : spec.bc) {
        const FaceRole r = role_of(bc);
        all_n = all_n && r == FaceRole::Neumann;
        all_d = all_d && bc.kind == BcKind::Dirichlet;
        all_r = all_r && bc.kind == BcKind::Robin;
    }
    if (all_n) return "neumann";
    if (all_d) return "dirichlet";
    if (all_r) return "robin";
    return "mixed";
}

}  // namespace

AsymptoticReport limit_small_D(const ProblemSpec& spec, std::optional<double> tol_grad) {
    AsymptoticReport rep;
    rep.theorem = theorem_name(spec);
    rep.critical = critical_points(spec.drift, spec.domain, spec.kinks, tol_grad);
    const CriticalSet& cs = rep.critical;
    const double alpha = spec.alpha;
    const int dim = spec.dimension();
    for (const auto& d : cs.diagnostics) rep.warnings.push_back(d);

    if (dim == 2) {
        if (!cs.sigma2.empty())
            throw std::invalid_argument("boundary critical points in 2D are outside the supported limit formulas");
        for (const auto& p : cs.sigma3)
            if (role_of(spec.face(p.face)) != FaceRole::DirichletLike)
                throw std::invalid_argument("boundary candidates in 2D are outside the supported limit formulas");
    }

    for (const auto& p : cs.sigma1_points) {
        Candidate c;
        c.set = "sigma1";
        c.location = p.location;
        c.V = evaluate(spec.V, p.location);
        c.curvature = curvature_term(alpha, p.kappa);
        c.total = c.V + c.curvature;
        rep.candidates.push_back(c);
    }
    for (const auto& iv : cs.sigma1_intervals) {
        Candidate c;
        c.set = "sigma1-interval";
        c.interval = iv;
        const auto [v, at] = min_over(spec.V, iv.left, iv.right);
        c.location = {at, 0.0};
        c.V = v;
        c.total = v;
        rep.candidates.push_back(c);
    }
    for (const auto& p : cs.sigma2) {
        Candidate c;
        c.set = "sigma2";
        c.location = p.location;
        c.V = evaluate(spec.V, p.location);
        c.curvature = curvature_term(alpha, p.kappa);
        c.total = c.V + c.curvature;
        if (role_of(spec.face(p.face)) == FaceRole::DirichletLike && std::abs(p.kappa[0]) > 1e-8)
            rep.warnings.push_back(std::string("boundary critical point on the Dirichlet ") + face_name(p.face) +
                                   " face has nonzero curvature; the limit formula's hypothesis fails there");
        rep.candidates.push_back(c);
    }
    for (const auto& p : cs.sigma3) {
        const FaceRole role = role_of(spec.face(p.face));
        if (role == FaceRole::DirichletLike) continue;
        Candidate c;
        c.set = "sigma3";
        c.location = p.location;
        c.V = evaluate(spec.V, p.location);
        c.curvature = curvature_term(alpha, p.kappa);
        if (role == FaceRole::Robin)
            c.correction = 2.0 * alpha * spec.face(p.face).coefficient_at(p.location) * p.grad_norm;
        c.total = c.V + c.curvature + c.correction;
        rep.candidates.push_back(c);
    }

    rep.limit = kInf;
    for (const auto& c : rep.candidates) {
        if (c.total < rep.limit) {
            rep.limit = c.total;
            rep.location = c.location;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// D → ∞

const char* verdict_name(LargeDVerdict v) {
    switch (v) {
    case LargeDVerdict::PlusInfinity: return "+inf";
    case LargeDVerdict::MinusInfinity: return "-inf";
    case LargeDVerdict::Finite: return "finite";
    }
    return "?";
}

namespace {

bool exact_zero(double g, double k0, double k1) {
    return std::abs(g) <= 4.0 * std::numeric_limits<double>::epsilon() *
                              (std::abs(k0) + std::abs(k1) + std::abs(k0 * k1) + 1e-300);
}

}  // namespace

int classify_robin_line(double k0, double k1) {
    if (k0 <= -1.0) return -1;
    const double g = k0 + k1 + k0 * k1;
    if (exact_zero(g, k0, k1)) return 0;
    return g > 0.0 ? 1 : -1;
}

LinePhi0 robin_line_phi0(double k0, double k1) {
    if (!(k0 > -1.0) || classify_robin_line(k0, k1) != 0)
        throw std::invalid_argument("robin_line_phi0 needs k0 > -1 and k0 + k1 + k0*k1 = 0");
    LinePhi0 p;
    if (k0 == 0.0) {
        p.b = 1.0;
    } else {
        const double integral = (std::pow(1.0 + k0, 3) - 1.0) / (3.0 * k0);
        p.b = 1.0 / std::sqrt(integral);
    }
    p.a = k0 * p.b;
    return p;
}

double mu1_numeric(const ProblemSpec& spec, std::size_t cells) {
    ProblemSpec s = spec;
    s.D = 1.0;
    s.alpha = 0.0;
    s.V = Expr(0.0);
    s.drift = Drift::from_potential(Expr(0.0), spec.dimension());
    s.kinks.clear();
    if (spec.dimension() == 1) {
        const Grid1D g = Grid1D::uniform(spec.domain.x[0], spec.domain.x[1], cells);
        return solve(s, g, FormPolicy::Symmetrized).lambda;
    }
    const std::size_t n = std::min<std::size_t>(cells, 128);
    const Grid2D g(Grid1D::uniform(spec.domain.x[0], spec.domain.x[1], n),
                   Grid1D::uniform(spec.domain.y[0], spec.domain.y[1], n));
    return solve(s, g, FormPolicy::Symmetrized).lambda;
}

LargeDReport limit_large_D(const ProblemSpec& spec) {
    LargeDReport rep;
    // D·k fixed means k → 0: such faces act as Neumann faces for large D
    ProblemSpec s = spec;
    for (auto& bc : s.bc)
        if (bc.kind == BcKind::Robin && bc.decomposition && bc.decomposition->scaling == RobinScaling::InverseD)
            bc = BoundaryCondition::neumann();
    rep.mu1 = mu1_numeric(s);
    double scale = 0.0;
    for (const auto& bc : s.bc) scale = std::max(scale, std::abs(bc.coefficient));

    // φ₀ and its derivative on [a, b] (1D) when the sign is exactly zero
    std::function<double(double)> phi, dphi;

    if (s.dimension() == 1) {
        rep.algebraic = true;
        rep.method = "algebraic";
        const double a = s.domain.x[0], b = s.domain.x[1], L = b - a;
        const BoundaryCondition& l = s.face(Face::Left);
        const BoundaryCondition& r = s.face(Face::Right);
        const double K0 = l.kind == BcKind::Robin ? l.coefficient * L : 0.0;
        const double K1 = r.kind == BcKind::Robin ? r.coefficient * L : 0.0;
        int sign = 0;
        if (l.kind == BcKind::Dirichlet && r.kind == BcKind::Dirichlet) {
            sign = 1;
        } else if (l.kind == BcKind::Dirichlet || r.kind == BcKind::Dirichlet) {
            const double K = l.kind == BcKind::Dirichlet ? K1 : K0;
            const bool left_dirichlet = l.kind == BcKind::Dirichlet;
            if (std::abs(K + 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) {
                const double c = std::sqrt(3.0 / L);
                if (left_dirichlet) {
                    phi = [=](double x) { return c * (x - a) / L; };
                    dphi = [=](double) { return c / L; };
                } else {
                    phi = [=](double x) { return c * (1.0 - (x - a) / L); };
                    dphi = [=](double) { return -c / L; };
                }
            } else {
                sign = K > -1.0 ? 1 : -1;
            }
        } else {
            sign = classify_robin_line(K0, K1);
            if (sign == 0) {
                const LinePhi0 p = robin_line_phi0(K0, K1);
                const double c = 1.0 / std::sqrt(L);
                phi = [=](double x) { return c * (p.a * (x - a) / L + p.b); };
                dphi = [=](double) { return c * p.a / L; };
            }
        }
        if (sign > 0) rep.verdict = LargeDVerdict::PlusInfinity;
        if (sign < 0) rep.verdict = LargeDVerdict::MinusInfinity;
        if (sign != 0) return rep;

        rep.verdict = LargeDVerdict::Finite;
        // composite 4-point Gauss-Legendre
        static constexpr double gx[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                         0.8611363115940526};
        static constexpr double gw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                         0.3478548451374538};
        constexpr int cells = 4000;
        const double h = L / cells;
        double sum = 0.0;
        for (int c = 0; c < cells; ++c) {
            const double mid = a + (c + 0.5) * h;
            for (int q = 0; q < 4; ++q) {
                const double x = mid + 0.5 * h * gx[q];
                const double f = phi(x);
                sum += 0.5 * h * gw[q] *
                       (evaluate(s.V, x) * f * f - 2.0 * s.alpha * f * evaluate(s.drift.mx(), x) * dphi(x));
            }
        }
        rep.value = sum;
        const Grid1D g = Grid1D::uniform(a, b, 256);
        std::vector<double> v(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) v[i] = phi(g[i]);
        rep.phi0 = Field(g, std::move(v));
        return rep;
    }

    // 2D: gate on the numerical μ1
    rep.method = "numeric";
    const bool all_neumann =
        std::all_of(s.bc.begin(), s.bc.end(), [](const BoundaryCondition& bc) { return bc.kind == BcKind::Neumann; });
    const double gate = 1e-6 * (1.0 + scale);
    if (!all_neumann && rep.mu1 > gate) {
        rep.verdict = LargeDVerdict::PlusInfinity;
        return rep;
    }
    if (!all_neumann && rep.mu1 < -gate) {
        rep.verdict = LargeDVerdict::MinusInfinity;
        return rep;
    }
    rep.verdict = LargeDVerdict::Finite;
    rep.algebraic = all_neumann;
    rep.tolerance_based = !all_neumann;
    constexpr std::size_t n = 128;
    const Grid2D g(Grid1D::uniform(s.domain.x[0], s.domain.x[1], n), Grid1D::uniform(s.domain.y[0], s.domain.y[1], n));
    std::vector<double> f(g.size());
    if (all_neumann) {
        const double area = (s.domain.x[1] - s.domain.x[0]) * (s.domain.y[1] - s.domain.y[0]);
        std::fill(f.begin(), f.end(), 1.0 / std::sqrt(area));
    } else {
        ProblemSpec z = s;
        z.D = 1.0;
        z.alpha = 0.0;
        z.V = Expr(0.0);
        z.drift = Drift::from_potential(Expr(0.0), 2);
        z.kinks.clear();
        f = solve(z, g, FormPolicy::Symmetrized).eigenfunction.values;
    }
    const std::vector<double> wx = g.x().weights(), wy = g.y().weights();
    double sum = 0.0;
    for (std::size_t j = 0; j < g.ny(); ++j) {
        for (std::size_t i = 0; i < g.nx(); ++i) {
            const std::size_t p = g.index(i, j);
            const Point pt{g.x()[i], g.y()[j]};
            const std::size_t il = i > 0 ? i - 1 : i, ir = i + 1 < g.nx() ? i + 1 : i;
            const std::size_t jl = j > 0 ? j - 1 : j, jr = j + 1 < g.ny() ? j + 1 : j;
            const double fx = (f[g.index(ir, j)] - f[g.index(il, j)]) / (g.x()[ir] - g.x()[il]);
            const double fy = (f[g.index(i, jr)] - f[g.index(i, jl)]) / (g.y()[jr] - g.y()[jl]);
            const double drift = evaluate(s.drift.mx(), pt) * fx + evaluate(s.drift.my(), pt) * fy;
            sum += wx[i] * wy[j] * (evaluate(s.V, pt) * f[p] * f[p] - 2.0 * s.alpha * f[p] * drift);
        }
    }
    rep.value = sum;
    rep.phi0 = Field(g, std::move(f));
    return rep;
}

// ---------------------------------------------------------------------------
// sweeps

ProblemSpec with_diffusion(const ProblemSpec& spec, double D) {
    ProblemSpec s = spec;
    for (std::size_t f = 0; f < s.bc.size(); ++f) {
        auto& bc = s.bc[f];
        if (bc.kind != BcKind::Robin || !bc.decomposition || bc.decomposition->scaling != RobinScaling::InverseD)
            continue;
        bc.decomposition->k *= spec.D / D;
        bc.coefficient = bc.coefficient_at(s.face_point(static_cast<Face>(f)));
    }
    s.D = D;
    return s;
}

std::vector<Layer> sweep_layers(const ProblemSpec& spec, const CriticalSet& cs, double D, const GridPolicy& policy) {
    std::vector<Layer> layers;
    if (!(spec.alpha > 0.0)) return layers;
    const double a = spec.domain.x[0], b = spec.domain.x[1];
    const double eps = std::sqrt(D / spec.alpha);
    const double thin = 10.0 * D / spec.alpha;
    const double cap = 0.25 * (b - a);
    const auto add = [&](double x, double w) {
        if (w < cap) layers.push_back({x, w});
    };
    for (const auto& p : cs.sigma1_points) add(p.location.x, eps);
    for (const auto& iv : cs.sigma1_intervals) {
        add(iv.left, eps);
        add(iv.right, eps);
    }
    for (const auto& p : cs.sigma2) add(p.location.x, eps);
    for (double k : spec.kinks) add(k, eps);
    for (const auto& p : cs.sigma3) add(p.location.x, thin);
    if (policy.inflow_layers) {
        for (Face f : {Face::Left, Face::Right}) {
            const double x = f == Face::Left ? a : b;
            const double g = safe_eval(spec.drift.mx(), {x, 0.0});
            if (std::isfinite(g) && std::abs(g) > cs.tol_grad) add(x, thin);
        }
    }
    return layers;
}

namespace {

std::vector<double> axis_layer_sites(const CriticalSet& cs, bool x_axis) {
    std::vector<double> v;
    for (const auto& p : cs.sigma1_points) v.push_back(x_axis ? p.location.x : p.location.y);
    return v;
}

}  // namespace

SweepRow solve_converged(const ProblemSpec& spec, const CriticalSet& cs, const GridPolicy& policy, FormPolicy form) {
    SweepRow row;
    row.D = spec.D;
    const bool two_d = spec.dimension() == 2;
    std::optional<double> prev;
    std::size_t n = policy.base_cells;
    std::size_t npl = policy.nodes_per_layer;
    std::vector<Layer> layers;
    if (!two_d) layers = sweep_layers(spec, cs, spec.D, policy);
    std::size_t retries = 0;
    if (two_d) n = std::min(n, policy.max_cells_2d);
    for (std::size_t level = 0; level < policy.max_levels && (!two_d || n <= policy.max_cells_2d);) {
        GradingOptions opt;
        opt.nodes_per_layer = npl;
        EigenResult r;
        try {
            if (!two_d) {
                const Grid1D g = graded_grid(spec.domain.x[0], spec.domain.x[1], n, layers, spec.kinks, opt);
                r = solve(spec, g, form);
            } else {
                std::vector<Layer> lx, ly;
                if (spec.alpha > 0.0) {
                    const double eps = std::sqrt(spec.D / spec.alpha);
                    for (double x : axis_layer_sites(cs, true))
                        if (eps < 0.25 * (spec.domain.x[1] - spec.domain.x[0])) lx.push_back({x, eps});
                    for (double y : axis_layer_sites(cs, false))
                        if (eps < 0.25 * (spec.domain.y[1] - spec.domain.y[0])) ly.push_back({y, eps});
                }
                const Grid2D g(graded_grid(spec.domain.x[0], spec.domain.x[1], n, lx, {}, opt),
                               graded_grid(spec.domain.y[0], spec.domain.y[1], n, ly, {}, opt));
                r = solve(spec, g, form);
            }
        } catch (const std::invalid_argument& e) {
            if (std::string(e.what()).find("infeasible") == std::string::npos || ++retries > 8) throw;
            n *= 2;
            continue;
        }
        row.grid_n = n;
        row.lambda = r.lambda;
        row.residual = r.residual;
        row.form = r.form.name();
        row.levels = level + 1;
        if (prev && std::abs(r.lambda - *prev) <= policy.rel_tol * std::abs(r.lambda) + policy.abs_tol) {
            row.converged = true;
            return row;
        }
        prev = r.lambda;
        n *= 2;
        npl *= 2;
        ++level;
    }
    return row;
}

std::size_t worker_count() {
    std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("EIGENDRIFT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) f(i);
        });
    for (auto& t : pool) t.join();
}

SweepTable sweep(const std::function<ProblemSpec(double)>& make_spec, const std::vector<double>& Ds,
                 const GridPolicy& policy, FormPolicy form) {
    for (double D : Ds)
        if (!(D > 0.0)) throw std::invalid_argument("sweep needs positive D values");
    SweepTable t;
    t.rows.resize(Ds.size());
    parallel_for(Ds.size(), [&](std::size_t i) {
        SweepRow& row = t.rows[i];
        row.D = Ds[i];
        try {
            const ProblemSpec s = make_spec(Ds[i]);
            const CriticalSet cs = critical_points(s.drift, s.domain, s.kinks);
            row = solve_converged(s, cs, policy, form);
        } catch (const std::exception& e) {
            row.lambda = kNaN;
            row.error = e.what();
        }
    });
    return t;
}

SweepTable sweep(const ProblemSpec& spec, const std::vector<double>& Ds, const GridPolicy& policy, FormPolicy form) {
    return sweep([&](double D) { return with_diffusion(spec, D); }, Ds, policy, form);
}

// ---------------------------------------------------------------------------

RateFit fit_rate(const SweepTable& table, RateModel model) {
    RateFit fit;
    std::vector<double> xs, ys;
    for (const auto& r : table.rows) {
        if (!std::isfinite(r.lambda) || !r.error.empty()) {
            fit.diagnostics.push_back("row D=" + fmt(r.D) + " dropped: no eigenvalue");
            continue;
        }
        if (!(r.lambda > 0.0)) {
            fit.diagnostics.push_back("row D=" + fmt(r.D) + " dropped: non-positive lambda");
            continue;
        }
        xs.push_back(model == RateModel::PowerLaw ? std::log(r.D) : 1.0 / r.D);
        ys.push_back(std::log(r.lambda));
    }
    if (xs.size() < 4) throw std::invalid_argument("fit_rate needs at least 4 usable rows");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    fit.points = xs.size();
    return fit;
}

}  // namespace eigendrift
