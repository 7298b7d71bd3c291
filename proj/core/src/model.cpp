#include "eigendrift/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace eigendrift {

// ---------------------------------------------------------------------------
// Grid1D

Grid1D::Grid1D(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < kMinCells + 1)
        throw std::invalid_argument("Grid1D needs at least " + std::to_string(kMinCells) + " cells");
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
        if (!(nodes_[i + 1] > nodes_[i]) || !std::isfinite(nodes_[i + 1]))
            throw std::invalid_argument("Grid1D nodes must be finite and strictly increasing (index " +
                                        std::to_string(i) + ")");
    }
    if (max_grading_ratio() > kMaxGradingRatio * (1.0 + 1e-9))
        throw std::invalid_argument("Grid1D grading ratio " + std::to_string(max_grading_ratio()) +
                                    " exceeds 1.2");
}

Grid1D Grid1D::uniform(double a, double b, std::size_t cells) {
    if (!(b > a)) throw std::invalid_argument("Grid1D::uniform needs a < b");
    std::vector<double> x(cells + 1);
    const double h = (b - a) / static_cast<double>(cells);
    for (std::size_t i = 0; i <= cells; ++i) x[i] = a + h * static_cast<double>(i);
    x.back() = b;
    return Grid1D(std::move(x));
}

double Grid1D::min_spacing() const {
    double h = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cells(); ++i) h = std::min(h, spacing(i));
    return h;
}

double Grid1D::max_spacing() const {
    double h = 0.0;
    for (std::size_t i = 0; i < cells(); ++i) h = std::max(h, spacing(i));
    return h;
}

double Grid1D::max_grading_ratio() const {
    double r = 1.0;
    for (std::size_t i = 0; i + 1 < cells(); ++i) {
        const double h0 = spacing(i);
        const double h1 = spacing(i + 1);
        r = std::max(r, std::max(h0 / h1, h1 / h0));
    }
    return r;
}

std::vector<double> Grid1D::weights() const {
    std::vector<double> w(size(), 0.0);
    for (std::size_t i = 0; i < cells(); ++i) {
        const double half = 0.5 * spacing(i);
        w[i] += half;
        w[i + 1] += half;
    }
    return w;
}

// ---------------------------------------------------------------------------
// graded_grid

namespace {

struct SpacingFunction {
    std::vector<std::array<double, 3>> windows;  // lo, hi, fine spacing
    double growth;
    double cap;

    double operator()(double x) const {
        double s = cap;
        for (const auto& w : windows) {
            const double d = x < w[0] ? w[0] - x : (x > w[1] ? x - w[1] : 0.0);
            s = std::min(s, w[2] + growth * d);
        }
        return s;
    }
};

constexpr int kSubsteps = 8;

// ∫ dx / s(x) by marching with steps s/kSubsteps; optionally records the map.
double cell_count(const SpacingFunction& s, double a, double b, std::vector<double>* xs,
                  std::vector<double>* cum) {
    double x = a;
    double sx = s(x);
    double acc = 0.0;
    if (xs) {
        xs->assign(1, a);
        cum->assign(1, 0.0);
    }
    while (x < b) {
        double xn = x + sx / kSubsteps;
        if (xn >= b || b - xn < 1e-3 * sx / kSubsteps) xn = b;
        const double sn = s(xn);
        acc += (xn - x) * 0.5 * (1.0 / sx + 1.0 / sn);
        x = xn;
        sx = sn;
        if (xs) {
            xs->push_back(x);
            cum->push_back(acc);
        }
    }
    return acc;
}

void nudge_off_kinks(std::vector<double>& x, std::span<const double> kinks) {
    const std::size_t n = x.size() - 1;
    for (double k : kinks) {
        if (!(k > x.front() && k < x.back())) continue;
        const auto it = std::lower_bound(x.begin(), x.end(), k);
        std::size_t i = static_cast<std::size_t>(it - x.begin());
        if (i > 0 && (i == x.size() || std::abs(x[i - 1] - k) < std::abs(x[i] - k))) --i;
        if (i == 0 || i == n) continue;
        const double h = 0.5 * (x[i + 1] - x[i - 1]);
        if (std::abs(x[i] - k) >= 0.25 * h) continue;
        const double target = x[i] >= k ? k + 0.5 * h : k - 0.5 * h;
        const double delta = target - x[i];
        const std::size_t reach = std::min<std::size_t>({12, i, n - i});
        for (std::size_t j = i - reach + 1; j < i + reach; ++j) {
            const double dist = static_cast<double>(j > i ? j - i : i - j);
            x[j] += delta * (1.0 - dist / static_cast<double>(reach));
        }
    }
}

}  // namespace

Grid1D graded_grid(double a, double b, std::size_t n, std::span<const Layer> layers,
                   std::span<const double> kinks, const GradingOptions& options) {
    if (!(b > a)) throw std::invalid_argument("graded_grid needs a < b");
    if (layers.empty()) {
        if (n < Grid1D::kMinCells) throw std::invalid_argument("graded_grid: too few cells");
        const Grid1D u = Grid1D::uniform(a, b, n);
        std::vector<double> x(u.nodes().begin(), u.nodes().end());
        nudge_off_kinks(x, kinks);
        return Grid1D(std::move(x));
    }
    if (n < 64) throw std::invalid_argument("graded_grid with layers needs n >= 64");

    SpacingFunction s;
    s.growth = options.growth;
    for (const Layer& l : layers) {
        if (!(l.width > 0.0)) throw std::invalid_argument("graded_grid: layer width must be positive");
        if (l.location < a || l.location > b)
            throw std::invalid_argument("graded_grid: layer location outside [a, b]");
        const double lo = std::max(a, l.location - l.width);
        const double hi = std::min(b, l.location + l.width);
        const double fine = (hi - lo) / static_cast<double>(options.nodes_per_layer + 4);
        s.windows.push_back({lo, hi, fine});
    }

    const double target = static_cast<double>(n);
    s.cap = 2.0 * (b - a);
    if (cell_count(s, a, b, nullptr, nullptr) > target)
        throw std::invalid_argument("graded_grid: infeasible refinement, n = " + std::to_string(n) +
                                    " is too small for the requested layers");

    // bisect the coarse spacing cap so that exactly n cells result
    double lo = std::log((b - a) / target);
    double hi = std::log(2.0 * (b - a));
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        s.cap = std::exp(mid);
        if (cell_count(s, a, b, nullptr, nullptr) > target)
            lo = mid;
        else
            hi = mid;
    }
    s.cap = std::exp(lo);

    std::vector<double> xs, cum;
    const double total = cell_count(s, a, b, &xs, &cum);
    std::vector<double> x(n + 1);
    x.front() = a;
    x.back() = b;
    std::size_t k = 0;
    for (std::size_t i = 1; i < n; ++i) {
        const double xi = total * static_cast<double>(i) / target;
        while (k + 1 < cum.size() && cum[k + 1] < xi) ++k;
        const double t = (xi - cum[k]) / (cum[k + 1] - cum[k]);
        x[i] = xs[k] + t * (xs[k + 1] - xs[k]);
    }
    nudge_off_kinks(x, kinks);
    return Grid1D(std::move(x));
}

// ---------------------------------------------------------------------------
// Field

Field::Field(const Grid1D& g, std::vector<double> v) : values(std::move(v)), nx(g.size()), ny(1) {
    if (values.size() != g.size()) throw std::invalid_argument("Field size does not match grid");
}

Field::Field(const Grid2D& g, std::vector<double> v) : values(std::move(v)), nx(g.nx()), ny(g.ny()) {
    if (values.size() != g.size()) throw std::invalid_argument("Field size does not match grid");
}

Field sample_field(const Expr& f, const Grid1D& grid) {
    if (f.depends_on(Variable::Y)) throw std::invalid_argument("sample_field: expression uses y on a 1D grid");
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        try {
            v[i] = evaluate(f, grid[i]);
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " at node " + std::to_string(i), e.subexpression());
        }
    }
    return Field(grid, std::move(v));
}

Field sample_field(const Expr& f, const Grid2D& grid) {
    std::vector<double> v(grid.size());
    for (std::size_t j = 0; j < grid.ny(); ++j) {
        for (std::size_t i = 0; i < grid.nx(); ++i) {
            try {
                v[grid.index(i, j)] = evaluate(f, Point{grid.x()[i], grid.y()[j]});
            } catch (const DomainError& e) {
                throw DomainError(std::string(e.what()) + " at node (" + std::to_string(i) + ", " +
                                      std::to_string(j) + ")",
                                  e.subexpression());
            }
        }
    }
    return Field(grid, std::move(v));
}

// ---------------------------------------------------------------------------
// boundary conditions

Point outward_normal(Face f) {
    switch (f) {
    case Face::Left: return {-1.0, 0.0};
    case Face::Right: return {1.0, 0.0};
    case Face::Bottom: return {0.0, -1.0};
    case Face::Top: return {0.0, 1.0};
    }
    return {};
}

const char* face_name(Face f) {
    switch (f) {
    case Face::Left: return "left";
    case Face::Right: return "right";
    case Face::Bottom: return "bottom";
    case Face::Top: return "top";
    }
    return "?";
}

BoundaryCondition BoundaryCondition::dirichlet() { return {BcKind::Dirichlet, 0.0, std::nullopt}; }
BoundaryCondition BoundaryCondition::neumann() { return {BcKind::Neumann, 0.0, std::nullopt}; }
BoundaryCondition BoundaryCondition::robin(double c) { return {BcKind::Robin, c, std::nullopt}; }

BoundaryCondition BoundaryCondition::robin(double k, Expr beta, Point face_point, RobinScaling scaling) {
    const double c = k * evaluate(beta, face_point);
    return {BcKind::Robin, c, RobinDecomposition{k, std::move(beta), scaling}};
}

double BoundaryCondition::coefficient_at(Point p) const {
    if (kind != BcKind::Robin) return 0.0;
    if (decomposition) return decomposition->k * evaluate(decomposition->beta, p);
    return coefficient;
}

// ---------------------------------------------------------------------------
// Drift

Drift::Drift() = default;

Drift Drift::from_potential(const Expr& m, int dimension) {
    Drift d;
    d.potential_ = m;
    d.mx_ = differentiate(m, Variable::X);
    d.mxx_ = differentiate(d.mx_, Variable::X);
    if (dimension == 2) {
        d.my_ = differentiate(m, Variable::Y);
        d.mxy_ = differentiate(d.mx_, Variable::Y);
        d.myy_ = differentiate(d.my_, Variable::Y);
    }
    return d;
}

Drift Drift::from_gradient(const Expr& mx, double a, double b) {
    Drift d;
    d.mx_ = mx;
    d.mxx_ = differentiate(mx, Variable::X);

    // composite 4-point Gauss-Legendre per knot interval
    constexpr std::size_t knots = 10000;
    static constexpr double gx[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                     0.8611363115940526};
    static constexpr double gw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                     0.3478548451374538};
    auto table = std::make_shared<Table>();
    table->a = a;
    table->b = b;
    table->values.assign(knots + 1, 0.0);
    const double h = (b - a) / static_cast<double>(knots);
    for (std::size_t k = 0; k < knots; ++k) {
        const double mid = a + (static_cast<double>(k) + 0.5) * h;
        double sum = 0.0;
        for (int q = 0; q < 4; ++q) sum += gw[q] * evaluate(mx, mid + 0.5 * h * gx[q]);
        table->values[k + 1] = table->values[k] + 0.5 * h * sum;
    }
    d.table_ = std::move(table);
    return d;
}

double Drift::value(Point p) const {
    if (potential_) return evaluate(*potential_, p);
    if (!table_) return 0.0;
    const Table& t = *table_;
    const double n = static_cast<double>(t.values.size() - 1);
    const double s = std::clamp((p.x - t.a) / (t.b - t.a) * n, 0.0, n);
    const auto k = std::min(static_cast<std::size_t>(s), t.values.size() - 2);
    const double f = s - static_cast<double>(k);
    return t.values[k] + f * (t.values[k + 1] - t.values[k]);
}

double Drift::laplacian(Point p, int dimension) const {
    double v = evaluate(mxx_, p);
    if (dimension == 2) v += evaluate(myy_, p);
    return v;
}

double Drift::gradient_squared(Point p, int dimension) const {
    const double gx = evaluate(mx_, p);
    double v = gx * gx;
    if (dimension == 2) {
        const double gy = evaluate(my_, p);
        v += gy * gy;
    }
    return v;
}

// ---------------------------------------------------------------------------
// ProblemSpec

Point ProblemSpec::face_point(Face f) const {
    const double xm = 0.5 * (domain.x[0] + domain.x[1]);
    const double ym = dimension() == 2 ? 0.5 * (domain.y[0] + domain.y[1]) : 0.0;
    switch (f) {
    case Face::Left: return {domain.x[0], ym};
    case Face::Right: return {domain.x[1], ym};
    case Face::Bottom: return {xm, domain.y[0]};
    case Face::Top: return {xm, domain.y[1]};
    }
    return {};
}

double ProblemSpec::exponent_range(std::size_t samples) const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    const std::size_t ny = dimension() == 2 ? samples : 1;
    for (std::size_t j = 0; j < ny; ++j) {
        const double y = dimension() == 2 ? domain.y[0] + (domain.y[1] - domain.y[0]) * static_cast<double>(j) /
                                                              static_cast<double>(samples - 1)
                                          : 0.0;
        for (std::size_t i = 0; i < samples; ++i) {
            const double x = domain.x[0] + (domain.x[1] - domain.x[0]) * static_cast<double>(i) /
                                               static_cast<double>(samples - 1);
            const double v = drift.value({x, y});
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    return alpha * (hi - lo) / D;
}

namespace {

std::string fmt_point(Point p, int dim) {
    std::ostringstream os;
    os.precision(6);
    if (dim == 1)
        os << "x=" << p.x;
    else
        os << "(" << p.x << ", " << p.y << ")";
    return os.str();
}

bool near_kink(double x, const std::vector<double>& kinks, double tol) {
    return std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(x - k) < tol; });
}

}  // namespace

std::vector<std::string> validate(const ProblemSpec& spec) {
    std::vector<std::string> out;
    const int dim = spec.dimension();
    if (dim != 1 && dim != 2) {
        out.push_back("unsupported dimension " + std::to_string(dim));
        return out;
    }
    if (!(spec.D > 0.0) || !std::isfinite(spec.D)) out.push_back("nonpositive diffusion");
    if (!(spec.alpha >= 0.0) || !std::isfinite(spec.alpha)) out.push_back("negative advection");
    if (!(spec.domain.x[1] > spec.domain.x[0]) || (dim == 2 && !(spec.domain.y[1] > spec.domain.y[0])))
        out.push_back("empty domain");
    if (spec.bc.size() != spec.face_count()) {
        out.push_back("expected " + std::to_string(spec.face_count()) + " boundary conditions, got " +
                      std::to_string(spec.bc.size()));
        return out;
    }
    if (dim == 1) {
        for (const Expr* e : {&spec.V, &spec.drift.mx()}) {
            if (e->depends_on(Variable::Y)) out.push_back("1D coefficient depends on y");
        }
        if (spec.drift.potential() && spec.drift.potential()->depends_on(Variable::Y))
            out.push_back("1D drift potential depends on y");
    }

    // per-face Robin data
    for (std::size_t f = 0; f < spec.face_count(); ++f) {
        const auto face = static_cast<Face>(f);
        const BoundaryCondition& bc = spec.bc[f];
        if (bc.kind != BcKind::Robin) continue;
        if (!std::isfinite(bc.coefficient))
            out.push_back(std::string("non-finite Robin coefficient on ") + face_name(face) + " face");
        if (!bc.decomposition) continue;
        const int samples = dim == 1 ? 1 : 17;
        for (int s = 0; s < samples; ++s) {
            Point p = spec.face_point(face);
            if (dim == 2) {
                const double t = static_cast<double>(s) / (samples - 1);
                if (face == Face::Left || face == Face::Right)
                    p.y = spec.domain.y[0] + t * (spec.domain.y[1] - spec.domain.y[0]);
                else
                    p.x = spec.domain.x[0] + t * (spec.domain.x[1] - spec.domain.x[0]);
            }
            double c = 0.0;
            try {
                c = bc.coefficient_at(p);
            } catch (const DomainError& e) {
                out.push_back(std::string("Robin beta not evaluable on ") + face_name(face) + " face: " + e.what());
                break;
            }
            if (!std::isfinite(c)) {
                out.push_back(std::string("non-finite Robin data on ") + face_name(face) + " face at " +
                              fmt_point(p, dim));
                break;
            }
            if (dim == 1 && std::abs(c - bc.coefficient) > 1e-12 * (1.0 + std::abs(c)))
                out.push_back(std::string("Robin decomposition inconsistent on ") + face_name(face) +
                              " face: c != k*beta");
        }
    }

    // drift derivatives and V away from declared kinks
    const std::size_t n = 257;
    const std::size_t ny = dim == 2 ? n : 1;
    bool drift_reported = false;
    bool v_reported = false;
    for (std::size_t j = 0; j < ny; ++j) {
        const double y = dim == 2 ? spec.domain.y[0] + (spec.domain.y[1] - spec.domain.y[0]) *
                                                           (static_cast<double>(j) + 0.5) / static_cast<double>(n)
                                  : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = spec.domain.x[0] +
                             (spec.domain.x[1] - spec.domain.x[0]) * (static_cast<double>(i) + 0.5) /
                                 static_cast<double>(n);
            const Point p{x, y};
            if (!drift_reported && !near_kink(x, spec.kinks, 1e-12)) {
                try {
                    double g = evaluate(spec.drift.mx(), p);
                    double l = evaluate(spec.drift.mxx(), p);
                    if (dim == 2) {
                        g += evaluate(spec.drift.my(), p);
                        l += evaluate(spec.drift.myy(), p) + evaluate(spec.drift.mxy(), p);
                    }
                    if (!std::isfinite(g) || !std::isfinite(l)) throw DomainError("non-finite derivative", "m");
                } catch (const DomainError& e) {
                    out.push_back("drift not twice differentiable at " + fmt_point(p, dim) +
                                  " (declare a kink): " + e.what());
                    drift_reported = true;
                }
            }
            if (!v_reported) {
                try {
                    if (!std::isfinite(evaluate(spec.V, p))) throw DomainError("non-finite value", "V");
                } catch (const DomainError& e) {
                    out.push_back("V not evaluable at " + fmt_point(p, dim) + ": " + e.what());
                    v_reported = true;
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void collect_abs_args(const Node& n, std::vector<Expr>& out) {
    if (n.kind == Node::Kind::Call && n.fn == Function::Abs) out.push_back(n.left());
    if (n.lhs) collect_abs_args(*n.lhs, out);
    if (n.rhs) collect_abs_args(*n.rhs, out);
}

}  // namespace

std::vector<double> abs_kinks(const Expr& f, double a, double b) {
    std::vector<Expr> args;
    collect_abs_args(f.node(), args);
    std::vector<double> roots;
    constexpr int samples = 2000;
    for (const Expr& u : args) {
        auto val = [&](double x) {
            try {
                return evaluate(u, x);
            } catch (const DomainError&) {
                return std::numeric_limits<double>::quiet_NaN();
            }
        };
        double x0 = a;
        double f0 = val(x0);
        for (int i = 1; i <= samples; ++i) {
            const double x1 = a + (b - a) * i / samples;
            const double f1 = val(x1);
            if (f1 == 0.0 && x1 > a && x1 < b) {
                roots.push_back(x1);
            } else if (std::isfinite(f0) && std::isfinite(f1) && f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0)) {
                double lo = x0, hi = x1, flo = f0;
                for (int it = 0; it < 200 && hi - lo > 4 * std::numeric_limits<double>::epsilon() * std::abs(hi);
                     ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double fm = val(mid);
                    if (fm == 0.0) {
                        lo = hi = mid;
                        break;
                    }
                    if ((fm < 0.0) == (flo < 0.0)) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push_back(0.5 * (lo + hi));
            }
            x0 = x1;
            f0 = f1;
        }
    }
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(), [](double p, double q) { return std::abs(p - q) < 1e-12; }),
                roots.end());
    return roots;
}

}  // namespace eigendrift
