#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eigendrift/expr.hpp"

namespace eigendrift {

/// Tensor-product factor: strictly increasing nodes x_0 = a < ... < x_n = b,
/// at least 8 cells, adjacent cells differing by a factor of at most 1.2.
class Grid1D {
public:
    static constexpr double kMaxGradingRatio = 1.2;
    static constexpr std::size_t kMinCells = 8;

    explicit Grid1D(std::vector<double> nodes);
    static Grid1D uniform(double a, double b, std::size_t cells);

    double a() const { return nodes_.front(); }
    double b() const { return nodes_.back(); }
    std::size_t cells() const { return nodes_.size() - 1; }
    std::size_t size() const { return nodes_.size(); }
    double operator[](std::size_t i) const { return nodes_[i]; }
    std::span<const double> nodes() const { return nodes_; }

    double spacing(std::size_t cell) const { return nodes_[cell + 1] - nodes_[cell]; }
    double min_spacing() const;
    double max_spacing() const;
    double max_grading_ratio() const;

    /// Trapezoid weights (dual-cell lengths) per node.
    std::vector<double> weights() const;

private:
    std::vector<double> nodes_;
};

class Grid2D {
public:
    Grid2D(Grid1D x, Grid1D y) : x_(std::move(x)), y_(std::move(y)) {}

    const Grid1D& x() const { return x_; }
    const Grid1D& y() const { return y_; }
    std::size_t nx() const { return x_.size(); }
    std::size_t ny() const { return y_.size(); }
    std::size_t size() const { return nx() * ny(); }
    /// Row-major node index, x fastest.
    std::size_t index(std::size_t i, std::size_t j) const { return j * nx() + i; }

private:
    Grid1D x_;
    Grid1D y_;
};

struct Layer {
    double location = 0.0;
    double width = 0.0;
};

struct GradingOptions {
    std::size_t nodes_per_layer = 16;
    /// Relative growth of the spacing per unit distance away from a layer.
    double growth = 0.1;
};

/// Mesh refined geometrically toward each layer so that every window
/// [location - width, location + width] ∩ [a, b] holds at least
/// `nodes_per_layer` nodes. Nodes are then nudged so that none lies on a
/// kink. Throws std::invalid_argument when n cannot accommodate the layers.
Grid1D graded_grid(double a, double b, std::size_t n, std::span<const Layer> layers,
                   std::span<const double> kinks = {}, const GradingOptions& options = {});

/// Values of a scalar field at the nodes of a 1D grid or a tensor grid
/// (row-major, x fastest).
struct Field {
    std::vector<double> values;
    std::size_t nx = 0;
    std::size_t ny = 1;

    Field() = default;
    Field(const Grid1D& g, std::vector<double> v);
    Field(const Grid2D& g, std::vector<double> v);

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
};

Field sample_field(const Expr& f, const Grid1D& grid);
Field sample_field(const Expr& f, const Grid2D& grid);

// ---------------------------------------------------------------------------

enum class Face { Left, Right, Bottom, Top };

/// Outward normal of a face.
Point outward_normal(Face f);
const char* face_name(Face f);

enum class BcKind { Dirichlet, Neumann, Robin };

/// How the Robin scale k behaves as D varies in a family of problems.
/// InverseD marks k = const / D (D·k fixed), which turns the face
/// Dirichlet-like in the small-D limit.
enum class RobinScaling { Fixed, InverseD };

struct RobinDecomposition {
    double k = 0.0;
    Expr beta{1.0};
    RobinScaling scaling = RobinScaling::Fixed;
};

/// Condition dφ/dn + c·φ = 0 with outward normal n (Robin), φ = 0
/// (Dirichlet) or dφ/dn = 0 (Neumann).
struct BoundaryCondition {
    BcKind kind = BcKind::Neumann;
    double coefficient = 0.0;
    std::optional<RobinDecomposition> decomposition;

    static BoundaryCondition dirichlet();
    static BoundaryCondition neumann();
    static BoundaryCondition robin(double c);
    /// c = k·beta(x); `face_point` fixes the stored scalar coefficient.
    static BoundaryCondition robin(double k, Expr beta, Point face_point,
                                   RobinScaling scaling = RobinScaling::Fixed);

    /// Robin coefficient at a boundary point (0 for Neumann).
    double coefficient_at(Point p) const;
};

struct Domain {
    int dimension = 1;
    std::array<double, 2> x{0.0, 1.0};
    std::array<double, 2> y{0.0, 1.0};
};

/// Drift potential m and its derivatives. When only m' is known (1D),
/// values of m come from a tabulated cumulative integral.
class Drift {
public:
    Drift();
    static Drift from_potential(const Expr& m, int dimension);
    /// 1D drift given through m' alone; m(x) = ∫_a^x m'.
    static Drift from_gradient(const Expr& mx, double a, double b);

    bool has_potential() const { return potential_.has_value(); }
    const std::optional<Expr>& potential() const { return potential_; }
    const Expr& mx() const { return mx_; }
    const Expr& my() const { return my_; }
    const Expr& mxx() const { return mxx_; }
    const Expr& mxy() const { return mxy_; }
    const Expr& myy() const { return myy_; }

    double value(Point p) const;
    double laplacian(Point p, int dimension) const;
    double gradient_squared(Point p, int dimension) const;

private:
    std::optional<Expr> potential_;
    Expr mx_, my_, mxx_, mxy_, myy_;
    struct Table {
        double a = 0.0;
        double b = 1.0;
        std::vector<double> values;
    };
    std::shared_ptr<const Table> table_;
};

/// Full description of -DΔφ - 2α∇m·∇φ + Vφ = λφ with per-face conditions.
/// Faces: 1D {Left, Right}; 2D {Left, Right, Bottom, Top}.
struct ProblemSpec {
    Domain domain;
    double D = 1.0;
    double alpha = 0.0;
    Drift drift;
    Expr V;
    std::vector<BoundaryCondition> bc{BoundaryCondition::neumann(), BoundaryCondition::neumann()};
    /// x-coordinates where m fails to be C² (1D).
    std::vector<double> kinks;

    int dimension() const { return domain.dimension; }
    const BoundaryCondition& face(Face f) const { return bc.at(static_cast<std::size_t>(f)); }
    std::size_t face_count() const { return dimension() == 1 ? 2 : 4; }
    /// Point on a face (the face itself in 1D, its midpoint in 2D).
    Point face_point(Face f) const;
    /// α·(max m - min m)/D sampled over the domain.
    double exponent_range(std::size_t samples = 1025) const;
};

/// Empty iff the problem is well posed for this library.
std::vector<std::string> validate(const ProblemSpec& spec);

/// Roots inside (a, b) of the arguments of every abs() call in f (1D).
std::vector<double> abs_kinks(const Expr& f, double a, double b);

}  // namespace eigendrift
