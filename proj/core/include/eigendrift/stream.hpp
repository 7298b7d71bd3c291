#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "eigendrift/asymptotics.hpp"
#include "eigendrift/eigen.hpp"
#include "eigendrift/expr.hpp"
#include "eigendrift/model.hpp"

namespace eigendrift {

/// Raised when two independent evaluations of the same quantity disagree.
class CrossCheckError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Downstream boundary type: no-flux, free-flow or hostile.
enum class Downstream { NF, FF, H };
const char* downstream_name(Downstream d);
std::optional<Downstream> parse_downstream(std::string_view s);

/// u_t = [D u_x - q u]_x + r u - u² on (0, 1), no-flux upstream.
struct StreamSpec {
    double D = 1.0;
    Expr q;
    Expr r;
    Downstream downstream = Downstream::NF;
};

/// 1e-10 · max q over the sample grid (smallest normal double when q ≡ 0).
double stream_tol_q(const StreamSpec& s);

/// Empty iff the stream problem is usable.
std::vector<std::string> validate(const StreamSpec& s);

/// -Dφ'' - qφ' - rφ = λφ: α = 1, m' = q/2 (m tabulated), V = -r, Neumann
/// upstream; downstream Neumann (NF), Robin q(1)/D with D·k fixed (FF) or
/// Dirichlet (H). Kinks are those of q.
ProblemSpec to_eigenproblem(const StreamSpec& s);

enum class BufferCase { A, B, C, D, Other };
const char* buffer_case_name(BufferCase c);

struct BufferPattern {
    BufferCase kind = BufferCase::Other;
    /// Maximal sample runs with q < tol_q, sorted and disjoint.
    std::vector<CriticalInterval> buffers;
};

/// Throws std::invalid_argument when the buffer covers the whole habitat.
BufferPattern detect_buffers(const StreamSpec& s);

enum class Fate { Extinction, Persistence };
const char* fate_name(Fate f);

struct PersistenceReport {
    Fate fate = Fate::Extinction;
    double lambda = 0.0;
    /// |λ| under the classification tolerance 1e-8(1 + |λ|).
    bool borderline = false;
    EigenResult eigen;
};

PersistenceReport classify_persistence(const StreamSpec& s, const Grid1D& grid,
                                       FormPolicy form = FormPolicy::Auto);

struct StreamLimitRow {
    Downstream downstream = Downstream::NF;
    double closed_form = 0.0;  // small-D limit from the buffer table
    AsymptoticReport report;   // general machinery on the mapped problem
    double large_D = 0.0;      // -∫r or +∞
    LargeDReport large_report;
};

struct StreamLimits {
    BufferPattern pattern;
    std::vector<StreamLimitRow> rows;  // NF, FF, H
};

/// Closed-form limits for all three downstream types. Throws
/// CrossCheckError when a closed form disagrees with the general machinery.
StreamLimits small_D_limits(const StreamSpec& s);

/// λ from a direct discretization of -[Dψ' - qψ]' - rψ = λψ with
/// exponentially fitted fluxes.
double psi_form_lambda(const StreamSpec& s, const Grid1D& grid);

/// Sweep over D, rebuilding the downstream condition per row.
SweepTable stream_sweep(const StreamSpec& s, const std::vector<double>& Ds, const GridPolicy& policy = {},
                        FormPolicy form = FormPolicy::Auto);

// ---------------------------------------------------------------------------
// time integration

struct SimulationOptions {
    std::size_t max_snapshots = 200;
};

struct Trajectory {
    Grid1D grid;
    std::vector<double> times;
    std::vector<std::vector<double>> snapshots;
    double final_max = 0.0;
    double final_min = 0.0;
    /// Extinction when final max < 1e-6, Persistence when final min > 1e-3.
    std::optional<Fate> observed;
};

/// IMEX: fitted flux operator implicit, reaction explicit.
Trajectory simulate(const StreamSpec& s, const Grid1D& grid, const std::vector<double>& u0, double T, double dt,
                    const SimulationOptions& options = {});

/// Long format, header "t,x,u", 17 significant digits.
void write_trajectory_csv(std::ostream& os, const Trajectory& t);

struct SteadyState {
    Fate fate = Fate::Extinction;
    double lambda = 0.0;
    /// Empty for the zero state.
    std::vector<double> u;
    double residual = 0.0;
};

SteadyState steady_state(const StreamSpec& s, const Grid1D& grid);

}  // namespace eigendrift
