#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "eigendrift/asymptotics.hpp"
#include "eigendrift/eigen.hpp"
#include "eigendrift/expr.hpp"
#include "eigendrift/model.hpp"
#include "eigendrift/stream.hpp"

namespace eigendrift::cli {

namespace {

using json = nlohmann::ordered_json;

struct Options {
    std::string config;
    std::string out;
    std::string form;
    std::string format;
    std::optional<double> D;
    std::optional<std::size_t> grid;
    // classify-robin
    std::optional<double> k0, k1;
    // rate-fit
    std::string table;
    std::string model = "powerlaw";
};

json num(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return nullptr;
    return x > 0 ? "inf" : "-inf";
}

std::string g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

json point_json(Point p, int dim) {
    if (dim == 1) return json{{"x", num(p.x)}};
    return json{{"x", num(p.x)}, {"y", num(p.y)}};
}

json kappa_json(const std::vector<double>& k) {
    json a = json::array();
    for (double v : k) a.push_back(num(v));
    return a;
}

json report_json(const AsymptoticReport& r, int dim) {
    json j;
    j["limit"] = num(r.limit);
    j["location"] = r.location ? point_json(*r.location, dim) : json(nullptr);
    j["theorem"] = r.theorem;
    json cands = json::array();
    for (const auto& c : r.candidates) {
        json e;
        e["set"] = c.set;
        e["location"] = point_json(c.location, dim);
        if (c.interval) e["interval"] = json::array({num(c.interval->left), num(c.interval->right)});
        e["V"] = num(c.V);
        e["curvature"] = num(c.curvature);
        e["correction"] = num(c.correction);
        e["total"] = num(c.total);
        cands.push_back(e);
    }
    j["candidates"] = cands;
    json crit;
    crit["tol_grad"] = num(r.critical.tol_grad);
    json pts = json::array();
    for (const auto& p : r.critical.sigma1_points)
        pts.push_back(json{{"location", point_json(p.location, dim)}, {"kappa", kappa_json(p.kappa)}});
    crit["sigma1_points"] = pts;
    json ivs = json::array();
    for (const auto& iv : r.critical.sigma1_intervals) ivs.push_back(json::array({num(iv.left), num(iv.right)}));
    crit["sigma1_intervals"] = ivs;
    for (const char* name : {"sigma2", "sigma3"}) {
        const auto& set = std::string(name) == "sigma2" ? r.critical.sigma2 : r.critical.sigma3;
        json a = json::array();
        for (const auto& b : set)
            a.push_back(json{{"face", face_name(b.face)},
                             {"location", point_json(b.location, dim)},
                             {"kappa", kappa_json(b.kappa)},
                             {"grad_norm", num(b.grad_norm)}});
        crit[name] = a;
    }
    j["critical"] = crit;
    j["warnings"] = r.warnings;
    return j;
}

json large_json(const LargeDReport& r) {
    json j;
    j["verdict"] = verdict_name(r.verdict);
    j["mu1"] = num(r.mu1);
    j["algebraic"] = r.algebraic;
    j["tolerance_based"] = r.tolerance_based;
    j["value"] = r.value ? num(*r.value) : json(nullptr);
    j["method"] = r.method;
    return j;
}

void write_output(const std::string& path, const std::string& content, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << content;
        return;
    }
    const std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write " + tmp.string());
        f << content;
        f.flush();
        if (!f) throw ConfigError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw ConfigError("cannot move output into place: " + ec.message());
    }
}

// resolved settings for one command
struct Context {
    Options opt;
    std::optional<Config> cfg;
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;

    std::string format(const std::string& fallback) const {
        std::string f = opt.format;
        if (f.empty() && cfg) f = cfg->get("output", "format").value_or("");
        if (f.empty()) f = fallback;
        if (f != "csv" && f != "json") throw ConfigError("format must be csv or json");
        return f;
    }
    std::string path() const {
        if (!opt.out.empty()) return opt.out;
        if (cfg) return cfg->get("output", "path").value_or("");
        return "";
    }
    FormPolicy form() const {
        std::string f = opt.form;
        if (f.empty() && cfg) f = cfg->get("sweep", "form").value_or("");
        if (f.empty()) return FormPolicy::Auto;
        const auto p = parse_form(f);
        if (!p) throw ConfigError("form must be auto, direct, sym or both");
        return *p;
    }
    const Config& config() const {
        if (!cfg) throw ConfigError("--config is required for this command");
        return *cfg;
    }
    void emit(const std::string& s) const { write_output(path(), s, *out); }
    void emit(const json& j) const { emit(j.dump(2) + "\n"); }
};

// problem from [problem] or the mapped [stream]
ProblemSpec any_problem(const Context& c) {
    const Config& cfg = c.config();
    ProblemSpec p = cfg.has("problem") ? problem_from_config(cfg) : to_eigenproblem(stream_from_config(cfg));
    if (c.opt.D) {
        if (cfg.has("problem"))
            p = with_diffusion(p, *c.opt.D);
        else {
            StreamSpec s = stream_from_config(cfg);
            s.D = *c.opt.D;
            p = to_eigenproblem(s);
        }
    }
    return p;
}

StreamSpec stream_spec(const Context& c) {
    StreamSpec s = stream_from_config(c.config());
    if (c.opt.D) s.D = *c.opt.D;
    return s;
}

std::optional<std::size_t> grid_cells(const Context& c, const char* section) {
    if (c.opt.grid) return c.opt.grid;
    if (c.cfg) {
        if (const auto g = c.cfg->get(section, "grid")) {
            const double v = parse_number(*g, "grid");
            if (!(v >= 8.0) || v != std::floor(v)) throw ConfigError("grid must be an integer >= 8");
            return static_cast<std::size_t>(v);
        }
    }
    return std::nullopt;
}

Grid1D graded_1d(const ProblemSpec& p, const CriticalSet& cs, std::size_t n, const GridPolicy& policy) {
    const auto layers = sweep_layers(p, cs, p.D, policy);
    GradingOptions opt;
    opt.nodes_per_layer = policy.nodes_per_layer;
    try {
        return graded_grid(p.domain.x[0], p.domain.x[1], n, layers, p.kinks, opt);
    } catch (const std::invalid_argument&) {
        return graded_grid(p.domain.x[0], p.domain.x[1], n, {}, p.kinks, opt);
    }
}

Grid2D graded_2d(const ProblemSpec& p, const CriticalSet& cs, std::size_t n) {
    std::vector<Layer> lx, ly;
    if (p.alpha > 0.0) {
        const double eps = std::sqrt(p.D / p.alpha);
        for (const auto& pt : cs.sigma1_points) {
            if (eps < 0.25 * (p.domain.x[1] - p.domain.x[0])) lx.push_back({pt.location.x, eps});
            if (eps < 0.25 * (p.domain.y[1] - p.domain.y[0])) ly.push_back({pt.location.y, eps});
        }
    }
    const auto axis = [&](double a, double b, std::vector<Layer> layers) {
        try {
            return graded_grid(a, b, n, layers);
        } catch (const std::invalid_argument&) {
            return graded_grid(a, b, n, {});
        }
    };
    return Grid2D(axis(p.domain.x[0], p.domain.x[1], lx), axis(p.domain.y[0], p.domain.y[1], ly));
}

std::string sweep_csv(const SweepTable& t) {
    std::string s = "D,grid_n,lambda,residual,form\n";
    for (const auto& r : t.rows)
        s += g17(r.D) + "," + std::to_string(r.grid_n) + "," + g17(r.lambda) + "," + g17(r.residual) + "," +
             (r.error.empty() ? r.form : "error") + "\n";
    return s;
}

json sweep_json(const SweepTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) {
        json e{{"D", num(r.D)},           {"grid_n", r.grid_n},   {"lambda", num(r.lambda)},
               {"residual", num(r.residual)}, {"form", r.form},   {"levels", r.levels},
               {"converged", r.converged}};
        if (!r.error.empty()) e["error"] = r.error;
        rows.push_back(e);
    }
    return json{{"rows", rows}};
}

// ---------------------------------------------------------------------------
// commands

int cmd_eig(const Context& c) {
    const ProblemSpec p = any_problem(c);
    const GridPolicy policy = c.cfg ? policy_from_config(*c.cfg) : GridPolicy{};
    const CriticalSet cs = critical_points(p.drift, p.domain, p.kinks);
    const auto cells = grid_cells(c, c.config().has("problem") ? "problem" : "stream");
    json j;
    if (cells) {
        const EigenResult r = p.dimension() == 1 ? solve(p, graded_1d(p, cs, *cells, policy), c.form())
                                                 : solve(p, graded_2d(p, cs, *cells), c.form());
        j = {{"lambda", num(r.lambda)},
             {"residual", num(r.residual)},
             {"form", r.form.name()},
             {"grid_n", r.grid_cells},
             {"iterations", r.iterations}};
        if (r.comparison)
            j["comparison"] = {{"lambda", num(r.comparison->lambda)},
                               {"form", r.comparison->form},
                               {"discrepancy", num(r.comparison->discrepancy)}};
    } else {
        const SweepRow r = solve_converged(p, cs, policy, c.form());
        j = {{"lambda", num(r.lambda)}, {"residual", num(r.residual)}, {"form", r.form},
             {"grid_n", r.grid_n},      {"converged", r.converged},      {"levels", r.levels}};
    }
    if (c.format("json") == "csv") {
        c.emit("lambda,residual,form,grid_n\n" + g17(j["lambda"].get<double>()) + "," +
               g17(j["residual"].get<double>()) + "," + j["form"].get<std::string>() + "," +
               std::to_string(j["grid_n"].get<std::size_t>()) + "\n");
    } else {
        c.emit(j);
    }
    return kOk;
}

int cmd_sweep(const Context& c) {
    const Config& cfg = c.config();
    std::vector<double> Ds;
    if (c.opt.D)
        Ds = {*c.opt.D};
    else if (const auto d = cfg.get("sweep", "D"))
        Ds = parse_number_list(*d, "sweep D");
    else
        throw ConfigError("[sweep] D list (or --D) required");
    const GridPolicy policy = policy_from_config(cfg);
    SweepTable t;
    if (cfg.has("problem"))
        t = sweep(problem_from_config(cfg), Ds, policy, c.form());
    else
        t = stream_sweep(stream_from_config(cfg), Ds, policy, c.form());
    int code = kOk;
    for (const auto& r : t.rows) {
        if (!r.error.empty()) {
            *c.err << "row D=" << g17(r.D) << ": " << r.error << "\n";
            code = kNumerical;
        } else if (!r.converged) {
            *c.err << "row D=" << g17(r.D) << ": grid refinement did not reach the tolerance\n";
        }
    }
    if (c.format("csv") == "csv")
        c.emit(sweep_csv(t));
    else
        c.emit(sweep_json(t));
    return code;
}

int cmd_limit0(const Context& c) {
    const ProblemSpec p = any_problem(c);
    std::optional<double> tol;
    if (c.config().has("stream")) tol = 0.5 * stream_tol_q(stream_spec(c));
    const AsymptoticReport r = limit_small_D(p, tol);
    for (const auto& w : r.warnings) *c.err << "warning: " << w << "\n";
    c.emit(report_json(r, p.dimension()));
    return kOk;
}

int cmd_limitinf(const Context& c) {
    const ProblemSpec p = any_problem(c);
    c.emit(large_json(limit_large_D(p)));
    return kOk;
}

int cmd_classify_robin(const Context& c) {
    double k0 = 0.0, k1 = 0.0;
    if (c.opt.k0 && c.opt.k1) {
        k0 = *c.opt.k0;
        k1 = *c.opt.k1;
    } else if (c.cfg && c.cfg->has("problem")) {
        const ProblemSpec p = problem_from_config(*c.cfg);
        if (p.dimension() != 1) throw ConfigError("classify-robin needs a 1D problem");
        const double L = p.domain.x[1] - p.domain.x[0];
        for (const auto& bc : p.bc)
            if (bc.kind == BcKind::Dirichlet) throw ConfigError("classify-robin needs Robin or Neumann faces");
        k0 = p.face(Face::Left).coefficient * L;
        k1 = p.face(Face::Right).coefficient * L;
        if (c.opt.k0) k0 = *c.opt.k0;
        if (c.opt.k1) k1 = *c.opt.k1;
    } else {
        throw ConfigError("classify-robin needs --k0 and --k1 (or a [problem] config)");
    }
    const int sign = classify_robin_line(k0, k1);
    ProblemSpec unit;
    unit.bc = {BoundaryCondition::robin(k0), BoundaryCondition::robin(k1)};
    const double mu1 = mu1_numeric(unit);
    json j{{"k0", num(k0)},
           {"k1", num(k1)},
           {"g", num(k0 + k1 + k0 * k1)},
           {"sign", sign},
           {"verdict", sign > 0 ? "+inf" : sign < 0 ? "-inf" : "finite"},
           {"mu1_numeric", num(mu1)}};
    if (sign == 0) {
        const LinePhi0 phi = robin_line_phi0(k0, k1);
        j["phi0"] = {{"a", num(phi.a)}, {"b", num(phi.b)}};
    }
    c.emit(j);
    return kOk;
}

SweepTable read_sweep_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "D,grid_n,lambda,residual,form") throw ConfigError(path + ": not a sweep table");
    SweepTable t;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 5) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 5 fields");
        SweepRow r;
        r.D = parse_number(f[0], "D");
        r.grid_n = static_cast<std::size_t>(parse_number(f[1], "grid_n"));
        r.lambda = parse_number(f[2], "lambda");
        r.residual = parse_number(f[3], "residual");
        r.form = f[4];
        if (r.form == "error") r.error = "failed row";
        t.rows.push_back(r);
    }
    return t;
}

int cmd_rate_fit(const Context& c) {
    RateModel model;
    if (c.opt.model == "powerlaw")
        model = RateModel::PowerLaw;
    else if (c.opt.model == "expinverse")
        model = RateModel::ExpInverse;
    else
        throw ConfigError("--model must be powerlaw or expinverse");
    const SweepTable t = read_sweep_csv(c.opt.table);
    const RateFit f = fit_rate(t, model);
    for (const auto& d : f.diagnostics) *c.err << d << "\n";
    c.emit(json{{"model", c.opt.model},
                {"slope", num(f.slope)},
                {"intercept", num(f.intercept)},
                {"r2", num(f.r2)},
                {"points", f.points},
                {"diagnostics", f.diagnostics}});
    return kOk;
}

Grid1D stream_grid(const Context& c, const StreamSpec& s) {
    const ProblemSpec p = to_eigenproblem(s);
    const CriticalSet cs = critical_points(p.drift, p.domain, p.kinks, 0.5 * stream_tol_q(s));
    return graded_1d(p, cs, grid_cells(c, "stream").value_or(1024), GridPolicy{});
}

int cmd_stream_sim(const Context& c) {
    const StreamSpec s = stream_spec(c);
    const Config& cfg = c.config();
    const Grid1D g = stream_grid(c, s);
    const double T = cfg.get("stream", "T") ? parse_number(*cfg.get("stream", "T"), "T") : 50.0;
    const Expr u0e = cfg.get("stream", "u0") ? parse(*cfg.get("stream", "u0")) : Expr(0.01);
    std::vector<double> u0(g.size());
    double u0max = 0.0, rmax = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        u0[i] = evaluate(u0e, g[i]);
        u0max = std::max(u0max, u0[i]);
        rmax = std::max(rmax, evaluate(s.r, g[i]));
    }
    const double dt = cfg.get("stream", "dt") ? parse_number(*cfg.get("stream", "dt"), "dt")
                                              : std::min(0.01, 0.5 / (rmax + u0max));
    const Trajectory tr = simulate(s, g, u0, T, dt);
    if (c.format("csv") == "csv") {
        std::ostringstream os;
        write_trajectory_csv(os, tr);
        c.emit(os.str());
    } else {
        c.emit(json{{"T", num(T)},
                    {"dt", num(dt)},
                    {"grid_n", g.cells()},
                    {"snapshots", tr.times.size()},
                    {"final_max", num(tr.final_max)},
                    {"final_min", num(tr.final_min)},
                    {"observed", tr.observed ? json(fate_name(*tr.observed)) : json(nullptr)}});
    }
    return kOk;
}

json buffers_json(const BufferPattern& bp) {
    json a = json::array();
    for (const auto& b : bp.buffers) a.push_back(json::array({num(b.left), num(b.right)}));
    return a;
}

int cmd_stream_classify(const Context& c) {
    const StreamSpec s = stream_spec(c);
    const Grid1D g = stream_grid(c, s);
    const PersistenceReport r = classify_persistence(s, g, c.form());
    const BufferPattern bp = detect_buffers(s);
    c.emit(json{{"lambda", num(r.lambda)},
                {"fate", fate_name(r.fate)},
                {"borderline", r.borderline},
                {"form", r.eigen.form.name()},
                {"grid_n", g.cells()},
                {"downstream", downstream_name(s.downstream)},
                {"pattern", buffer_case_name(bp.kind)},
                {"buffers", buffers_json(bp)}});
    return kOk;
}

int cmd_stream_limits(const Context& c) {
    const StreamSpec s = stream_spec(c);
    const StreamLimits L = small_D_limits(s);
    json rows = json::array();
    for (const auto& r : L.rows)
        rows.push_back(json{{"downstream", downstream_name(r.downstream)},
                            {"small_D", num(r.closed_form)},
                            {"small_D_general", num(r.report.limit)},
                            {"theorem", r.report.theorem},
                            {"large_D", num(r.large_D)},
                            {"large_D_verdict", verdict_name(r.large_report.verdict)}});
    c.emit(json{{"pattern", buffer_case_name(L.pattern.kind)}, {"buffers", buffers_json(L.pattern)}, {"rows", rows}});
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"eigendrift: principal eigenvalues of drift-diffusion operators and their limits"};
    app.require_subcommand(1);
    Options opt;

    const auto common = [&](CLI::App* sub, bool needs_config) {
        auto* cfg = sub->add_option("--config", opt.config, "INI configuration file");
        if (needs_config) cfg->required();
        sub->add_option("--D", opt.D, "diffusion override");
        sub->add_option("--grid", opt.grid, "cells per axis");
        sub->add_option("--out", opt.out, "output file (written atomically; default stdout)");
        sub->add_option("--form", opt.form, "auto|direct|sym|both");
        sub->add_option("--format", opt.format, "csv|json");
    };
    struct Command {
        const char* name;
        const char* help;
        int (*fn)(const Context&);
        bool needs_config;
    };
    const Command commands[] = {
        {"eig", "principal eigenvalue at one D", cmd_eig, true},
        {"sweep", "principal eigenvalue over a list of D", cmd_sweep, true},
        {"limit0", "closed-form limit as D -> 0", cmd_limit0, true},
        {"limitinf", "limit as D -> infinity", cmd_limitinf, true},
        {"classify-robin", "sign of mu1 for constant Robin data on a line", cmd_classify_robin, false},
        {"rate-fit", "fit a rate to a sweep CSV", cmd_rate_fit, false},
        {"stream-sim", "simulate the stream population model", cmd_stream_sim, true},
        {"stream-classify", "persistence or extinction from the sign of lambda", cmd_stream_classify, true},
        {"stream-limits", "buffer-zone limit table for all downstream types", cmd_stream_limits, true},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& cmd : commands) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        common(sub, cmd.needs_config);
        if (std::string(cmd.name) == "classify-robin") {
            sub->add_option("--k0", opt.k0, "Robin coefficient at x=0");
            sub->add_option("--k1", opt.k1, "Robin coefficient at x=1");
        }
        if (std::string(cmd.name) == "rate-fit") {
            sub->add_option("table", opt.table, "sweep CSV")->required();
            sub->add_option("--model", opt.model, "powerlaw|expinverse");
        }
        subs.emplace_back(sub, &cmd);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        Context ctx;
        ctx.opt = opt;
        ctx.out = &out;
        ctx.err = &err;
        if (!opt.config.empty()) ctx.cfg = load_config(opt.config);
        for (const auto& [sub, cmd] : subs)
            if (sub->parsed()) return cmd->fn(ctx);
        return kUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const CrossCheckError& e) {
        err << "cross-check failed: " << e.what() << "\n";
        return kCrossCheck;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    }
}

}  // namespace eigendrift::cli
