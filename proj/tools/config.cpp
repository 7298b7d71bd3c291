#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace eigendrift::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

const char* const kFaces[] = {"left", "right", "bottom", "top"};

const std::set<std::string>& allowed_keys(const std::string& section) {
    static const std::map<std::string, std::set<std::string>> keys = [] {
        std::map<std::string, std::set<std::string>> k;
        k["problem"] = {"dimension", "x", "y", "D", "alpha", "m", "mx", "V", "kinks", "grid"};
        for (const char* f : kFaces)
            for (const char* suffix : {"", ".k", ".beta", ".c", ".scaling"})
                k["problem"].insert(std::string(f) + suffix);
        k["stream"] = {"D", "q", "r", "downstream", "grid", "T", "dt", "u0"};
        k["sweep"] = {"D",       "base_cells", "nodes_per_layer", "max_levels",   "max_cells_2d",
                      "rel_tol", "abs_tol",    "inflow_layers",   "form"};
        k["output"] = {"format", "path"};
        return k;
    }();
    static const std::set<std::string> none;
    const auto it = keys.find(section);
    return it == keys.end() ? none : it->second;
}

Expr parse_expr(const std::string& text, const std::string& what) {
    try {
        return parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

std::size_t parse_count(const std::string& text, const std::string& what) {
    const double v = parse_number(text, what);
    if (!(v >= 1.0) || v != std::floor(v) || v > 1e9) throw ConfigError(what + " must be a positive integer");
    return static_cast<std::size_t>(v);
}

}  // namespace

std::optional<std::string> Config::get(const std::string& section, const std::string& key) const {
    const auto s = sections.find(section);
    if (s == sections.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
}

Config parse_config(std::istream& in, const std::string& name) {
    Config c;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto where = name + ":" + std::to_string(lineno) + ": ";
        const auto cut = line.find_first_of("#;");
        if (cut != std::string::npos) line.erase(cut);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (allowed_keys(section).empty()) throw ConfigError(where + "unknown section [" + section + "]");
            if (c.has(section)) throw ConfigError(where + "duplicate section [" + section + "]");
            c.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside of a section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!allowed_keys(section).count(key)) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
        if (value.empty()) throw ConfigError(where + "empty value for '" + key + "'");
        if (c.sections[section].count(key)) throw ConfigError(where + "duplicate key '" + key + "'");
        c.sections[section][key] = value;
    }
    if (c.has("problem") == c.has("stream"))
        throw ConfigError(name + ": exactly one of [problem] or [stream] is required");
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    return parse_config(in, path);
}

double parse_number(const std::string& text, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ConfigError(what + ": not a number: '" + text + "'");
    }
    if (trim(text.substr(used)) != "") throw ConfigError(what + ": trailing characters in '" + text + "'");
    return v;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream is(s);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(parse_number(tok, what));
    return out;
}

std::optional<FormPolicy> parse_form(const std::string& s) {
    const std::string l = lower(s);
    if (l == "auto") return FormPolicy::Auto;
    if (l == "direct") return FormPolicy::Direct;
    if (l == "sym" || l == "symmetrized") return FormPolicy::Symmetrized;
    if (l == "both") return FormPolicy::Both;
    return std::nullopt;
}

ProblemSpec problem_from_config(const Config& c) {
    if (!c.has("problem")) throw ConfigError("[problem] section required");
    const auto get = [&](const std::string& k) { return c.get("problem", k); };
    ProblemSpec p;
    p.domain.dimension = get("dimension") ? static_cast<int>(parse_count(*get("dimension"), "dimension")) : 1;
    if (p.domain.dimension != 1 && p.domain.dimension != 2) throw ConfigError("dimension must be 1 or 2");
    const bool two_d = p.domain.dimension == 2;
    for (const char* axis : {"x", "y"}) {
        if (!get(axis)) continue;
        if (!two_d && std::string(axis) == "y") throw ConfigError("y interval given for a 1D problem");
        const auto v = parse_number_list(*get(axis), axis);
        if (v.size() != 2) throw ConfigError(std::string(axis) + " must list two endpoints");
        (std::string(axis) == "x" ? p.domain.x : p.domain.y) = {v[0], v[1]};
    }
    p.D = get("D") ? parse_number(*get("D"), "D") : 1.0;
    p.alpha = get("alpha") ? parse_number(*get("alpha"), "alpha") : 1.0;
    p.V = get("V") ? parse_expr(*get("V"), "V") : Expr(0.0);

    if (get("m") && get("mx")) throw ConfigError("give either m or mx, not both");
    Expr kink_source;
    if (get("mx")) {
        if (two_d) throw ConfigError("mx is 1D only; use m");
        kink_source = parse_expr(*get("mx"), "mx");
        p.drift = Drift::from_gradient(kink_source, p.domain.x[0], p.domain.x[1]);
    } else {
        kink_source = get("m") ? parse_expr(*get("m"), "m") : Expr(0.0);
        p.drift = Drift::from_potential(kink_source, p.domain.dimension);
    }
    const std::string kinks = get("kinks") ? lower(*get("kinks")) : "auto";
    if (kinks == "auto") {
        if (!two_d) p.kinks = abs_kinks(kink_source, p.domain.x[0], p.domain.x[1]);
    } else if (kinks != "none") {
        if (two_d) throw ConfigError("kinks are 1D only");
        p.kinks = parse_number_list(kinks, "kinks");
    }

    p.bc.assign(p.face_count(), BoundaryCondition::neumann());
    for (std::size_t f = 0; f < 4; ++f) {
        const std::string face = kFaces[f];
        const auto kind = get(face);
        const bool any = kind || get(face + ".k") || get(face + ".beta") || get(face + ".c") || get(face + ".scaling");
        if (f >= p.face_count()) {
            if (any) throw ConfigError(face + " face given for a 1D problem");
            continue;
        }
        const std::string k = kind ? lower(*kind) : "neumann";
        if (k == "dirichlet") {
            p.bc[f] = BoundaryCondition::dirichlet();
        } else if (k == "neumann") {
            p.bc[f] = BoundaryCondition::neumann();
        } else if (k == "robin") {
            if (get(face + ".c")) {
                if (get(face + ".k") || get(face + ".beta"))
                    throw ConfigError(face + ": give either c or k/beta");
                p.bc[f] = BoundaryCondition::robin(parse_number(*get(face + ".c"), face + ".c"));
            } else {
                if (!get(face + ".k")) throw ConfigError(face + ": robin needs k (or c)");
                const double kk = parse_number(*get(face + ".k"), face + ".k");
                const Expr beta = get(face + ".beta") ? parse_expr(*get(face + ".beta"), face + ".beta") : Expr(1.0);
                const std::string sc = get(face + ".scaling") ? lower(*get(face + ".scaling")) : "fixed";
                if (sc != "fixed" && sc != "inverse-d") throw ConfigError(face + ".scaling must be fixed or inverse-d");
                try {
                    p.bc[f] = BoundaryCondition::robin(kk, beta, p.face_point(static_cast<Face>(f)),
                                                       sc == "fixed" ? RobinScaling::Fixed : RobinScaling::InverseD);
                } catch (const DomainError& e) {
                    throw ConfigError(face + ".beta: " + e.what());
                }
            }
        } else {
            throw ConfigError(face + " must be dirichlet, neumann or robin");
        }
        if (k != "robin" && (get(face + ".k") || get(face + ".beta") || get(face + ".c") || get(face + ".scaling")))
            throw ConfigError(face + ": Robin data given for a " + k + " face");
    }
    return p;
}

StreamSpec stream_from_config(const Config& c) {
    if (!c.has("stream")) throw ConfigError("[stream] section required");
    const auto get = [&](const std::string& k) { return c.get("stream", k); };
    StreamSpec s;
    s.D = get("D") ? parse_number(*get("D"), "D") : 1.0;
    if (!get("q")) throw ConfigError("[stream] needs q");
    if (!get("r")) throw ConfigError("[stream] needs r");
    s.q = parse_expr(*get("q"), "q");
    s.r = parse_expr(*get("r"), "r");
    if (get("downstream")) {
        const auto d = parse_downstream(*get("downstream"));
        if (!d) throw ConfigError("downstream must be NF, FF or H");
        s.downstream = *d;
    }
    return s;
}

GridPolicy policy_from_config(const Config& c) {
    GridPolicy p;
    const auto get = [&](const std::string& k) { return c.get("sweep", k); };
    if (get("base_cells")) p.base_cells = parse_count(*get("base_cells"), "base_cells");
    if (get("nodes_per_layer")) p.nodes_per_layer = parse_count(*get("nodes_per_layer"), "nodes_per_layer");
    if (get("max_levels")) p.max_levels = parse_count(*get("max_levels"), "max_levels");
    if (get("max_cells_2d")) p.max_cells_2d = parse_count(*get("max_cells_2d"), "max_cells_2d");
    if (get("rel_tol")) p.rel_tol = parse_number(*get("rel_tol"), "rel_tol");
    if (get("abs_tol")) p.abs_tol = parse_number(*get("abs_tol"), "abs_tol");
    if (get("inflow_layers")) {
        const std::string v = lower(*get("inflow_layers"));
        if (v != "true" && v != "false") throw ConfigError("inflow_layers must be true or false");
        p.inflow_layers = v == "true";
    }
    return p;
}

}  // namespace eigendrift::cli
