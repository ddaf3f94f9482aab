#pragma once

// Scenario configuration: INI-style sections of key = value pairs, parsed
// into one Scenario struct shared by every command.  Missing keys name the
// full section.key path; densities come from a small catalog — gaussian,
// two-gaussian mixture, or a CSV table on the scenario grid.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "casb/common.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"
#include "casb/io.hpp"
#include "casb/manufactured.hpp"
#include "casb/verifier.hpp"

namespace casb {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace detail

// Raw parsed file: section -> key -> value, all strings.  Tracks which keys
// were consumed so unknown entries can be flagged as likely typos.
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse_text(const std::string& text, const std::string& origin) {
        ConfigFile cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineno) +
                                      ": unterminated section header");
                section = detail::trim(t.substr(1, t.size() - 2));
                if (section.empty())
                    throw ConfigError(origin + ":" + std::to_string(lineno) +
                                      ": empty section name");
                continue;
            }
            const std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": expected key = value");
            const std::string key = detail::trim(t.substr(0, eq));
            const std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[section][key] = value;
        }
        return cfg;
    }

    static ConfigFile parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config: " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_text(ss.str(), path.string());
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = values_.find(section);
        return s != values_.end() && s->second.count(key) > 0;
    }

    std::string get(const std::string& section, const std::string& key) const {
        auto s = values_.find(section);
        if (s == values_.end() || !s->second.count(key))
            throw ConfigError(origin_ + ": missing key " + section + "." + key);
        consumed_.insert(section + "." + key);
        return s->second.at(key);
    }

    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const {
        return has(section, key) ? get(section, key) : fallback;
    }

    double get_double(const std::string& section, const std::string& key) const {
        const std::string v = get(section, key);
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key " + section + "." + key +
                              " is not a number: '" + v + "'");
        }
    }

    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const {
        return has(section, key) ? get_double(section, key) : fallback;
    }

    std::size_t get_size(const std::string& section, const std::string& key) const {
        const double d = get_double(section, key);
        if (d < 0.0 || d != std::floor(d))
            throw ConfigError(origin_ + ": key " + section + "." + key +
                              " must be a nonnegative integer");
        return static_cast<std::size_t>(d);
    }

    std::size_t get_size_or(const std::string& section, const std::string& key,
                            std::size_t fallback) const {
        return has(section, key) ? get_size(section, key) : fallback;
    }

    const std::string& origin() const { return origin_; }

    // Every (section, key) present in the file, for unknown-key reporting.
    std::vector<std::string> unconsumed() const {
        std::vector<std::string> out;
        for (const auto& [sec, kv] : values_)
            for (const auto& [key, value] : kv)
                if (!consumed_.count(sec + "." + key)) out.push_back(sec + "." + key);
        return out;
    }

    Json to_json() const {
        Json j;
        for (const auto& [sec, kv] : values_)
            for (const auto& [key, value] : kv) j[sec][key] = value;
        return j;
    }

private:
    std::string origin_ = "<text>";
    std::map<std::string, std::map<std::string, std::string>> values_;
    mutable std::set<std::string> consumed_;
};

// One endpoint density from the catalog:
//   gaussian(mean, var)                    — per-axis mean repeated in 2D
//   mixture(w1, m1, v1, w2, m2, v2)        — two gaussians, weights renormalized
//   csv(path)                              — table on the scenario grid
inline ScalarField parse_density(const std::string& expr, const Grid& g,
                                 const std::filesystem::path& base_dir,
                                 const std::string& where) {
    const std::string t = detail::trim(expr);
    const std::size_t open = t.find('(');
    if (open == std::string::npos || t.back() != ')')
        throw ConfigError(where + ": density must be catalog(args), got '" + t + "'");
    const std::string kind = detail::trim(t.substr(0, open));
    const std::string inner = t.substr(open + 1, t.size() - open - 2);
    std::vector<std::string> args;
    std::stringstream ss(inner);
    std::string cell;
    while (std::getline(ss, cell, ',')) args.push_back(detail::trim(cell));

    auto num = [&](std::size_t i) {
        try {
            return std::stod(args.at(i));
        } catch (const std::exception&) {
            throw ConfigError(where + ": bad density argument '" + args.at(i) + "'");
        }
    };
    auto gauss = [&](double mean, double var) {
        if (var <= 0.0) throw ConfigError(where + ": gaussian variance must be > 0");
        return ScalarField::sample(g, [&](double x, double y) {
            double e = (x - mean) * (x - mean);
            if (g.dim() == 2) e += (y - mean) * (y - mean);
            return std::exp(-e / (2.0 * var));
        });
    };

    if (kind == "gaussian") {
        if (args.size() != 2)
            throw ConfigError(where + ": gaussian needs (mean, var)");
        return normalize_density(gauss(num(0), num(1)));
    }
    if (kind == "mixture") {
        if (args.size() != 6)
            throw ConfigError(where + ": mixture needs (w1, m1, v1, w2, m2, v2)");
        const double w1 = num(0), w2 = num(3);
        if (w1 < 0.0 || w2 < 0.0 || w1 + w2 <= 0.0)
            throw ConfigError(where + ": mixture weights must be nonnegative");
        const ScalarField a = gauss(num(1), num(2));
        const ScalarField b = gauss(num(4), num(5));
        const double ia = integrate(a), ib = integrate(b);
        ScalarField out(g);
        for (std::size_t k = 0; k < g.size(); ++k)
            out[k] = w1 * a[k] / ia + w2 * b[k] / ib;
        return normalize_density(out);
    }
    if (kind == "csv") {
        if (args.size() != 1) throw ConfigError(where + ": csv needs (path)");
        std::filesystem::path p(args[0]);
        if (p.is_relative()) p = base_dir / p;
        return normalize_density(read_scalar_csv(p, g, "rho"));
    }
    throw ConfigError(where + ": unknown density kind '" + kind +
                      "' (catalog: gaussian, mixture, csv)");
}

// Fully parsed scenario shared by the commands.  Sections and keys:
//   [grid]    lower, upper, nodes            (+ lower_y, upper_y, nodes_y in 2D)
//   [time]    t0, t1, steps
//   [problem] eps, lambda, rho0, rho1
//   [solver]  tol, max_iters                 (optional, defaulted)
//   [manufactured] case, nodes, steps        (for the manufactured command)
//   [refine]  pipeline, levels, dim, seed    (for the refine command)
//   [ensemble] particles, seed               (optional, defaulted)
//   [output]  dir
struct Scenario {
    Grid grid;
    TimeGrid time;
    double eps = 1.0;
    double lambda = 1.0;
    ScalarField rho0;
    ScalarField rho1;
    SolveOptions solve;
    CaseTag manufactured_case = CaseTag::kStateDependentSigma;
    std::size_t manufactured_nodes = 256;
    std::size_t manufactured_steps = 100;
    RefinePipeline refine_pipeline = RefinePipeline::kBridgeWave;
    RefineOptions refine;
    std::size_t particles = 100000;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir;
    Json config_echo;
};

// Sections outside `need` are optional; missing keys inside a needed section
// throw with the section.key name.  `need` lists: "bridge" (grid/time/problem),
// "manufactured", "refine".
inline Scenario load_scenario(const ConfigFile& cfg,
                              const std::vector<std::string>& need,
                              const std::filesystem::path& base_dir) {
    auto needed = [&](const char* tag) {
        return std::find(need.begin(), need.end(), tag) != need.end();
    };
    Scenario sc;
    sc.config_echo = cfg.to_json();

    if (needed("bridge")) {
        const bool two_d = cfg.has("grid", "nodes_y");
        if (two_d)
            sc.grid = Grid({cfg.get_double("grid", "lower"),
                            cfg.get_double("grid", "lower_y")},
                           {cfg.get_double("grid", "upper"),
                            cfg.get_double("grid", "upper_y")},
                           {cfg.get_size("grid", "nodes"),
                            cfg.get_size("grid", "nodes_y")});
        else
            sc.grid = Grid(cfg.get_double("grid", "lower"),
                           cfg.get_double("grid", "upper"),
                           cfg.get_size("grid", "nodes"));
        sc.time = TimeGrid(cfg.get_double("time", "t0"), cfg.get_double("time", "t1"),
                           cfg.get_size("time", "steps"));
        sc.eps = cfg.get_double("problem", "eps");
        if (sc.eps <= 0.0) throw ConfigError("problem.eps must be > 0");
        sc.lambda = cfg.get_double_or("problem", "lambda", 1.0);
        sc.rho0 = parse_density(cfg.get("problem", "rho0"), sc.grid, base_dir,
                                "problem.rho0");
        sc.rho1 = parse_density(cfg.get("problem", "rho1"), sc.grid, base_dir,
                                "problem.rho1");
        sc.solve.tol = cfg.get_double_or("solver", "tol", sc.solve.tol);
        sc.solve.max_iters = cfg.get_size_or("solver", "max_iters", sc.solve.max_iters);
        if (sc.solve.tol <= 0.0) throw ConfigError("solver.tol must be > 0");
    }

    if (needed("manufactured")) {
        sc.manufactured_case = case_tag_from_string(cfg.get("manufactured", "case"));
        sc.manufactured_nodes = cfg.get_size_or("manufactured", "nodes", 256);
        sc.manufactured_steps = cfg.get_size_or("manufactured", "steps", 100);
        sc.lambda = cfg.get_double_or("problem", "lambda", sc.lambda);
    }

    if (needed("refine")) {
        sc.refine_pipeline = refine_pipeline_from_string(cfg.get("refine", "pipeline"));
        sc.refine.levels = cfg.get_size_or("refine", "levels", sc.refine.levels);
        sc.refine.base_n = cfg.get_size_or("refine", "base_n", sc.refine.base_n);
        sc.refine.base_m = cfg.get_size_or("refine", "base_m", sc.refine.base_m);
        sc.refine.dim = static_cast<int>(cfg.get_size_or(
            "refine", "dim", static_cast<std::size_t>(sc.refine.dim)));
        sc.refine.seed =
            cfg.get_size_or("refine", "seed", static_cast<std::size_t>(sc.refine.seed));
    }

    sc.particles = cfg.get_size_or("ensemble", "particles", sc.particles);
    sc.seed = cfg.get_size_or("ensemble", "seed", static_cast<std::size_t>(sc.seed));
    if (cfg.has("output", "dir")) {
        std::filesystem::path p(cfg.get("output", "dir"));
        sc.output_dir = p.is_relative() ? base_dir / p : p;
    }
    return sc;
}

}  // namespace casb
