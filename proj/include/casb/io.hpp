#pragma once

// Persistence: CSV tables for fields (header row, coordinates first, values
// printed with 17 significant digits), bridge-solution directories with one
// CSV per slice per field plus a JSON manifest, residual-report JSON in the
// schema {check, grid:{n,h,M,dt}, l2, linf, scale, slope?, pass}, and the
// fixed-width trajectory dump.  Readers validate coordinates against the
// manifest grid so a truncated or foreign file fails loudly.

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "casb/common.hpp"
#include "casb/ensemble.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"
#include "casb/madelung.hpp"
#include "casb/sb_solver.hpp"
#include "casb/verifier.hpp"

namespace casb {

inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::json;

namespace detail {

inline std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open for reading: " + path.string());
    return in;
}

inline std::vector<double> split_row(const std::string& line,
                                     const std::filesystem::path& path) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        // strtod instead of stod: density tails can round-trip through the
        // subnormal range, where stod throws on the underflow it reports.
        errno = 0;
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        const bool consumed = end != cell.c_str() && *end == '\0';
        const bool overflow = errno == ERANGE && std::fabs(v) == HUGE_VAL;
        if (!consumed || overflow)
            throw ConfigError("bad numeric cell '" + cell + "' in " + path.string());
        row.push_back(v);
    }
    return row;
}

// Shared table writer: coordinate columns then one column per value field.
inline void write_table(const std::filesystem::path& path, const Grid& g,
                        const std::vector<std::pair<std::string, const ScalarField*>>& cols) {
    std::ofstream out = open_out(path);
    out << (g.dim() == 1 ? "x" : "x,y");
    for (const auto& c : cols) out << ',' << c.first;
    out << '\n';
    for (std::size_t k = 0; k < g.size(); ++k) {
        out << fmt17(g.node_coord(k, 0));
        if (g.dim() == 2) out << ',' << fmt17(g.node_coord(k, 1));
        for (const auto& c : cols) out << ',' << fmt17((*c.second)[k]);
        out << '\n';
    }
    if (!out) throw ConfigError("write failed: " + path.string());
}

// Shared table reader; checks the header and node coordinates, returns one
// ScalarField per requested value column.
inline std::vector<ScalarField> read_table(const std::filesystem::path& path,
                                           const Grid& g,
                                           const std::vector<std::string>& names) {
    std::ifstream in = open_in(path);
    std::string header;
    if (!std::getline(in, header))
        throw ConfigError("empty table: " + path.string());
    std::string want = g.dim() == 1 ? "x" : "x,y";
    for (const auto& n : names) want += ',' + n;
    if (header != want)
        throw ConfigError("unexpected header in " + path.string() + ": got '" +
                          header + "', want '" + want + "'");
    const std::size_t coords = static_cast<std::size_t>(g.dim());
    std::vector<ScalarField> fields(names.size(), ScalarField(g));
    std::string line;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!std::getline(in, line))
            throw ConfigError("table truncated at row " + std::to_string(k) + ": " +
                              path.string());
        const std::vector<double> row = split_row(line, path);
        if (row.size() != coords + names.size())
            throw ConfigError("row " + std::to_string(k) + " has " +
                              std::to_string(row.size()) + " cells, want " +
                              std::to_string(coords + names.size()) + ": " +
                              path.string());
        for (std::size_t a = 0; a < coords; ++a)
            if (std::fabs(row[a] - g.node_coord(k, static_cast<int>(a))) >
                1e-9 * std::max(1.0, std::fabs(g.node_coord(k, static_cast<int>(a)))))
                throw ConfigError("row " + std::to_string(k) +
                                  " coordinate mismatch in " + path.string());
        for (std::size_t c = 0; c < names.size(); ++c)
            fields[c][k] = row[coords + c];
    }
    return fields;
}

inline std::string slice_name(const std::string& stem, std::size_t j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04zu.csv", stem.c_str(), j);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Field CSV
// ---------------------------------------------------------------------------

inline void write_scalar_csv(const std::filesystem::path& path, const ScalarField& f,
                             const std::string& name = "value") {
    detail::write_table(path, f.grid(), {{name, &f}});
}

inline ScalarField read_scalar_csv(const std::filesystem::path& path, const Grid& g,
                                   const std::string& name = "value") {
    return detail::read_table(path, g, {name})[0];
}

// Complex-valued table, e.g. wave slices (psi_re, psi_im) or potential slices
// (V_re, V_im); `stem` picks the column prefix.
inline void write_complex_csv(const std::filesystem::path& path, const ComplexField& f,
                              const std::string& stem) {
    const ScalarField& re = f.re();
    const ScalarField& im = f.im();
    detail::write_table(path, f.grid(), {{stem + "_re", &re}, {stem + "_im", &im}});
}

inline ComplexField read_complex_csv(const std::filesystem::path& path, const Grid& g,
                                     const std::string& stem) {
    std::vector<ScalarField> cols =
        detail::read_table(path, g, {stem + "_re", stem + "_im"});
    return ComplexField(std::move(cols[0]), std::move(cols[1]));
}

// ---------------------------------------------------------------------------
// Grid / time grid / report JSON
// ---------------------------------------------------------------------------

inline Json grid_to_json(const Grid& g) {
    Json j;
    j["dim"] = g.dim();
    for (int a = 0; a < g.dim(); ++a) {
        j["lower"].push_back(g.lower(a));
        j["upper"].push_back(g.upper(a));
        j["extent"].push_back(g.extent(a));
    }
    return j;
}

inline Grid grid_from_json(const Json& j) {
    const int dim = j.at("dim").get<int>();
    if (dim == 1)
        return Grid(j.at("lower").at(0).get<double>(), j.at("upper").at(0).get<double>(),
                    j.at("extent").at(0).get<std::size_t>());
    if (dim == 2)
        return Grid({j.at("lower").at(0).get<double>(), j.at("lower").at(1).get<double>()},
                    {j.at("upper").at(0).get<double>(), j.at("upper").at(1).get<double>()},
                    {j.at("extent").at(0).get<std::size_t>(),
                     j.at("extent").at(1).get<std::size_t>()});
    throw ConfigError("manifest grid dim must be 1 or 2");
}

inline Json time_to_json(const TimeGrid& tg) {
    return Json{{"t0", tg.t0()}, {"t1", tg.t1()}, {"steps", tg.steps()}};
}

inline TimeGrid time_from_json(const Json& j) {
    return TimeGrid(j.at("t0").get<double>(), j.at("t1").get<double>(),
                    j.at("steps").get<std::size_t>());
}

// Schema: {check, grid:{n,h,M,dt}, l2, linf, scale, slope?, pass}.  The slope
// key is present only when the study defined one.
inline Json report_to_json(const ResidualReport& rep) {
    Json j;
    j["check"] = rep.check;
    j["grid"] = Json{{"n", rep.n}, {"h", rep.h}, {"M", rep.m}, {"dt", rep.dt}};
    j["l2"] = rep.l2;
    j["linf"] = rep.linf;
    j["scale"] = rep.scale;
    if (rep.slope_defined) j["slope"] = rep.slope;
    j["pass"] = rep.pass;
    return j;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
    std::ofstream out = detail::open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw ConfigError("write failed: " + path.string());
}

inline Json read_json(const std::filesystem::path& path) {
    std::ifstream in = detail::open_in(path);
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ConfigError("bad JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

// ---------------------------------------------------------------------------
// Bridge-solution directory: rho/S/R CSV per slice + manifest.json carrying
// grid, clock, eps, lambda, the gauge point, and the iteration log.  `extra`
// entries (configuration echo, seeds) are merged into the manifest so a rerun
// can reproduce the run bit for bit.
// ---------------------------------------------------------------------------

inline void write_solution(const std::filesystem::path& dir, const BridgeSolution& sol,
                           double lambda = 1.0, const Json& extra = Json::object()) {
    std::filesystem::create_directories(dir);
    const std::size_t slices = sol.time.slices();
    for (std::size_t j = 0; j < slices; ++j) {
        write_scalar_csv(dir / detail::slice_name("rho", j), sol.rho.slice(j), "rho");
        write_scalar_csv(dir / detail::slice_name("S", j), sol.S.slice(j), "S");
        write_scalar_csv(dir / detail::slice_name("R", j), sol.R.slice(j), "R");
    }
    Json manifest;
    manifest["format"] = "casb-solution";
    manifest["tool_version"] = kToolVersion;
    manifest["grid"] = grid_to_json(sol.grid);
    manifest["time"] = time_to_json(sol.time);
    manifest["eps"] = sol.eps;
    manifest["lambda"] = lambda;
    const std::size_t center = sol.grid.dim() == 1
                                   ? sol.grid.index(sol.grid.extent(0) / 2)
                                   : sol.grid.index(sol.grid.extent(0) / 2,
                                                    sol.grid.extent(1) / 2);
    manifest["gauge"] = Json{{"node", center},
                             {"x", sol.grid.node_coord(center, 0)},
                             {"statement", "S(t0, node) = 0"}};
    for (const IterationRecord& rec : sol.iterations)
        manifest["iterations"].push_back(Json{{"iteration", rec.iteration},
                                              {"err_initial", rec.err_initial},
                                              {"err_terminal", rec.err_terminal},
                                              {"floored_nodes", rec.floored_nodes}});
    manifest["fields"] = Json::array({"rho", "S", "R"});
    for (const auto& [key, value] : extra.items()) manifest[key] = value;
    write_json(dir / "manifest.json", manifest);
}

inline BridgeSolution read_solution(const std::filesystem::path& dir,
                                    double* lambda_out = nullptr,
                                    Json* manifest_out = nullptr) {
    const Json manifest = read_json(dir / "manifest.json");
    if (manifest.value("format", "") != "casb-solution")
        throw ConfigError("not a solution directory (bad manifest format): " +
                          dir.string());
    const Grid g = grid_from_json(manifest.at("grid"));
    const TimeGrid tg = time_from_json(manifest.at("time"));
    BridgeSolution sol{g, tg, manifest.at("eps").get<double>(),
                       TimeSeries<ScalarField>(), TimeSeries<ScalarField>(),
                       TimeSeries<ScalarField>(), {}};
    std::vector<ScalarField> rho, S, R;
    for (std::size_t j = 0; j < tg.slices(); ++j) {
        rho.push_back(read_scalar_csv(dir / detail::slice_name("rho", j), g, "rho"));
        S.push_back(read_scalar_csv(dir / detail::slice_name("S", j), g, "S"));
        R.push_back(read_scalar_csv(dir / detail::slice_name("R", j), g, "R"));
    }
    sol.rho = TimeSeries<ScalarField>(tg, std::move(rho));
    sol.S = TimeSeries<ScalarField>(tg, std::move(S));
    sol.R = TimeSeries<ScalarField>(tg, std::move(R));
    if (manifest.contains("iterations"))
        for (const Json& rec : manifest.at("iterations"))
            sol.iterations.push_back(
                IterationRecord{rec.at("iteration").get<int>(),
                                rec.at("err_initial").get<double>(),
                                rec.at("err_terminal").get<double>(),
                                rec.value("floored_nodes", 0l)});
    if (lambda_out) *lambda_out = manifest.value("lambda", 1.0);
    if (manifest_out) *manifest_out = manifest;
    return sol;
}

// ---------------------------------------------------------------------------
// Histogram CSV and the trajectory dump
// ---------------------------------------------------------------------------

inline void write_histogram_csv(const std::filesystem::path& path,
                                const ScalarField& hist) {
    detail::write_table(path, hist.grid(), {{"mass", &hist}});
}

// Layout (all little-endian): magic "CASBTRJ1" (8 bytes), then uint64
// particle count, uint64 slice count, uint64 dim, then slice after slice the
// particle-major positions as count*dim float64 values.
inline void write_trajectory_bin(const std::filesystem::path& path,
                                 const std::vector<EnsembleState>& trajectory,
                                 int dim) {
    static_assert(std::endian::native == std::endian::little,
                  "trajectory dump assumes a little-endian host");
    if (trajectory.empty())
        throw ConfigError("write_trajectory_bin: empty trajectory");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out.write("CASBTRJ1", 8);
    const std::uint64_t header[3] = {trajectory[0].count, trajectory.size(),
                                     static_cast<std::uint64_t>(dim)};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    for (const EnsembleState& s : trajectory) {
        if (s.count != trajectory[0].count)
            throw ConfigError("write_trajectory_bin: ragged trajectory");
        out.write(reinterpret_cast<const char*>(s.positions.data()),
                  static_cast<std::streamsize>(s.positions.size() * sizeof(double)));
    }
    if (!out) throw ConfigError("write failed: " + path.string());
}

inline std::vector<EnsembleState> read_trajectory_bin(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open for reading: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != "CASBTRJ1")
        throw ConfigError("not a trajectory dump: " + path.string());
    std::uint64_t header[3];
    in.read(reinterpret_cast<char*>(header), sizeof header);
    if (!in) throw ConfigError("trajectory header truncated: " + path.string());
    std::vector<EnsembleState> trajectory(header[1]);
    for (std::uint64_t j = 0; j < header[1]; ++j) {
        EnsembleState& s = trajectory[j];
        s.count = header[0];
        s.time_index = j;
        s.positions.resize(header[0] * header[2]);
        in.read(reinterpret_cast<char*>(s.positions.data()),
                static_cast<std::streamsize>(s.positions.size() * sizeof(double)));
        if (!in) throw ConfigError("trajectory truncated at slice " +
                                   std::to_string(j) + ": " + path.string());
    }
    return trajectory;
}

}  // namespace casb
