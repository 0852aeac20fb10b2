#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <drqft/drqft.hpp>
#include <drqft/service.hpp>

namespace fs = std::filesystem;
using namespace drqft;

namespace {

constexpr int exit_schema = 2;
constexpr int exit_failure = 3;

struct overrides {
    int grid_points = 0;
    double phase_step = 0;
};

problem load(const std::string& path, const overrides& o) {
    auto p = load_problem(path);
    if (o.grid_points > 0) p.grid_points = o.grid_points;
    if (o.phase_step > 0) p.phase_step = o.phase_step;
    return p;
}

std::string file_stem(std::size_t index, const std::string& label) {
    std::string s;
    for (char c : label) {
        if (std::isalnum(static_cast<unsigned char>(c))) s += c;
        else if (c == '#') s += "ctrack";
        else s += '_';
    }
    std::ostringstream os;
    os << std::setw(2) << std::setfill('0') << index << '_' << s;
    return os.str();
}

int run_analyze(const std::string& path, const overrides& o) {
    const auto p = load(path, o);
    const auto rec = analyze_problem(p);
    std::cout << rec.dump(2) << '\n';
    return analyze_exit_code(rec);
}

int run_bounds(const std::string& path, const std::string& out, const overrides& o) {
    const auto p = load(path, o);
    fs::create_directories(out);
    io::json listing = io::json::array();
    if (!p.specs.design_frequencies.empty()) {
        const auto lf = lift_family(p.family, p.g_fast, p.timing);
        const auto bs = problem_boundaries(p, lf);
        for (std::size_t i = 0; i < bs.size(); ++i) {
            const auto stem = file_stem(i + 1, bs[i].label);
            std::ofstream(fs::path(out) / (stem + ".json")) << io::to_json(bs[i]).dump(2) << '\n';
            std::ofstream(fs::path(out) / (stem + ".csv")) << io::boundary_csv(bs[i]);
            listing.push_back({{"file", stem + ".json"},
                               {"label", bs[i].label},
                               {"omega_design", bs[i].omega_design},
                               {"omega_source", bs[i].omega_source},
                               {"conjugated", bs[i].conjugated}});
        }
    }
    std::cout << io::json{{"boundaries", listing}}.dump(2) << '\n';
    return 0;
}

int run_simulate(const std::string& path, const std::string& ref_text, double t_end, const std::string& out,
                 const overrides& o) {
    const auto p = load(path, o);
    if (!(t_end > 0)) fail(error_code::schema, "--t-end must be positive");
    reference_signal ref = p.specs.reference;
    double w0 = ref.kind == reference_kind::sinusoid ? ref.b : 0.0;
    if (ref_text == "step") {
        ref = reference_signal::step();
        w0 = 0;
    } else if (ref_text.rfind("sin:", 0) == 0) {
        char* end = nullptr;
        w0 = std::strtod(ref_text.c_str() + 4, &end);
        if (*end != '\0' || !(w0 > 0)) fail(error_code::schema, "--ref sin:w0 needs a positive frequency");
        ref = reference_signal::sinusoid(1.0, w0);
    } else if (!ref_text.empty()) {
        fail(error_code::schema, "--ref must be step or sin:w0");
    }
    const auto tr = simulate(p.loop(), ref, t_end, p.substeps);
    io::json report;
    try {
        report = io::to_json(ripple_metrics(tr, p.timing.Ts, w0));
    } catch (const error& e) {
        report = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    }
    report["diverged"] = tr.diverged;
    if (out.empty()) {
        std::cout << tr.csv();
        std::cerr << report.dump(2) << '\n';
    } else {
        std::ofstream(out) << tr.csv();
        std::cout << report.dump(2) << '\n';
    }
    return 0;
}

int run_serve(const std::string& host, int port) {
    httplib::Server srv;
    session_store store;
    install_routes(srv, store);
    std::cerr << "listening on " << host << ':' << port << '\n';
    return srv.listen(host, port) ? 0 : exit_failure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-rate QFT design and analysis"};
    app.require_subcommand(1);
    overrides o;
    std::string file, out, ref, host = "127.0.0.1";
    double t_end = 20;
    int port = 8080;
    bool t_end_given = false;

    auto add_grids = [&](CLI::App* c) {
        c->add_option("--grid-points", o.grid_points, "Frequency grid points for Nichols curves")->check(CLI::PositiveNumber);
        c->add_option("--phase-step", o.phase_step, "Phase grid step in degrees")->check(CLI::PositiveNumber);
    };

    auto* an = app.add_subcommand("analyze", "Stability verdict, margins, spec validation and ripple report");
    an->add_option("problem", file, "Problem file")->required();
    add_grids(an);

    auto* bo = app.add_subcommand("bounds", "Write per-frequency boundaries as JSON and CSV");
    bo->add_option("problem", file, "Problem file")->required();
    bo->add_option("--out", out, "Output directory")->required();
    add_grids(bo);

    auto* si = app.add_subcommand("simulate", "Simulate the nominal loop and report the ripple");
    si->add_option("problem", file, "Problem file")->required();
    si->add_option("--ref", ref, "step or sin:w0 (default: the problem's reference)");
    si->add_option("--t-end", t_end, "Simulation horizon in seconds")->each([&](const std::string&) { t_end_given = true; });
    si->add_option("--out", out, "CSV output file (default: stdout)");
    add_grids(si);

    auto* se = app.add_subcommand("serve", "Run the JSON-over-HTTP service");
    se->add_option("--port", port, "TCP port")->check(CLI::Range(1, 65535));
    se->add_option("--host", host, "Bind address");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_schema;
    }

    try {
        if (*an) return run_analyze(file, o);
        if (*bo) return run_bounds(file, out, o);
        if (*si) {
            if (!t_end_given) t_end = load(file, o).t_end;
            return run_simulate(file, ref, t_end, out, o);
        }
        if (*se) return run_serve(host, port);
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code() == error_code::schema ? exit_schema : exit_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_failure;
}
