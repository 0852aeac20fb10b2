#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bounds.hpp"
#include "io.hpp"
#include "simulate.hpp"

namespace drqft {

// A dual-rate design problem: uncertain plant, controllers, prefilters, specs and grids.
struct problem {
    std::string name;
    dual_rate_timing timing;
    plant_family family;
    rational_tf g_fast;
    rational_tf g_slow;
    std::optional<rational_tf> prefilter_c;
    std::optional<rational_tf> prefilter_d;
    spec_set specs;
    int grid_points = 512;
    double phase_step = 1;
    int sweep_points = 2000;
    double t_end = 20;
    int substeps = 32;

    dual_rate_loop loop(const rational_tf& slow) const {
        return dual_rate_loop::make(family.nominal(), g_fast, slow, timing, prefilter_c, prefilter_d);
    }
    dual_rate_loop loop() const { return loop(g_slow); }
};

namespace detail {

using io::json;

inline double number(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number()) fail(error_code::schema, std::string("missing number '") + key + "'");
    return j[key].get<double>();
}

inline double positive(const json& j, const char* key) {
    const double v = number(j, key);
    if (!(v > 0) || !std::isfinite(v)) fail(error_code::schema, std::string("'") + key + "' must be positive");
    return v;
}

inline spec_function spec_from_json(const json& j) {
    if (j.is_number()) {
        if (!(j.get<double>() > 0)) fail(error_code::schema, "spec bound must be positive");
        return spec_function::constant(j.get<double>());
    }
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) fail(error_code::schema, "spec function needs a kind");
    const auto k = j["kind"].get<std::string>();
    if (k == "constant") {
        if (j.contains("value_db")) return spec_function::constant(std::pow(10.0, number(j, "value_db") / 20));
        return spec_function::constant(positive(j, "value"));
    }
    if (k == "linear") return spec_function::linear(positive(j, "slope"));
    if (k == "table") {
        if (!j.contains("points") || !j["points"].is_array() || j["points"].empty())
            fail(error_code::schema, "table spec needs points");
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : j["points"]) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number() || !(p[1].get<double>() > 0))
                fail(error_code::schema, "table points are [omega, positive bound] pairs");
            pts.emplace_back(p[0].get<double>(), p[1].get<double>());
        }
        return spec_function::table(std::move(pts));
    }
    if (k == "second_order") {
        const double cap_w = j.contains("cap_frequency") ? positive(j, "cap_frequency") : std::numeric_limits<double>::infinity();
        const double cap_v = j.contains("cap_value") ? positive(j, "cap_value") : 0.0;
        return spec_function::second_order(positive(j, "wn"), positive(j, "zeta"), cap_w, cap_v);
    }
    fail(error_code::schema, "unknown spec kind '" + k + "'");
}

inline reference_signal reference_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) fail(error_code::schema, "reference needs a kind");
    const auto k = j["kind"].get<std::string>();
    const double A = j.contains("amplitude") ? number(j, "amplitude") : 1.0;
    const double a = j.contains("a") ? number(j, "a") : 0.0;
    if (k == "step") return reference_signal::step(A);
    if (k == "ramp") return reference_signal::ramp(A);
    if (k == "sinusoid") return reference_signal::damped_sinusoid(A, positive(j, "b"), a);
    if (k == "exponential") return reference_signal::exponential(A, a);
    fail(error_code::schema, "unknown reference kind '" + k + "'");
}

// Coefficient that is a number or an affine form {"1": c0, "<param>": c, ...}.
inline double affine(const json& c, const std::map<std::string, double>& params) {
    if (c.is_number()) return c.get<double>();
    if (!c.is_object()) fail(error_code::schema, "coefficient must be a number or an affine object");
    double v = 0;
    for (const auto& [key, val] : c.items()) {
        if (!val.is_number()) fail(error_code::schema, "affine coefficient weights must be numbers");
        if (key == "1") {
            v += val.get<double>();
            continue;
        }
        auto it = params.find(key);
        if (it == params.end()) fail(error_code::schema, "unknown parameter '" + key + "'");
        v += val.get<double>() * it->second;
    }
    return v;
}

inline std::vector<double> parameter_values(const json& p) {
    if (p.contains("values")) {
        if (!p["values"].is_array() || p["values"].empty()) fail(error_code::schema, "parameter values must be a non-empty array");
        std::vector<double> v;
        for (const auto& x : p["values"]) {
            if (!x.is_number()) fail(error_code::schema, "parameter values must be numbers");
            v.push_back(x.get<double>());
        }
        return v;
    }
    if (p.contains("range")) {
        const auto& r = p["range"];
        if (!r.is_array() || r.size() != 3 || !r[0].is_number() || !r[1].is_number() || !r[2].is_number() ||
            !(r[2].get<double>() > 0) || r[1].get<double>() < r[0].get<double>())
            fail(error_code::schema, "range is [lo, hi, positive step]");
        const double lo = r[0].get<double>(), hi = r[1].get<double>(), st = r[2].get<double>();
        const int n = static_cast<int>(std::floor((hi - lo) / st + 1e-9));
        std::vector<double> v;
        for (int i = 0; i <= n; ++i) v.push_back(lo + i * st);
        return v;
    }
    fail(error_code::schema, "parameter needs values or range");
}

inline std::size_t nearest_index(const std::vector<std::vector<double>>& grid, const std::vector<double>& target) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double d = 0;
        for (std::size_t k = 0; k < target.size(); ++k) d += std::abs(grid[i][k] - target[k]);
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    return best;
}

inline plant_family family_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) fail(error_code::schema, "plant needs a kind");
    const auto k = j["kind"].get<std::string>();
    auto index = [&](std::size_t n) -> std::size_t {
        if (!j.contains("nominal")) return 0;
        if (!j["nominal"].is_number_integer() || j["nominal"].get<long>() < 0 || j["nominal"].get<std::size_t>() >= n)
            fail(error_code::schema, "nominal index outside the family");
        return j["nominal"].get<std::size_t>();
    };
    if (k == "explicit") {
        if (!j.contains("members") || !j["members"].is_array() || j["members"].empty())
            fail(error_code::schema, "explicit family needs members");
        auto members = std::make_shared<std::vector<rational_tf>>();
        for (const auto& m : j["members"]) members->push_back(io::tf_from_json(m));
        plant_family f{[members](const std::vector<double>& p) { return members->at(static_cast<std::size_t>(p.at(0))); }, {}, 0};
        for (std::size_t i = 0; i < members->size(); ++i) f.parameter_grid.push_back({double(i)});
        f.nominal_index = index(members->size());
        return f;
    }
    if (k == "gain") {
        if (!j.contains("base")) fail(error_code::schema, "gain family needs a base plant");
        std::vector<double> gains = j.contains("gains") ? parameter_values({{"values", j["gains"]}}) : std::vector<double>{1.0};
        return plant_family::gain_parametric(io::tf_from_json(j["base"]), gains, index(gains.size()));
    }
    if (k == "coefficient") {
        if (!j.contains("parameters") || !j["parameters"].is_array() || j["parameters"].empty())
            fail(error_code::schema, "coefficient family needs parameters");
        std::vector<std::string> names;
        std::vector<std::vector<double>> grid{{}};
        for (const auto& p : j["parameters"]) {
            if (!p.contains("name") || !p["name"].is_string()) fail(error_code::schema, "parameter needs a name");
            names.push_back(p["name"].get<std::string>());
            std::vector<std::vector<double>> next;
            for (const auto& g : grid)
                for (double v : parameter_values(p)) {
                    auto e = g;
                    e.push_back(v);
                    next.push_back(std::move(e));
                }
            grid.swap(next);
        }
        if (!j.contains("num") || !j["num"].is_array() || !j.contains("den") || !j["den"].is_array())
            fail(error_code::schema, "coefficient family needs num and den arrays");
        const json num = j["num"], den = j["den"];
        auto gen = [names, num, den](const std::vector<double>& v) {
            std::map<std::string, double> params;
            for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = v.at(i);
            std::vector<double> n, d;
            for (const auto& c : num) n.push_back(affine(c, params));
            for (const auto& c : den) d.push_back(affine(c, params));
            return rational_tf(polynomial(n), polynomial(d));
        };
        // validate the coefficient forms once
        (void)gen(grid.front());
        plant_family f{gen, grid, 0};
        if (j.contains("nominal") && j["nominal"].is_object()) {
            std::vector<double> target;
            for (const auto& nm : names) {
                if (!j["nominal"].contains(nm) || !j["nominal"][nm].is_number())
                    fail(error_code::schema, "nominal must give every parameter");
                target.push_back(j["nominal"][nm].get<double>());
            }
            f.nominal_index = nearest_index(grid, target);
        } else {
            f.nominal_index = index(grid.size());
        }
        return f;
    }
    if (k == "rwip") {
        const bool gain_only = j.value("gain_only", true);
        std::vector<double> jf = j.contains("jf") ? parameter_values(j["jf"]) : std::vector<double>{290.0};
        plant_family f{[gain_only](const std::vector<double>& p) { return rwip_plant(p.at(0), gain_only); }, {}, 0};
        for (double v : jf) f.parameter_grid.push_back({v});
        if (j.contains("nominal_jf")) f.nominal_index = nearest_index(f.parameter_grid, {number(j, "nominal_jf")});
        else f.nominal_index = index(jf.size());
        return f;
    }
    fail(error_code::schema, "unknown plant kind '" + k + "'");
}

} // namespace detail

inline problem parse_problem(const io::json& j) {
    using detail::number;
    using detail::positive;
    if (!j.is_object()) fail(error_code::schema, "problem must be a JSON object");
    problem p;
    p.name = j.value("name", std::string("problem"));
    if (!j.contains("timing") || !j["timing"].is_object()) fail(error_code::schema, "missing timing");
    const auto& tj = j["timing"];
    const double Ts = positive(tj, "Ts");
    const double Nd = positive(tj, "N");
    if (std::abs(Nd - std::round(Nd)) > 0) fail(error_code::schema, "N must be an integer");
    p.timing = dual_rate_timing::from_slow(Ts, static_cast<int>(Nd));
    if (tj.contains("Tf") && std::abs(number(tj, "Tf") - p.timing.Tf) > 1e-12 * Ts)
        fail(error_code::schema, "Tf must equal Ts/N");
    if (!j.contains("plant")) fail(error_code::schema, "missing plant");
    p.family = detail::family_from_json(j["plant"]);
    for (const char* key : {"g_fast", "g_slow"})
        if (!j.contains(key)) fail(error_code::schema, std::string("missing ") + key);
    p.g_fast = io::tf_from_json(j["g_fast"], p.timing.Tf);
    p.g_slow = io::tf_from_json(j["g_slow"], p.timing.Ts);
    if (j.contains("g_slow_sections")) {
        if (!j["g_slow_sections"].is_array()) fail(error_code::schema, "g_slow_sections must be an array");
        for (const auto& s : j["g_slow_sections"]) p.g_slow = series(p.g_slow, io::tf_from_json(s, p.timing.Ts));
    }
    if (j.contains("prefilter") && !j["prefilter"].is_null()) p.prefilter_c = io::tf_from_json(j["prefilter"]);
    if (j.contains("prefilter_discrete") && !j["prefilter_discrete"].is_null())
        p.prefilter_d = io::tf_from_json(j["prefilter_discrete"], p.timing.Ts);
    if (j.contains("specs")) {
        const auto& s = j["specs"];
        if (!s.is_object()) fail(error_code::schema, "specs must be an object");
        if (s.contains("mu")) {
            const double mu = number(s, "mu");
            if (!(mu > 0 && mu < 1)) fail(error_code::schema, "mu must lie in (0, 1)");
            p.specs.mu = mu;
        }
        if (s.contains("delta1")) p.specs.delta1 = detail::spec_from_json(s["delta1"]);
        if (s.contains("delta2")) p.specs.delta2 = detail::spec_from_json(s["delta2"]);
        if (s.contains("reference")) p.specs.reference = detail::reference_from_json(s["reference"]);
        auto freqs = [&](const char* key, double scale) {
            if (!s.contains(key)) return;
            if (!s[key].is_array()) fail(error_code::schema, std::string(key) + " must be an array");
            for (const auto& w : s[key]) {
                if (!w.is_number() || !(w.get<double>() > 0)) fail(error_code::schema, "design frequencies must be positive");
                p.specs.design_frequencies.push_back(w.get<double>() * scale);
            }
        };
        freqs("design_frequencies", 1.0);
        freqs("design_frequencies_nyquist", std::numbers::pi / Ts);
    }
    if (j.contains("grids")) {
        const auto& g = j["grids"];
        if (g.contains("grid_points")) p.grid_points = static_cast<int>(positive(g, "grid_points"));
        if (g.contains("phase_step")) p.phase_step = positive(g, "phase_step");
        if (g.contains("sweep_points")) p.sweep_points = static_cast<int>(positive(g, "sweep_points"));
    }
    if (j.contains("simulation")) {
        const auto& s = j["simulation"];
        if (s.contains("t_end")) p.t_end = positive(s, "t_end");
        if (s.contains("substeps")) p.substeps = static_cast<int>(positive(s, "substeps"));
    }
    // surface construction errors (sample-time mismatch, improper prefilter) as schema errors
    try {
        (void)p.loop();
    } catch (const error& e) {
        fail(error_code::schema, std::string("inconsistent problem: ") + e.what());
    }
    return p;
}

inline problem load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(error_code::schema, "cannot open " + path);
    io::json j;
    try {
        j = io::json::parse(in);
    } catch (const io::json::parse_error& e) {
        fail(error_code::schema, std::string("malformed JSON: ") + e.what());
    }
    return parse_problem(j);
}

// Edit applied to the problem's slow controller: a gain, extra zeros and poles,
// series sections, or a full replacement.
inline rational_tf apply_controller_edit(const problem& p, const io::json& e) {
    if (!e.is_object()) fail(error_code::schema, "controller edit must be an object");
    rational_tf g = e.contains("g_slow") ? io::tf_from_json(e["g_slow"], p.timing.Ts) : p.g_slow;
    double k = 1;
    if (e.contains("gain")) k *= detail::number(e, "gain");
    if (e.contains("gain_db")) k *= std::pow(10.0, detail::number(e, "gain_db") / 20);
    auto roots = [&](const char* key) {
        std::vector<cplx> r;
        if (!e.contains(key)) return r;
        if (!e[key].is_array()) fail(error_code::schema, std::string(key) + " must be an array");
        for (const auto& z : e[key]) {
            if (z.is_number()) r.emplace_back(z.get<double>(), 0.0);
            else if (z.is_array() && z.size() == 2 && z[0].is_number() && z[1].is_number()) {
                const cplx c(z[0].get<double>(), z[1].get<double>());
                r.push_back(c);
                if (c.imag() != 0) r.push_back(std::conj(c));
            } else fail(error_code::schema, "roots are numbers or [re, im] pairs");
        }
        return r;
    };
    const auto zs = roots("zeros"), ps = roots("poles");
    polynomial n = k * g.num() * polynomial::from_roots(zs);
    polynomial d = g.den() * polynomial::from_roots(ps);
    g = rational_tf(n, d, p.timing.Ts);
    if (e.contains("sections")) {
        if (!e["sections"].is_array()) fail(error_code::schema, "sections must be an array");
        for (const auto& s : e["sections"]) g = series(g, io::tf_from_json(s, p.timing.Ts));
    }
    if (!g.is_proper()) fail(error_code::improper_tf, "edited slow controller is improper");
    return g;
}

} // namespace drqft
