#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "bounds.hpp"
#include "errors.hpp"
#include "simulate.hpp"
#include "stability.hpp"
#include "transfer_function.hpp"

namespace drqft::io {

using json = nlohmann::json;

// Non-finite numbers are written as null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const polynomial& p) { return json(p.coeffs()); }

inline json to_json(const rational_tf& h) {
    return {{"num", to_json(h.num())}, {"den", to_json(h.den())}, {"ts", h.ts() ? json(*h.ts()) : json(nullptr)}};
}

inline std::vector<double> coeff_list(const json& j, const char* what) {
    if (!j.is_array() || j.empty()) fail(error_code::schema, std::string(what) + " must be a non-empty number array");
    std::vector<double> c;
    for (const auto& v : j) {
        if (!v.is_number()) fail(error_code::schema, std::string(what) + " must contain numbers only");
        c.push_back(v.get<double>());
    }
    return c;
}

inline rational_tf tf_from_json(const json& j, std::optional<double> default_ts = std::nullopt) {
    if (!j.is_object() || !j.contains("num") || !j.contains("den"))
        fail(error_code::schema, "transfer function needs num and den");
    const polynomial n(coeff_list(j["num"], "num")), d(coeff_list(j["den"], "den"));
    if (d.is_zero()) fail(error_code::schema, "denominator is identically zero");
    std::optional<double> ts = default_ts;
    if (j.contains("ts") && !j["ts"].is_null()) {
        if (!j["ts"].is_number() || !(j["ts"].get<double>() > 0)) fail(error_code::schema, "ts must be a positive number");
        ts = j["ts"].get<double>();
    }
    return rational_tf(n, d, ts);
}

inline json to_json(const interval_set& s) {
    json a = json::array();
    for (const auto& iv : s) a.push_back({num(iv.lo), num(iv.hi)});
    return a;
}

inline json to_json(const boundary& b) {
    json allowed = json::array();
    for (const auto& s : b.allowed) allowed.push_back(to_json(s));
    return {{"omega_design", b.omega_design},
            {"omega_source", b.omega_source},
            {"kind", std::string(to_string(b.kind))},
            {"label", b.label},
            {"conjugated", b.conjugated},
            {"orientation", b.orientation},
            {"gain_range_db", {b.gain_min_db, b.gain_max_db}},
            {"phases", b.phases},
            {"allowed", std::move(allowed)}};
}

inline std::string boundary_csv(const boundary& b) {
    std::string out = "phase_deg,lo_db,hi_db\n";
    char buf[128];
    for (std::size_t i = 0; i < b.phases.size(); ++i) {
        for (const auto& iv : b.allowed[i]) {
            std::snprintf(buf, sizeof buf, "%.6g,%.12g,%.12g\n", b.phases[i], iv.lo, iv.hi);
            out += buf;
        }
    }
    return out;
}

inline json to_json(const nichols_curve& c) {
    json w = json::array(), ph = json::array(), g = json::array(), arc = json::array();
    for (const auto& s : c.samples) {
        w.push_back(s.w);
        ph.push_back(s.phase_deg);
        g.push_back(num(s.gain_db));
        arc.push_back(s.arc);
    }
    return {{"omega", w}, {"phase_deg", ph}, {"gain_db", g}, {"arc", arc}, {"full", c.full}, {"integrators", c.integrators}};
}

inline json to_json(const margin_pair& m) {
    return {{"gm_db", num(m.gm_db)}, {"pm_deg", num(m.pm_deg)}, {"gm_frequency", num(m.gm_frequency)},
            {"pm_frequency", num(m.pm_frequency)}};
}

inline json to_json(const assumption_report& r) {
    json a = json::array();
    for (const auto& i : r.items) a.push_back({{"pass", i.pass}, {"witness", i.witness}});
    return a;
}

inline json to_json(const stability_verdict& v) {
    json poles = json::array();
    for (const auto& p : v.oracle.poles) poles.push_back({p.real(), p.imag()});
    return {{"stable", v.stable},
            {"net_crossings", v.net_crossings},
            {"required_crossings", v.required_crossings},
            {"critical_point", v.critical_point},
            {"assumptions", to_json(v.assumptions)},
            {"applicable", v.applicable},
            {"margins", to_json(v.margins)},
            {"oracle", {{"status", std::string(to_string(v.oracle.status))}, {"max_modulus", v.oracle.max_modulus}, {"poles", poles}}},
            {"oracle_agrees", v.oracle_agrees}};
}

inline json to_json(const sweep_check& c) {
    return {{"pass", c.pass}, {"worst_excess_db", num(c.worst_excess_db)}, {"worst_frequency", c.worst_frequency}, {"points", c.points}};
}

inline json to_json(const validation_report& r) {
    json bs = json::array();
    for (const auto& b : r.boundaries)
        bs.push_back({{"label", b.label},
                      {"kind", std::string(to_string(b.kind))},
                      {"omega_design", b.omega_design},
                      {"omega_source", b.omega_source},
                      {"pass", b.pass},
                      {"violation_db", num(b.violation_db)}});
    json j = {{"boundaries", bs}, {"boundaries_pass", r.boundaries_pass()}, {"all_pass", r.all_pass()}};
    if (r.sensitivity) j["sensitivity_sweep"] = to_json(*r.sensitivity);
    if (r.continuous) j["continuous_sweep"] = to_json(*r.continuous);
    return j;
}

inline json to_json(const ripple_report& r) {
    json h = json::array();
    for (const auto& c : r.harmonics) h.push_back({{"frequency", c.frequency}, {"amplitude", c.amplitude}});
    return {{"fundamental_amplitude", r.fundamental_amplitude},
            {"harmonics", h},
            {"dominant_ripple_frequency", r.dominant_ripple_frequency},
            {"dominant_ripple_level", r.dominant_ripple_level},
            {"window", {r.window_start, r.window_end}},
            {"window_periods", r.window_periods}};
}

inline json to_json(const sim_trace& t) {
    json y = json::array(), u = json::array();
    for (double v : t.y) y.push_back(num(v));
    for (double v : t.u) u.push_back(num(v));
    return {{"t", t.t}, {"r", t.r}, {"u", u}, {"y", y}, {"t_slow", t.t_slow}, {"y_slow", t.y_slow},
            {"u_slow", t.u_slow}, {"r_slow", t.r_slow}, {"substeps", t.substeps}, {"diverged", t.diverged}};
}

} // namespace drqft::io
