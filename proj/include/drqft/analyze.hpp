#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "problem.hpp"

namespace drqft {

inline std::vector<boundary> problem_boundaries(const problem& p, const lifted_family& lf) {
    return compute_boundaries(p.loop(), lf, p.specs, phase_grid{p.phase_step});
}

// Full analysis record of a problem: stability verdict, robust margin sweep over the
// family, boundary validation and the simulated ripple.
inline io::json analyze_problem(const problem& p) {
    const auto loop = p.loop();
    const auto verdict = assess(loop, p.grid_points);
    io::json rec = {{"name", p.name}, {"stability", io::to_json(verdict)}};

    const bool need_family = p.specs.mu.has_value() || !p.specs.design_frequencies.empty();
    if (need_family) {
        const auto lf = lift_family(p.family, p.g_fast, p.timing);
        if (p.specs.mu) {
            const auto peaks = family_sensitivity_peaks(lf, p.g_slow, p.sweep_points);
            std::size_t worst = 0;
            for (std::size_t i = 1; i < peaks.size(); ++i)
                if (peaks[i].peak > peaks[worst].peak) worst = i;
            const double bound = 1 / *p.specs.mu;
            rec["robust_margin"] = {{"pass", peaks[worst].peak <= bound},
                                    {"bound", bound},
                                    {"worst_peak", peaks[worst].peak},
                                    {"worst_frequency", peaks[worst].frequency},
                                    {"worst_member", worst},
                                    {"worst_parameters", p.family.parameter_grid[worst]},
                                    {"worst_case_margins",
                                     {{"phase_deg", worst_case_margins(*p.specs.mu).pm_deg},
                                      {"gain_db", worst_case_margins(*p.specs.mu).gm_db}}}};
        }
        if (p.specs.mu || p.specs.delta1 || p.specs.delta2) {
            const auto bs = problem_boundaries(p, lf);
            rec["validation"] = io::to_json(validate_design(loop, bs, p.specs, p.sweep_points));
        }
    }

    try {
        const auto tr = simulate(loop, p.specs.reference, p.t_end, p.substeps);
        const double w0 = p.specs.reference.kind == reference_kind::sinusoid ? p.specs.reference.b : 0.0;
        rec["ripple"] = io::to_json(ripple_metrics(tr, p.timing.Ts, w0));
        rec["ripple"]["diverged"] = tr.diverged;
    } catch (const error& e) {
        rec["ripple"] = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    }
    return rec;
}

// 0 iff the loop is stable by both the crossing count and the pole oracle and every
// requested spec passes; 1 otherwise. Depends on the record alone.
inline int analyze_exit_code(const io::json& rec) {
    const auto& s = rec.at("stability");
    bool ok = s.at("stable").get<bool>() && s.at("oracle").at("status").get<std::string>() == "stable";
    if (rec.contains("robust_margin")) ok = ok && rec["robust_margin"].at("pass").get<bool>();
    if (rec.contains("validation")) ok = ok && rec["validation"].at("all_pass").get<bool>();
    return ok ? 0 : 1;
}

} // namespace drqft
