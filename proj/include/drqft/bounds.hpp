#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "sampling.hpp"
#include "spectra.hpp"
#include "transfer_function.hpp"

namespace drqft {

// Positive bound as a function of frequency.
struct spec_function {
    enum class kind { constant, linear, table, second_order };
    kind type = kind::constant;
    double value = 1;                        // constant level or linear slope
    std::vector<std::pair<double, double>> points; // (w, bound), sorted, linear interpolation
    double wn = 1, zeta = 0.5;               // |1 - wn^2/(s^2 + 2 zeta wn s + wn^2)| ...
    double cap_frequency = std::numeric_limits<double>::infinity();
    double cap_value = 0;                    // ... for w <= cap_frequency, cap_value beyond

    static spec_function constant(double v) { return {kind::constant, v, {}, 1, 0.5}; }
    static spec_function linear(double slope) { return {kind::linear, slope, {}, 1, 0.5}; }
    static spec_function table(std::vector<std::pair<double, double>> pts) {
        std::sort(pts.begin(), pts.end());
        return {kind::table, 0, std::move(pts), 1, 0.5};
    }
    static spec_function second_order(double wn, double zeta, double cap_w, double cap_v) {
        return {kind::second_order, 0, {}, wn, zeta, cap_w, cap_v};
    }

    double operator()(double w) const {
        switch (type) {
        case kind::constant: return value;
        case kind::linear: return value * w;
        case kind::table: {
            if (points.empty()) fail(error_code::invalid_argument, "empty spec table");
            if (w <= points.front().first) return points.front().second;
            if (w >= points.back().first) return points.back().second;
            auto it = std::upper_bound(points.begin(), points.end(), std::make_pair(w, -std::numeric_limits<double>::infinity()));
            const auto& [w1, v1] = *it;
            const auto& [w0, v0] = *(it - 1);
            return v0 + (v1 - v0) * (w - w0) / (w1 - w0);
        }
        case kind::second_order: {
            if (w > cap_frequency) return cap_value;
            const cplx s(0, w);
            return std::abs(1.0 - wn * wn / (s * s + 2 * zeta * wn * s + wn * wn));
        }
        }
        return value;
    }
};

// Parametric continuous plant family; member i is generator(parameter_grid[i]).
struct plant_family {
    std::function<rational_tf(const std::vector<double>&)> generator;
    std::vector<std::vector<double>> parameter_grid;
    std::size_t nominal_index = 0;

    static plant_family single(const rational_tf& p) {
        return {[p](const std::vector<double>&) { return p; }, {{}}, 0};
    }
    static plant_family gain_parametric(const rational_tf& p0, const std::vector<double>& gains, std::size_t nominal) {
        plant_family f{[p0](const std::vector<double>& k) { return rational_tf(k.at(0) * p0.num(), p0.den(), p0.ts()); }, {}, nominal};
        for (double k : gains) f.parameter_grid.push_back({k});
        return f;
    }

    std::size_t size() const { return parameter_grid.size(); }
    rational_tf member(std::size_t i) const { return generator(parameter_grid.at(i)); }
    rational_tf nominal() const { return member(nominal_index); }
};

// Family members with their lifted plants, computed once per fast controller.
struct lifted_family {
    std::vector<rational_tf> plants;
    std::vector<rational_tf> lifted;
    std::size_t nominal_index = 0;
    rational_tf g_fast;
    dual_rate_timing timing;

    const rational_tf& nominal_lifted() const { return lifted[nominal_index]; }
};

inline lifted_family lift_family(const plant_family& f, const rational_tf& g_fast, const dual_rate_timing& t) {
    if (f.size() == 0) fail(error_code::invalid_argument, "empty plant family");
    if (f.nominal_index >= f.size()) fail(error_code::invalid_argument, "nominal index outside the parameter grid");
    lifted_family lf;
    lf.nominal_index = f.nominal_index;
    lf.g_fast = g_fast.ts() ? g_fast : g_fast.with_ts(t.Tf);
    lf.timing = t;
    int unstable = -1;
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto p = f.member(i);
        int n = 0;
        for (const auto& r : p.poles())
            if (r.real() > 0) ++n;
        if (unstable >= 0 && n != unstable)
            fail(error_code::invalid_argument, "family members differ in their number of unstable poles");
        unstable = n;
        lf.lifted.push_back(lifted_plant(p, lf.g_fast, t));
        lf.plants.push_back(std::move(p));
    }
    return lf;
}

struct uncertainty_template {
    double w = 0;
    std::vector<cplx> delta_l; // P_L / P_L0 at e^{jwTs}
    std::vector<cplx> delta;   // P G_R / P_L0
};

inline uncertainty_template build_template(const lifted_family& lf, double w) {
    if (w < 0) fail(error_code::invalid_argument, "template frequency must be non-negative");
    uncertainty_template t;
    t.w = w;
    const cplx z = std::polar(1.0, w * lf.timing.Ts);
    const cplx pl0 = lf.nominal_lifted().eval(z);
    const cplx gr = lf.g_fast.freq(w);
    for (std::size_t i = 0; i < lf.plants.size(); ++i) {
        t.delta_l.push_back(i == lf.nominal_index ? cplx(1.0) : lf.lifted[i].eval(z) / pl0);
        t.delta.push_back(lf.plants[i].freq(w) * gr / pl0);
    }
    return t;
}

// Source frequency to its slow-rate alias in [0, pi/Ts]; odd bands conjugate.
inline std::pair<double, bool> fold(double w, double Ts) {
    if (w < 0) fail(error_code::invalid_argument, "fold needs w >= 0");
    const double ws = 2 * std::numbers::pi / Ts;
    const double wn = std::numbers::pi / Ts;
    const double k = std::floor(w / ws);
    const double r = w - k * ws;
    if (r <= wn + 1e-12 * std::max(w, wn)) return {std::max(0.0, r), false};
    return {std::max(0.0, ws - r), true};
}

// alpha |1 + g u e|^2 - beta |1 + g v e|^2 <= 0, e = e^{j phase} applied to the
// source-frequency loop value.
struct quad_constraint {
    double alpha;
    cplx u;
    double beta;
    cplx v;

    double value(double g, cplx e) const {
        return alpha * std::norm(1.0 + g * u * e) - beta * std::norm(1.0 + g * v * e);
    }
};

enum class boundary_kind { stability, dtrack, ctrack };

inline std::string_view to_string(boundary_kind k) {
    switch (k) {
    case boundary_kind::stability: return "stability";
    case boundary_kind::dtrack: return "dtrack";
    case boundary_kind::ctrack: return "ctrack";
    }
    return "unknown";
}

struct gain_interval {
    double lo; // dB, -inf when unbounded below
    double hi; // dB, +inf when unbounded above
    bool contains(double g_db) const { return g_db >= lo && g_db <= hi; }
    friend bool operator==(const gain_interval&, const gain_interval&) = default;
};

using interval_set = std::vector<gain_interval>;

inline interval_set intersect(const interval_set& a, const interval_set& b) {
    interval_set out;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double lo = std::max(a[i].lo, b[j].lo);
        const double hi = std::min(a[i].hi, b[j].hi);
        if (lo <= hi) out.push_back({lo, hi});
        (a[i].hi < b[j].hi) ? ++i : ++j;
    }
    return out;
}

struct phase_grid {
    double step_deg = 1;
    std::vector<double> phases() const {
        if (!(step_deg > 0)) fail(error_code::invalid_argument, "phase step must be positive");
        std::vector<double> p;
        const int n = static_cast<int>(std::floor(360.0 / step_deg + 1e-9));
        for (int i = 0; i <= n; ++i) p.push_back(-360.0 + i * step_deg);
        if (p.back() < -1e-9) p.push_back(0.0);
        return p;
    }
};

namespace detail {

// Allowed set of linear gains in [gmin, gmax] for one constraint, in dB.
inline interval_set allowed_single(const quad_constraint& q, cplx e, double gmin_db, double gmax_db) {
    const double a = q.alpha * std::norm(q.u) - q.beta * std::norm(q.v);
    const double b = 2 * (q.alpha * (q.u * e).real() - q.beta * (q.v * e).real());
    const double c = q.alpha - q.beta;
    const double gmin = std::pow(10.0, gmin_db / 20), gmax = std::pow(10.0, gmax_db / 20);
    std::vector<double> cuts{gmin};
    const double scale = std::abs(a) * gmax * gmax + std::abs(b) * gmax + std::abs(c);
    auto add = [&](double r) {
        if (r > gmin && r < gmax) cuts.push_back(r);
    };
    if (std::abs(a) > 1e-15 * scale) {
        const double disc = b * b - 4 * a * c;
        if (disc >= 0) {
            const double sq = std::sqrt(disc);
            const double qq = -0.5 * (b + std::copysign(sq, b));
            if (qq != 0) {
                add(qq / a);
                add(c / qq);
            } else {
                add(0.0);
            }
        }
    } else if (std::abs(b) > 1e-15 * scale) {
        add(-c / b);
    }
    cuts.push_back(gmax);
    std::sort(cuts.begin(), cuts.end());
    interval_set out;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double mid = std::sqrt(cuts[i] * cuts[i + 1]);
        if (a * mid * mid + b * mid + c > 0) continue;
        const double lo = i == 0 ? -std::numeric_limits<double>::infinity() : 20 * std::log10(cuts[i]);
        const double hi = i + 2 == cuts.size() ? std::numeric_limits<double>::infinity() : 20 * std::log10(cuts[i + 1]);
        if (!out.empty() && out.back().hi == lo) out.back().hi = hi;
        else out.push_back({lo, hi});
    }
    return out;
}

} // namespace detail

struct boundary {
    double omega_design = 0;
    double omega_source = 0;
    boundary_kind kind = boundary_kind::stability;
    bool conjugated = false;
    std::string label;
    std::vector<double> phases;
    std::vector<interval_set> allowed;
    std::string orientation;
    std::vector<quad_constraint> constraints;
    double gain_min_db = -80;
    double gain_max_db = 80;

    // Exact allowed set at any phase of the slow open loop at omega_design.
    interval_set allowed_at(double phase_deg) const {
        const double ph = (conjugated ? -phase_deg : phase_deg) * std::numbers::pi / 180;
        const cplx e = std::polar(1.0, ph);
        interval_set acc{{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()}};
        for (const auto& q : constraints) {
            acc = intersect(acc, detail::allowed_single(q, e, gain_min_db, gain_max_db));
            if (acc.empty()) break;
        }
        return acc;
    }

    // Distance in dB from the gain of l0 to the allowed set at its phase; 0 if satisfied.
    double violation_db(cplx l0) const {
        const double g = 20 * std::log10(std::abs(l0));
        const double ph = std::arg(l0) * 180 / std::numbers::pi;
        const auto set = allowed_at(ph);
        if (set.empty()) return std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        for (const auto& iv : set) {
            if (iv.contains(g)) return 0;
            best = std::min(best, g < iv.lo ? iv.lo - g : g - iv.hi);
        }
        return best;
    }

    bool satisfied(cplx l0) const { return violation_db(l0) == 0; }
};

namespace detail {

inline std::string classify_orientation(const std::vector<interval_set>& allowed) {
    int above = 0, below = 0, inside = 0, outside = 0;
    const double inf = std::numeric_limits<double>::infinity();
    for (const auto& s : allowed) {
        if (s.empty()) continue;
        if (s.size() == 1 && s[0].lo == -inf && s[0].hi == inf) continue;
        if (s.size() == 1 && s[0].hi == inf) ++above;
        else if (s.size() == 1 && s[0].lo == -inf) ++below;
        else if (s.size() == 1) ++inside;
        else ++outside;
    }
    const int m = std::max({above, below, inside, outside});
    if (m == 0) return "none";
    if (m == above) return "above";
    if (m == below) return "below";
    if (m == outside) return "outside";
    return "inside";
}

inline boundary finish(boundary b, const phase_grid& grid) {
    b.phases = grid.phases();
    b.allowed.clear();
    for (double p : b.phases) b.allowed.push_back(b.allowed_at(p));
    b.orientation = classify_orientation(b.allowed);
    return b;
}

} // namespace detail

// |1 + L0 dL| >= threshold for every template member.
inline boundary threshold_boundary(const uncertainty_template& t, double threshold, boundary_kind kind, const phase_grid& grid) {
    boundary b;
    b.omega_design = b.omega_source = t.w;
    b.kind = kind;
    for (const auto& dl : t.delta_l) b.constraints.push_back({threshold * threshold, 0.0, 1.0, dl});
    return detail::finish(std::move(b), grid);
}

inline boundary stability_boundary(const uncertainty_template& t, double mu, const phase_grid& grid = {}) {
    if (!(mu > 0) || !(mu < 1)) fail(error_code::invalid_argument, "mu must lie in (0, 1)");
    return threshold_boundary(t, mu, boundary_kind::stability, grid);
}

inline boundary dtrack_boundary(const uncertainty_template& t, double delta1, cplx f_l, const phase_grid& grid = {}) {
    if (!(delta1 > 0)) fail(error_code::invalid_argument, "tracking bound must be positive");
    return threshold_boundary(t, std::abs(f_l) / delta1, boundary_kind::dtrack, grid);
}

// Inputs of the continuous tracking constraint at one source frequency.
struct ctrack_data {
    double w_source;
    double delta2;
    cplx f;     // F(jw)
    cplx f_l;   // F_L(e^{jwTs})
    cplx ratio; // R^{Ts}/R at w
    double Ts;
};

inline ctrack_data make_ctrack_data(const dual_rate_loop& loop, const reference_signal& ref, double w, double delta2) {
    return {w, delta2, loop.prefilter_c.freq(w), loop.prefilter_d.freq(w), reference_ratio(ref, loop.timing.Ts, w),
            loop.timing.Ts};
}

// |(1 + L A)/(1 + L dL)| <= delta2/|F| with A = dL - (F_L R^{Ts}/(F R)) D H_Ts/Ts,
// where L is the slow open loop at the source frequency.
inline boundary ctrack_boundary(const uncertainty_template& t, const ctrack_data& d, const phase_grid& grid = {}) {
    if (std::abs(d.f) == 0) fail(error_code::invalid_argument, "prefilter vanishes at the source frequency");
    if (!(d.delta2 > 0)) fail(error_code::invalid_argument, "tracking bound must be positive");
    boundary b;
    b.omega_source = d.w_source;
    std::tie(b.omega_design, b.conjugated) = fold(d.w_source, d.Ts);
    b.kind = boundary_kind::ctrack;
    const double gamma = d.delta2 / std::abs(d.f);
    const cplx k = d.f_l * d.ratio / d.f * hold_response(d.Ts, d.w_source) / d.Ts;
    for (std::size_t i = 0; i < t.delta_l.size(); ++i) {
        const cplx a = t.delta_l[i] - k * t.delta[i];
        b.constraints.push_back({1.0, a, gamma * gamma, t.delta_l[i]});
    }
    return detail::finish(std::move(b), grid);
}

inline boundary worst_case_boundary(const std::vector<boundary>& bs) {
    if (bs.empty()) fail(error_code::invalid_argument, "no boundaries to combine");
    boundary w = bs.front();
    for (std::size_t i = 1; i < bs.size(); ++i) {
        const auto& b = bs[i];
        if (std::abs(b.omega_design - w.omega_design) > 1e-9 * std::max(1.0, w.omega_design) || b.phases != w.phases)
            fail(error_code::invalid_argument, "worst-case boundary needs a shared design frequency and phase grid");
        if (b.conjugated != w.conjugated) {
            // bring the constraints onto the same phase convention
            for (auto q : b.constraints) w.constraints.push_back({q.alpha, std::conj(q.u), q.beta, std::conj(q.v)});
        } else {
            w.constraints.insert(w.constraints.end(), b.constraints.begin(), b.constraints.end());
        }
        for (std::size_t p = 0; p < w.allowed.size(); ++p) w.allowed[p] = intersect(w.allowed[p], b.allowed[p]);
        w.label += "+" + b.label;
    }
    if (bs.size() > 1) w.omega_source = w.omega_design;
    w.orientation = detail::classify_orientation(w.allowed);
    return w;
}

struct spec_set {
    std::optional<double> mu;
    std::optional<spec_function> delta1;
    std::optional<spec_function> delta2;
    reference_signal reference = reference_signal::step();
    std::vector<double> design_frequencies;
};

// Below pi/Ts: stability, dtrack and ctrack boundaries as the specs allow. Beyond:
// ctrack only, folded. Ctrack boundaries are labelled #1.. in frequency-list order.
inline std::vector<boundary> compute_boundaries(const dual_rate_loop& loop, const lifted_family& lf, const spec_set& s,
                                                const phase_grid& grid = {}) {
    std::vector<boundary> out;
    const double wn = loop.timing.slow_nyquist();
    for (std::size_t i = 0; i < s.design_frequencies.size(); ++i) {
        const double w = s.design_frequencies[i];
        const auto t = build_template(lf, w);
        const std::string tag = std::to_string(i + 1);
        if (w <= wn * (1 + 1e-12)) {
            if (s.mu) {
                auto b = stability_boundary(t, *s.mu, grid);
                b.label = "stability@" + tag;
                out.push_back(std::move(b));
            }
            if (s.delta1) {
                auto b = dtrack_boundary(t, (*s.delta1)(w), loop.prefilter_d.freq(w), grid);
                b.label = "dtrack@" + tag;
                out.push_back(std::move(b));
            }
        }
        if (s.delta2) {
            auto b = ctrack_boundary(t, make_ctrack_data(loop, s.reference, w, (*s.delta2)(w)), grid);
            b.label = "#" + tag;
            out.push_back(std::move(b));
        }
    }
    return out;
}

struct boundary_check {
    std::string label;
    boundary_kind kind;
    double omega_design;
    double omega_source;
    bool pass;
    double violation_db;
};

struct sweep_check {
    bool pass = true;
    double worst_excess_db = -std::numeric_limits<double>::infinity(); // max of 20 log10(value/bound)
    double worst_frequency = 0;
    int points = 0;
};

struct validation_report {
    std::vector<boundary_check> boundaries;
    std::optional<sweep_check> sensitivity;  // |S_L| <= min(delta1/|F_L|, 1/mu) on (0, pi/Ts]
    std::optional<sweep_check> continuous;   // |E/R| <= delta2 on (0, w_max]
    bool boundaries_pass() const {
        return std::all_of(boundaries.begin(), boundaries.end(), [](const auto& b) { return b.pass; });
    }
    bool all_pass() const {
        return boundaries_pass() && (!sensitivity || sensitivity->pass) && (!continuous || continuous->pass);
    }
};

inline validation_report validate_design(const rational_tf& l0, const std::vector<boundary>& bs) {
    validation_report r;
    for (const auto& b : bs) {
        const cplx v = l0.eval(std::polar(1.0, b.omega_source * *l0.ts()));
        // ctrack constraints act on the loop value at the source frequency
        const cplx at_design = b.conjugated ? std::conj(v) : v;
        const double viol = b.violation_db(at_design);
        r.boundaries.push_back({b.label, b.kind, b.omega_design, b.omega_source, viol == 0, viol});
    }
    return r;
}

// Boundary checks plus dense sweeps of |S_L| and |E/R| against the specs.
inline validation_report validate_design(const dual_rate_loop& loop, const std::vector<boundary>& bs, const spec_set& s,
                                         int points = 2000) {
    auto r = validate_design(loop.open_loop(), bs);
    const double wn = loop.timing.slow_nyquist();
    auto note = [](sweep_check& c, double value, double bound, double w) {
        ++c.points;
        const double ex = 20 * std::log10(value / bound);
        if (ex > c.worst_excess_db) {
            c.worst_excess_db = ex;
            c.worst_frequency = w;
        }
        if (value > bound * (1 + 1e-12)) c.pass = false;
    };
    if (s.mu || s.delta1) {
        sweep_check c;
        for (int i = 1; i <= points; ++i) {
            const double w = wn * i / points;
            double bound = std::numeric_limits<double>::infinity();
            if (s.mu) bound = 1 / *s.mu;
            if (s.delta1) bound = std::min(bound, (*s.delta1)(w) / std::abs(loop.prefilter_d.freq(w)));
            note(c, std::abs(s_l(loop, w)), bound, w);
        }
        r.sensitivity = c;
    }
    if (s.delta2) {
        double wmax = wn;
        for (double w : s.design_frequencies) wmax = std::max(wmax, w);
        sweep_check c;
        const int n = points * std::max(1, static_cast<int>(std::ceil(wmax / wn)));
        for (int i = 1; i <= n; ++i) {
            const double w = wmax * i / n;
            try {
                note(c, std::abs(continuous_sensitivity(loop, s.reference, w)), (*s.delta2)(w), w);
            } catch (const error& e) {
                if (e.code() != error_code::delta_support) throw;
            }
        }
        r.continuous = c;
    }
    return r;
}

struct sensitivity_peak {
    double peak;
    double frequency;
};

// max |S_L| over a grid of (0, pi/Ts] for every family member.
inline std::vector<sensitivity_peak> family_sensitivity_peaks(const lifted_family& lf, const rational_tf& g_slow, int points = 2000) {
    std::vector<sensitivity_peak> peaks;
    const double Ts = lf.timing.Ts;
    const double wn = lf.timing.slow_nyquist();
    for (const auto& pl : lf.lifted) {
        sensitivity_peak m{0, 0};
        for (int i = 1; i <= points; ++i) {
            const double w = wn * i / points;
            const cplx z = std::polar(1.0, w * Ts);
            const double v = 1.0 / std::abs(1.0 + g_slow.eval(z) * pl.eval(z));
            if (v > m.peak) m = {v, w};
        }
        peaks.push_back(m);
    }
    return peaks;
}

} // namespace drqft
