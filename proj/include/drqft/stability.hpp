#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "sampling.hpp"
#include "spectra.hpp"
#include "transfer_function.hpp"

namespace drqft {

struct assumption_item {
    bool pass = true;
    std::string witness;
};

struct assumption_report {
    std::array<assumption_item, 4> items;
    bool all() const {
        return std::all_of(items.begin(), items.end(), [](const auto& i) { return i.pass; });
    }
};

namespace detail {

inline std::string fmt_root(cplx r) {
    std::ostringstream os;
    os.precision(6);
    os << r.real() << (r.imag() < 0 ? "-" : "+") << std::abs(r.imag()) << "j";
    return os.str();
}

// Unstable-region root pairs (one from each list) closer than tol.
inline std::string unstable_cancellation(const std::vector<cplx>& a, const std::vector<cplx>& b, double tol) {
    for (const auto& x : a) {
        if (std::abs(x) < 1 - 1e-9) continue;
        for (const auto& y : b)
            if (std::abs(x - y) < tol * std::max(1.0, std::abs(x))) return fmt_root(x);
    }
    return {};
}

} // namespace detail

inline assumption_report check_assumptions(const dual_rate_loop& loop) {
    assumption_report rep;
    const auto& t = loop.timing;
    const double wf = 2 * std::numbers::pi / t.Tf;

    const auto pp = loop.plant.poles();
    for (std::size_t i = 0; i < pp.size() && rep.items[0].pass; ++i) {
        for (std::size_t j = i + 1; j < pp.size(); ++j) {
            if (pp[i].real() < -1e-12 || pp[j].real() < -1e-12) continue;
            if (std::abs(pp[i].real() - pp[j].real()) > 1e-9 * std::max(1.0, std::abs(pp[i]))) continue;
            const double k = (pp[i].imag() - pp[j].imag()) / wf;
            if (std::abs(k) > 0.5 && std::abs(k - std::round(k)) < 1e-9) {
                rep.items[0] = {false, detail::fmt_root(pp[i]) + " and " + detail::fmt_root(pp[j])};
                break;
            }
        }
    }

    const rational_tf pr = zoh_discretize(loop.plant, t.Tf);
    const auto prp = pr.poles();
    for (std::size_t i = 0; i < prp.size() && rep.items[1].pass; ++i) {
        if (std::abs(prp[i]) < 1 - 1e-12) continue;
        for (std::size_t j = 0; j < prp.size(); ++j) {
            if (i == j || std::abs(prp[j]) < 1 - 1e-12) continue;
            const double scale = std::max(1.0, std::abs(prp[i]));
            if (std::abs(prp[i] - prp[j]) < 1e-9 * scale) continue;
            if (std::abs(std::pow(prp[i], t.N) - std::pow(prp[j], t.N)) < 1e-9 * std::pow(scale, t.N)) {
                rep.items[1] = {false, detail::fmt_root(prp[i]) + " and " + detail::fmt_root(prp[j])};
                break;
            }
        }
    }

    const double tol = 1e-8;
    auto grz = loop.g_fast.zeros(), grp = loop.g_fast.poles();
    auto prz = pr.zeros();
    auto glz = loop.g_slow.zeros(), glp = loop.g_slow.poles();
    auto plz = loop.lifted.zeros(), plp = loop.lifted.poles();
    std::string w = detail::unstable_cancellation(prp, grz, tol);
    if (w.empty()) w = detail::unstable_cancellation(grp, prz, tol);
    if (w.empty()) w = detail::unstable_cancellation(plp, glz, tol);
    if (w.empty()) w = detail::unstable_cancellation(glp, plz, tol);
    if (!w.empty()) rep.items[2] = {false, "cancellation at " + w};

    for (const auto& p : grp) {
        if (std::abs(p) >= 1) {
            rep.items[3] = {false, "fast controller pole " + detail::fmt_root(p)};
            break;
        }
    }
    return rep;
}

struct nichols_sample {
    double w;          // rad/s; zero on the indentation arc
    double phase_deg;  // unwrapped
    double gain_db;    // +inf on the indentation arc
    bool arc = false;
};

struct nichols_curve {
    std::vector<nichols_sample> samples;
    bool full = false;
    int integrators = 0; // multiplicity of the z = 1 pole
    double Ts = 1;
};

namespace detail {

struct z1_structure {
    int multiplicity = 0;
    cplx limit = 0; // lim (z-1)^m L(z)
};

inline z1_structure z1_poles(const rational_tf& L) {
    auto count = [](const polynomial& p) {
        int m = 0;
        for (const auto& r : p.roots())
            if (std::abs(r - 1.0) < 1e-6) ++m;
        return m;
    };
    const int md = count(L.den());
    const int mn = L.num().is_zero() ? 0 : count(L.num());
    z1_structure s;
    s.multiplicity = std::max(0, md - mn);
    if (s.multiplicity == 0) return s;
    polynomial n = L.num(), d = L.den();
    const polynomial f{1.0, -1.0};
    for (int i = 0; i < md; ++i) d = d.quotient(f);
    for (int i = 0; i < mn; ++i) n = n.quotient(f);
    s.limit = n(1.0) / d(1.0);
    return s;
}

inline double wrap180(double d) {
    d = std::fmod(d + 180.0, 360.0);
    if (d < 0) d += 360.0;
    return d - 180.0;
}

inline double to_db(double mag) { return 20 * std::log10(mag); }

} // namespace detail

// Unwrapped Nichols curve of a discrete open loop over [0, pi/Ts] (half) or
// [0, 2pi/Ts) (full), refined where the phase step exceeds 30 degrees. A pole of
// multiplicity m at z = 1 is bypassed by an arc sweeping m*90 degrees per half.
inline nichols_curve nichols_curve_of(const rational_tf& L, int grid_points = 512, bool full = false) {
    if (!L.ts()) fail(error_code::invalid_argument, "Nichols curve needs a discrete open loop");
    const double Ts = *L.ts();
    const double wn = std::numbers::pi / Ts;
    const double wend = full ? 2 * wn : wn;
    for (const auto& p : L.poles()) {
        if (std::abs(std::abs(p) - 1) < 1e-9 && std::abs(p - 1.0) > 1e-6)
            fail(error_code::on_circle_pole, "open-loop pole on the unit circle at " + detail::fmt_root(p));
    }
    const auto z1 = detail::z1_poles(L);
    nichols_curve c;
    c.full = full;
    c.integrators = z1.multiplicity;
    c.Ts = Ts;

    // the closing sample of a full curve is z = 1 itself, so it lands on the same
    // real value as the start and the two endpoint half-counts pair up
    auto value = [&](double w) { return full && w == wend ? L.eval(cplx(1.0)) : L.eval(std::polar(1.0, w * Ts)); };
    const double w0 = z1.multiplicity > 0 ? wn * 1e-7 : 0.0;
    const double wlast = full && z1.multiplicity > 0 ? wend * (1 - 1e-7) : wend;

    std::vector<double> grid;
    const int G = std::max(16, grid_points);
    for (int i = 0; i < G; ++i) grid.push_back(w0 + (wlast - w0) * double(i) / double(G - 1));
    if (w0 > 0) {
        for (double x = w0 * 10; x < grid[1]; x *= 10) grid.push_back(x);
        std::sort(grid.begin(), grid.end());
    }

    struct pt {
        double w;
        cplx v;
    };
    std::vector<pt> pts;
    pts.reserve(grid.size() * 2);
    for (double w : grid) pts.push_back({w, value(w)});
    const double min_width = std::ldexp(wn, -20);
    for (bool refined = true; refined;) {
        refined = false;
        std::vector<pt> next;
        next.reserve(pts.size() * 2);
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            next.push_back(pts[i]);
            const double dphi = std::abs(detail::wrap180(std::arg(pts[i + 1].v / pts[i].v) * 180 / std::numbers::pi));
            if (dphi > 30 && pts[i + 1].w - pts[i].w > min_width) {
                const double wm = 0.5 * (pts[i].w + pts[i + 1].w);
                next.push_back({wm, value(wm)});
                refined = true;
            }
        }
        next.push_back(pts.back());
        pts.swap(next);
    }

    std::vector<nichols_sample> body;
    double prev = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double ph = std::arg(pts[i].v) * 180 / std::numbers::pi;
        const double un = i == 0 ? ph : prev + detail::wrap180(ph - prev);
        prev = un;
        body.push_back({pts[i].w, un, detail::to_db(std::abs(pts[i].v)), false});
    }

    if (z1.multiplicity > 0) {
        const double m = z1.multiplicity;
        double phk = std::arg(z1.limit) * 180 / std::numbers::pi;
        // place the arc end (phk - 90m) on the branch of the first sample
        const double end = body.front().phase_deg + detail::wrap180((phk - 90 * m) - body.front().phase_deg);
        phk = end + 90 * m;
        const int arc_n = 8 * z1.multiplicity + 1;
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<nichols_sample> arc;
        for (int i = 0; i < arc_n; ++i) arc.push_back({0.0, phk - 90 * m * double(i) / double(arc_n - 1), inf, true});
        if (full) {
            // the closing arc, from w = 2pi/Ts^- back to the start
            const double back = body.back().phase_deg;
            const double start = back + detail::wrap180((phk + 90 * m) - back);
            const double shift = start - (phk + 90 * m);
            for (int i = 0; i < arc_n; ++i)
                body.push_back({2 * wn, start - 90 * m * double(i) / double(arc_n - 1), inf, true});
            (void)shift;
        }
        arc.insert(arc.end(), body.begin(), body.end());
        body.swap(arc);
    }
    c.samples = std::move(body);
    return c;
}

struct crossing_count {
    double net = 0;              // signed, half-integer
    bool critical_point = false; // the curve passes through (-180 deg, 0 dB)
};

// Net signed crossings of the ray {phase = -180 + 360k, gain > 0 dB}.
// Left-to-right (increasing phase) counts +1; curve endpoints on the ray count 1/2.
inline crossing_count count_crossings(const nichols_curve& c) {
    crossing_count out;
    const auto& s = c.samples;
    if (s.size() < 2) return out;
    double lo = s.front().phase_deg, hi = lo;
    for (const auto& x : s) {
        lo = std::min(lo, x.phase_deg);
        hi = std::max(hi, x.phase_deg);
    }
    const double eps = 1e-9;
    const int k0 = static_cast<int>(std::floor((lo + 180) / 360)) - 1;
    const int k1 = static_cast<int>(std::ceil((hi + 180) / 360)) + 1;
    const double crit_db = 1e-7;
    for (int k = k0; k <= k1; ++k) {
        const double lev = -180 + 360.0 * k;
        auto side = [&](const nichols_sample& x) {
            const double d = x.phase_deg - lev;
            return std::abs(d) < eps ? 0 : (d > 0 ? 1 : -1);
        };
        // first and last samples
        const int n = static_cast<int>(s.size());
        int first_nz = -1;
        for (int i = 0; i < n; ++i)
            if (side(s[i]) != 0) { first_nz = i; break; }
        if (first_nz < 0) continue; // entire curve on the level line
        if (side(s[0]) == 0) {
            if (std::abs(s[0].gain_db) < crit_db) out.critical_point = true;
            else if (s[0].gain_db > 0) out.net += 0.5 * side(s[first_nz]);
        }
        int last_nz = -1;
        for (int i = n - 1; i >= 0; --i)
            if (side(s[i]) != 0) { last_nz = i; break; }
        if (side(s[n - 1]) == 0) {
            if (std::abs(s[n - 1].gain_db) < crit_db) out.critical_point = true;
            else if (s[n - 1].gain_db > 0) out.net += -0.5 * side(s[last_nz]);
        }
        // interior transitions between consecutive off-level samples
        int a = first_nz;
        for (int b = first_nz + 1; b <= last_nz; ++b) {
            if (side(s[b]) == 0) continue;
            const int sa = side(s[a]), sb = side(s[b]);
            double g;
            if (b == a + 1) {
                const double t = (lev - s[a].phase_deg) / (s[b].phase_deg - s[a].phase_deg);
                if (std::isinf(s[a].gain_db) || std::isinf(s[b].gain_db)) g = std::numeric_limits<double>::infinity();
                else g = s[a].gain_db + t * (s[b].gain_db - s[a].gain_db);
            } else {
                g = -std::numeric_limits<double>::infinity();
                for (int i = a + 1; i < b; ++i) g = std::max(g, s[i].gain_db);
            }
            if (sa != sb) {
                if (std::abs(g) < crit_db) out.critical_point = true;
                else if (g > 0) out.net += sb;
            } else if (b > a + 1 && g > 0) {
                fail(error_code::tangential_crossing, "curve touches the critical ray without crossing");
            }
            a = b;
        }
    }
    return out;
}

enum class oracle_status { stable, unstable, marginal_undetermined };

inline std::string_view to_string(oracle_status s) {
    switch (s) {
    case oracle_status::stable: return "stable";
    case oracle_status::unstable: return "unstable";
    case oracle_status::marginal_undetermined: return "marginal_undetermined";
    }
    return "unknown";
}

struct closed_loop_result {
    std::vector<cplx> poles;
    double max_modulus = 0;
    oracle_status status = oracle_status::stable;
};

// Roots of num(L) + den(L).
inline closed_loop_result closed_loop_poles(const rational_tf& L) {
    closed_loop_result r;
    r.poles = (L.num() + L.den()).roots();
    for (const auto& p : r.poles) r.max_modulus = std::max(r.max_modulus, std::abs(p));
    if (r.max_modulus > 1 + 1e-9) r.status = oracle_status::unstable;
    else if (r.max_modulus >= 1 - 1e-9) r.status = oracle_status::marginal_undetermined;
    else r.status = oracle_status::stable;
    return r;
}

inline closed_loop_result closed_loop_poles(const dual_rate_loop& loop) { return closed_loop_poles(loop.open_loop()); }

struct margin_pair {
    double gm_db = std::numeric_limits<double>::infinity();
    double pm_deg = std::numeric_limits<double>::infinity();
    double gm_frequency = std::numeric_limits<double>::quiet_NaN();
    double pm_frequency = std::numeric_limits<double>::quiet_NaN();
};

// Classical margins read off the half curve: the phase crossing nearest 0 dB and
// the gain crossover with the smallest phase distance to the critical line.
inline margin_pair margins(const nichols_curve& c) {
    margin_pair m;
    double best_gm = std::numeric_limits<double>::infinity();
    double best_pm = std::numeric_limits<double>::infinity();
    const auto& s = c.samples;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i].arc || s[i + 1].arc) continue;
        const auto& a = s[i];
        const auto& b = s[i + 1];
        const int k0 = static_cast<int>(std::floor((std::min(a.phase_deg, b.phase_deg) + 180) / 360));
        const int k1 = static_cast<int>(std::ceil((std::max(a.phase_deg, b.phase_deg) + 180) / 360));
        for (int k = k0; k <= k1; ++k) {
            const double lev = -180 + 360.0 * k;
            if ((a.phase_deg - lev) * (b.phase_deg - lev) > 0 || a.phase_deg == b.phase_deg) continue;
            const double t = (lev - a.phase_deg) / (b.phase_deg - a.phase_deg);
            if (t < 0 || t > 1) continue;
            const double g = a.gain_db + t * (b.gain_db - a.gain_db);
            if (std::abs(g) < std::abs(best_gm)) {
                best_gm = g;
                m.gm_db = -g;
                m.gm_frequency = a.w + t * (b.w - a.w);
            }
        }
        if (a.gain_db * b.gain_db <= 0 && a.gain_db != b.gain_db) {
            const double t = a.gain_db / (a.gain_db - b.gain_db);
            const double ph = a.phase_deg + t * (b.phase_deg - a.phase_deg);
            const double pm = detail::wrap180(ph + 180);
            if (std::abs(pm) < std::abs(best_pm)) {
                best_pm = pm;
                m.pm_deg = pm;
                m.pm_frequency = a.w + t * (b.w - a.w);
            }
        }
    }
    return m;
}

struct worst_case_margin {
    double gm_linear;
    double gm_db;
    double pm_deg;
};

// Margins guaranteed by |1 + L| >= mu: PM = 2 asin(mu/2), GM = 1/(1 - mu).
inline worst_case_margin worst_case_margins(double mu) {
    if (!(mu > 0) || !(mu < 1)) fail(error_code::invalid_argument, "mu must lie in (0, 1)");
    const double gm = 1 / (1 - mu);
    return {gm, detail::to_db(gm), 2 * std::asin(mu / 2) * 180 / std::numbers::pi};
}

inline int unstable_open_loop_poles(const rational_tf& L) {
    int n = 0;
    for (const auto& p : L.poles())
        if (std::abs(p) >= 1 - 1e-12 && std::abs(p - 1.0) > 1e-6) ++n;
    return n;
}

struct stability_verdict {
    bool stable = false;
    double net_crossings = 0;      // half curve
    double required_crossings = 0; // half the unstable open-loop pole count
    bool critical_point = false;
    assumption_report assumptions;
    margin_pair margins;
    closed_loop_result oracle;
    bool oracle_agrees = true;
    // The crossing test presumes the assumption items; when one fails, a
    // disagreement with the oracle is explained rather than a defect.
    bool applicable = true;
    bool defect() const { return applicable && !oracle_agrees; }
};

inline stability_verdict assess(const rational_tf& L, int grid_points = 512) {
    stability_verdict v;
    const auto curve = nichols_curve_of(L, grid_points, false);
    const auto cc = count_crossings(curve);
    v.net_crossings = cc.net;
    v.critical_point = cc.critical_point;
    v.required_crossings = 0.5 * unstable_open_loop_poles(L);
    v.stable = !cc.critical_point && std::abs(v.net_crossings - v.required_crossings) < 1e-9;
    v.margins = margins(curve);
    v.oracle = closed_loop_poles(L);
    if (v.oracle.status != oracle_status::marginal_undetermined)
        v.oracle_agrees = v.stable == (v.oracle.status == oracle_status::stable);
    return v;
}

inline stability_verdict assess(const dual_rate_loop& loop, int grid_points = 512) {
    auto v = assess(loop.open_loop(), grid_points);
    v.assumptions = check_assumptions(loop);
    v.applicable = v.assumptions.all();
    return v;
}

inline std::string nichols_csv(const nichols_curve& c) {
    std::ostringstream os;
    os.precision(12);
    os << "omega,phase_deg,gain_db\n";
    for (const auto& s : c.samples) os << s.w << ',' << s.phase_deg << ',' << s.gain_db << '\n';
    return os.str();
}

} // namespace drqft
