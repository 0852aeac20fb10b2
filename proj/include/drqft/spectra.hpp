#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "sampling.hpp"
#include "transfer_function.hpp"

namespace drqft {

// Slow controller G_L and prefilter F_L at Ts, fast controller G_R at Tf,
// continuous plant P and prefilter F. The lifted plant P_L is computed once.
struct dual_rate_loop {
    rational_tf plant;
    rational_tf g_fast;
    rational_tf g_slow;
    rational_tf prefilter_c;
    rational_tf prefilter_d;
    dual_rate_timing timing;
    rational_tf lifted;

    static dual_rate_loop make(const rational_tf& plant, const rational_tf& g_fast, const rational_tf& g_slow,
                               const dual_rate_timing& timing, std::optional<rational_tf> prefilter_c = std::nullopt,
                               std::optional<rational_tf> prefilter_d = std::nullopt) {
        timing.validate();
        dual_rate_loop l;
        l.plant = plant;
        l.timing = timing;
        l.g_fast = g_fast.ts() ? g_fast : g_fast.with_ts(timing.Tf);
        l.g_slow = g_slow.ts() ? g_slow : g_slow.with_ts(timing.Ts);
        if (l.plant.is_discrete()) fail(error_code::invalid_argument, "plant must be continuous");
        if (std::abs(*l.g_fast.ts() - timing.Tf) > 1e-12 * timing.Tf)
            fail(error_code::sample_time_mismatch, "fast controller period differs from Tf");
        if (std::abs(*l.g_slow.ts() - timing.Ts) > 1e-12 * timing.Ts)
            fail(error_code::sample_time_mismatch, "slow controller period differs from Ts");
        l.prefilter_c = prefilter_c.value_or(rational_tf::gain(1));
        if (prefilter_d) {
            l.prefilter_d = prefilter_d->ts() ? *prefilter_d : prefilter_d->with_ts(timing.Ts);
        } else {
            l.prefilter_d = detail::hold_equivalent(l.prefilter_c, timing.Ts);
        }
        l.lifted = lifted_plant(plant, l.g_fast, timing);
        return l;
    }

    dual_rate_loop with_slow(const rational_tf& g) const {
        dual_rate_loop l = *this;
        l.g_slow = g.ts() ? g : g.with_ts(timing.Ts);
        return l;
    }

    rational_tf open_loop() const { return series(g_slow, lifted); }
};

// S_L = 1 / (1 + G_L P_L) at z = e^{jwTs}.
inline cplx s_l(const dual_rate_loop& loop, double w) {
    const cplx z = std::polar(1.0, w * loop.timing.Ts);
    const cplx pl = loop.lifted.eval(z);
    cplx gl;
    try {
        gl = loop.g_slow.eval(z);
    } catch (const error& e) {
        if (e.code() == error_code::pole_proximity) return 0.0;
        throw;
    }
    const cplx d = 1.0 + gl * pl;
    if (std::abs(d) < 1e-14 * (1 + std::abs(gl * pl))) fail(error_code::singular_loop, "1 + G_L P_L vanishes");
    return 1.0 / d;
}

namespace detail {

// G_L S_L, with its limit 1/P_L where G_L has a pole on the unit circle.
inline cplx gl_sl(const dual_rate_loop& loop, double w) {
    const cplx z = std::polar(1.0, w * loop.timing.Ts);
    const cplx pl = loop.lifted.eval(z);
    try {
        const cplx gl = loop.g_slow.eval(z);
        const cplx d = 1.0 + gl * pl;
        if (std::abs(d) < 1e-14 * (1 + std::abs(gl * pl))) fail(error_code::singular_loop, "1 + G_L P_L vanishes");
        return gl / d;
    } catch (const error& e) {
        if (e.code() == error_code::pole_proximity) return 1.0 / pl;
        throw;
    }
}

} // namespace detail

// Complementary sensitivity from r^{Ts} to y, normalized so that T(0) = 1 for an
// integrating loop: (1/Ts) P G_R H_Ts G_L S_L. The harmonic response of y to
// e^{jw0 t} is exactly sum_k F_L T(j(w0 + k 2pi/Ts)).
inline cplx comp_sensitivity(const dual_rate_loop& loop, double w) {
    const auto& t = loop.timing;
    return loop.plant.freq(w) * loop.g_fast.freq(w) * hold_response(t.Ts, w) / t.Ts * detail::gl_sl(loop, w);
}

inline bool on_delta_support(const reference_signal& ref, double Ts, double w) {
    const double ws = 2 * std::numbers::pi / Ts;
    const double tol = 1e-9 * std::max(1.0, std::abs(w));
    for (double d : delta_frequencies(ref)) {
        for (int sgn : {1, -1}) {
            const double x = (w - sgn * d) / ws;
            if (std::abs(x - std::round(x)) * ws < tol) return true;
        }
    }
    return false;
}

// Y = T F_L R^{Ts} on the rational parts. The Fourier transform of the
// simulated output equals Ts times this value.
inline cplx output_spectrum(const dual_rate_loop& loop, const reference_signal& ref, double w) {
    if (on_delta_support(ref, loop.timing.Ts, w))
        fail(error_code::delta_support, "output spectrum requested on the reference delta support");
    const rational_tf rs = starred_transform(ref, loop.timing.Ts);
    return comp_sensitivity(loop, w) * loop.prefilter_d.freq(w) * rs.freq(w);
}

// Slow-sample output spectrum (1 - S_L) F_L R^{Ts}.
inline cplx slow_output_spectrum(const dual_rate_loop& loop, const reference_signal& ref, double w) {
    if (on_delta_support(ref, loop.timing.Ts, w))
        fail(error_code::delta_support, "output spectrum requested on the reference delta support");
    const rational_tf rs = starred_transform(ref, loop.timing.Ts);
    return (1.0 - s_l(loop, w)) * loop.prefilter_d.freq(w) * rs.freq(w);
}

struct harmonic_term {
    double frequency;
    cplx amplitude;
};

struct harmonic_response {
    double w0 = 0;
    std::vector<harmonic_term> terms; // k = -K..K, frequency w0 + k 2pi/Ts
    double tail_bound = 0;            // sum of |F_L T| over the next 64 harmonics on each side

    // Response to the reference Re(c e^{j w0 t}); c = 1 is cos(w0 t), c = -jA is A sin(w0 t).
    double synthesize(double t, cplx c = 1.0) const {
        cplx acc = 0;
        for (const auto& h : terms) acc += h.amplitude * std::polar(1.0, h.frequency * t);
        return (c * acc).real();
    }
};

inline harmonic_response make_harmonic_response(const dual_rate_loop& loop, double w0, int K) {
    if (K < 0) fail(error_code::invalid_argument, "harmonic count must be non-negative");
    harmonic_response h;
    h.w0 = w0;
    const double ws = loop.timing.slow_rate();
    const cplx fl = loop.prefilter_d.freq(w0);
    for (int k = -K; k <= K; ++k) {
        const double wk = w0 + k * ws;
        h.terms.push_back({wk, fl * comp_sensitivity(loop, wk)});
    }
    for (int k = K + 1; k <= K + 64; ++k)
        h.tail_bound += std::abs(fl) * (std::abs(comp_sensitivity(loop, w0 + k * ws)) + std::abs(comp_sensitivity(loop, w0 - k * ws)));
    return h;
}

// E/R = F - T F_L R^{Ts}/R. Where R^{Ts} and R both carry a delta at w (sinusoidal
// references at their own frequency) the ratio is that of the delta coefficients.
inline cplx continuous_sensitivity(const dual_rate_loop& loop, const reference_signal& ref, double w) {
    if (!(w > 0)) fail(error_code::invalid_argument, "continuous sensitivity needs w > 0");
    const cplx ratio = reference_ratio(ref, loop.timing.Ts, w);
    return loop.prefilter_c.freq(w) - comp_sensitivity(loop, w) * loop.prefilter_d.freq(w) * ratio;
}

} // namespace drqft
