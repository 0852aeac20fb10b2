#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "errors.hpp"
#include "transfer_function.hpp"

namespace drqft {

struct dual_rate_timing {
    double Ts = 1;
    double Tf = 1;
    int N = 1;

    static dual_rate_timing from_slow(double Ts, int N) {
        if (!(Ts > 0) || N < 1) fail(error_code::invalid_argument, "timing needs Ts > 0 and N >= 1");
        return {Ts, Ts / N, N};
    }

    void validate() const {
        if (!(Ts > 0) || !(Tf > 0) || N < 1) fail(error_code::invalid_argument, "timing needs positive periods and N >= 1");
        if (std::abs(Tf * N - Ts) > 1e-12 * Ts) fail(error_code::invalid_argument, "Tf must equal Ts/N");
    }

    double slow_nyquist() const { return std::numbers::pi / Ts; }
    double slow_rate() const { return 2 * std::numbers::pi / Ts; }
};

using cplx = std::complex<double>;

// (1 - e^{-j w T}) / (j w), written to avoid cancellation for small w T.
inline cplx hold_response(double T, double w) {
    if (w == 0) return T;
    const double th = w * T;
    const double s = std::sin(th / 2);
    return cplx(2 * s * s, std::sin(th)) / cplx(0, w);
}

// (1 - e^{-j w N Tf}) / (1 - e^{-j w Tf}); N at the removable singularities.
inline cplx upsampler_response(const dual_rate_timing& t, double w) {
    auto one_minus = [](double th) {
        const double s = std::sin(th / 2);
        return cplx(2 * s * s, std::sin(th));
    };
    const cplx den = one_minus(w * t.Tf);
    if (std::abs(den) < 1e-13) return double(t.N);
    return one_minus(w * t.N * t.Tf) / den;
}

namespace detail {

// Zero-order-hold equivalent of a proper continuous system via the augmented exponential.
inline rational_tf hold_equivalent(const rational_tf& p, double T) {
    if (p.is_discrete()) fail(error_code::invalid_argument, "hold equivalent of a discrete system");
    if (!(T > 0)) fail(error_code::invalid_argument, "sample period must be positive");
    if (p.is_static()) return rational_tf(p.num(), p.den(), T);
    const state_space ss = to_state_space(p);
    const auto n = ss.A.rows();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 1, n + 1);
    M.topLeftCorner(n, n) = ss.A * T;
    M.topRightCorner(n, 1) = ss.B * T;
    const Eigen::MatrixXd E = M.exp();
    state_space d;
    d.A = E.topLeftCorner(n, n);
    d.B = E.topRightCorner(n, 1);
    d.C = ss.C;
    d.D = ss.D;
    d.ts = T;
    return ss_to_tf(d);
}

} // namespace detail

inline rational_tf zoh_discretize(const rational_tf& p, double T) {
    if (!p.is_strictly_proper()) fail(error_code::improper_tf, "zero-order hold needs a strictly proper plant");
    return detail::hold_equivalent(p, T);
}

// Slow-rate equivalent of a fast-rate system whose input is held for N fast periods
// and whose output is read every N-th sample: A^N, sum of A^i B, C, D.
inline rational_tf lift_downsample(const rational_tf& m, int N) {
    if (!m.is_discrete()) fail(error_code::invalid_argument, "lifting needs a discrete system");
    if (N < 1) fail(error_code::invalid_argument, "N must be at least 1");
    if (!m.is_proper()) fail(error_code::improper_tf, "lifting needs a proper system");
    const double Ts = *m.ts() * N;
    if (N == 1) return m;
    const state_space ss = to_state_space(m);
    state_space l;
    const auto n = ss.A.rows();
    l.A = Eigen::MatrixXd::Identity(n, n);
    l.B = Eigen::MatrixXd::Zero(n, 1);
    for (int i = 0; i < N; ++i) {
        l.B += l.A * ss.B;
        l.A = l.A * ss.A;
    }
    l.C = ss.C;
    l.D = ss.D;
    l.ts = Ts;
    return ss_to_tf(l);
}

// P_L: ZOH of P at Tf, in series with G_R, lifted to the slow rate.
inline rational_tf lifted_plant(const rational_tf& p, const rational_tf& g_fast, const dual_rate_timing& t) {
    t.validate();
    const rational_tf pr = zoh_discretize(p, t.Tf);
    const rational_tf gr = g_fast.is_static() && !g_fast.ts() ? g_fast.with_ts(t.Tf) : g_fast;
    return lift_downsample(series(pr, gr), t.N);
}

struct aliasing_sum {
    cplx value;
    double certificate; // gap between the last two extrapolation orders
    double last_term;   // |t_M + t_-M| at the largest M used
    int terms;          // M of the largest partial sum
};

// Aliasing sum (1/Ts) sum_n P G_R H_Ts at w + n 2pi/Ts. Symmetric partial sums
// over whole periods of G_R at M, 2M and 4M are Richardson-extrapolated in 1/M,
// which matters for plants that roll off only as 1/s.
inline aliasing_sum p_l_frequency_sum(const rational_tf& p, const rational_tf& g_fast, const dual_rate_timing& t,
                                      double w, int M) {
    if (M < 1) fail(error_code::invalid_argument, "need at least one aliasing term");
    M = ((M + t.N - 1) / t.N) * t.N;
    auto term = [&](int n) {
        const double wn = w + n * t.slow_rate();
        return p.freq(wn) * g_fast.freq(wn) * hold_response(t.Ts, wn) / t.Ts;
    };
    cplx sum = term(0), last = 0;
    cplx s[3];
    int n = 0;
    for (int k = 0; k < 3; ++k) {
        const int upto = M << k;
        for (++n; n <= upto; ++n) {
            last = term(n) + term(-n);
            sum += last;
        }
        --n;
        s[k] = sum;
    }
    const cplx r1a = 2.0 * s[1] - s[0], r1b = 2.0 * s[2] - s[1];
    const cplx r2 = (4.0 * r1b - r1a) / 3.0;
    const double cert = std::abs(r2 - r1b);
    if (cert > 1e-6 * std::abs(r2))
        fail(error_code::non_convergence, "aliasing sum not converged at " + std::to_string(4 * M) + " terms");
    return {r2, cert, std::abs(last), 4 * M};
}

enum class reference_kind { step, ramp, sinusoid, damped_sinusoid, exponential };

// Causal reference with rational Laplace transform. b is a frequency in rad/s,
// a a decay rate; a defaults to zero when not given.
struct reference_signal {
    reference_kind kind = reference_kind::step;
    double amplitude = 1;
    double b = 0;
    double a = 0;

    static reference_signal step(double A = 1) { return {reference_kind::step, A, 0, 0}; }
    static reference_signal ramp(double A = 1) { return {reference_kind::ramp, A, 0, 0}; }
    static reference_signal sinusoid(double A, double b) { return {reference_kind::sinusoid, A, b, 0}; }
    static reference_signal damped_sinusoid(double A, double b, double a = 0) {
        return {reference_kind::damped_sinusoid, A, b, a};
    }
    static reference_signal exponential(double A, double a) { return {reference_kind::exponential, A, 0, a}; }

    rational_tf laplace() const {
        switch (kind) {
        case reference_kind::step: return rational_tf(polynomial{amplitude}, polynomial{1, 0});
        case reference_kind::ramp: return rational_tf(polynomial{amplitude}, polynomial{1, 0, 0});
        case reference_kind::sinusoid: return rational_tf(polynomial{amplitude * b}, polynomial{1, 0, b * b});
        case reference_kind::damped_sinusoid:
            return rational_tf(polynomial{amplitude * b}, polynomial{1, 2 * a, a * a + b * b});
        case reference_kind::exponential: return rational_tf(polynomial{amplitude}, polynomial{1, a});
        }
        return {};
    }

    double value(double t) const {
        if (t < 0) return 0;
        switch (kind) {
        case reference_kind::step: return amplitude;
        case reference_kind::ramp: return amplitude * t;
        case reference_kind::sinusoid: return amplitude * std::sin(b * t);
        case reference_kind::damped_sinusoid: return amplitude * std::exp(-a * t) * std::sin(b * t);
        case reference_kind::exponential: return amplitude * std::exp(-a * t);
        }
        return 0;
    }
};

namespace detail {

using cpoly = std::vector<cplx>; // highest degree first

inline cpoly cmul(const cpoly& a, const cpoly& b) {
    cpoly c(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
    return c;
}

inline cpoly cadd(const cpoly& a, const cpoly& b) {
    const std::size_t n = std::max(a.size(), b.size());
    cpoly c(n, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) c[n - a.size() + i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) c[n - b.size() + i] += b[i];
    return c;
}

inline cplx ceval(const cpoly& p, cplx x) {
    cplx acc = 0;
    for (const auto& v : p) acc = acc * x + v;
    return acc;
}

inline cpoly cderiv(const cpoly& p) {
    if (p.size() <= 1) return {0.0};
    cpoly d(p.size() - 1);
    const std::size_t n = p.size() - 1;
    for (std::size_t i = 0; i < n; ++i) d[i] = p[i] * double(n - i);
    return d;
}

// Divide by (x - r), discarding the remainder.
inline cpoly cdeflate(const cpoly& p, cplx r) {
    cpoly q(p.size() - 1);
    cplx acc = 0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        acc = acc * r + p[i];
        q[i] = acc;
    }
    return q;
}

inline cpoly to_cpoly(const polynomial& p) { return cpoly(p.coeffs().begin(), p.coeffs().end()); }

struct pole_cluster {
    cplx p;
    int multiplicity;
};

inline std::vector<pole_cluster> cluster_roots(const std::vector<cplx>& roots, double tol = 1e-6) {
    std::vector<pole_cluster> out;
    std::vector<bool> used(roots.size(), false);
    for (std::size_t i = 0; i < roots.size(); ++i) {
        if (used[i]) continue;
        cplx sum = roots[i];
        int m = 1;
        used[i] = true;
        for (std::size_t j = i + 1; j < roots.size(); ++j) {
            if (!used[j] && std::abs(roots[j] - roots[i]) < tol * std::max(1.0, std::abs(roots[i]))) {
                used[j] = true;
                sum += roots[j];
                ++m;
            }
        }
        out.push_back({sum / double(m), m});
    }
    return out;
}

} // namespace detail

// z-transform of the sampled signal r(kTs), k >= 0, by residues.
inline rational_tf starred_transform(const reference_signal& ref, double Ts) {
    using namespace detail;
    const rational_tf R = ref.laplace();
    const auto clusters = cluster_roots(R.poles());
    const cpoly num = to_cpoly(R.num());
    const cpoly den = to_cpoly(R.den());
    std::vector<cpoly> factors; // per cluster, (z - lambda)^m
    std::vector<cpoly> numerators;
    for (const auto& c : clusters) {
        if (c.multiplicity > 2) fail(error_code::unsupported_multiplicity, "reference pole of multiplicity >= 3");
        const cplx lam = std::exp(c.p * Ts);
        if (c.multiplicity == 1) {
            const cplx res = ceval(num, c.p) / ceval(cderiv(den), c.p);
            factors.push_back({1.0, -lam});
            numerators.push_back({res, 0.0});
        } else {
            const cpoly q = cdeflate(cdeflate(den, c.p), c.p);
            const cplx qv = ceval(q, c.p);
            const cplx c2 = ceval(num, c.p) / qv;
            const cplx c1 = (ceval(cderiv(num), c.p) * qv - ceval(num, c.p) * ceval(cderiv(q), c.p)) / (qv * qv);
            // c1 z/(z-lam) + c2 Ts lam z/(z-lam)^2 over (z-lam)^2
            const cpoly f = cmul({1.0, -lam}, {1.0, -lam});
            const cpoly n1 = cmul({c1, 0.0}, {1.0, -lam});
            const cpoly n2 = {0.0, c2 * Ts * lam, 0.0};
            factors.push_back(f);
            numerators.push_back(cadd(n1, n2));
        }
    }
    cpoly dz{1.0};
    for (const auto& f : factors) dz = cmul(dz, f);
    cpoly nz{0.0};
    for (std::size_t i = 0; i < factors.size(); ++i) {
        cpoly term = numerators[i];
        for (std::size_t j = 0; j < factors.size(); ++j)
            if (j != i) term = cmul(term, factors[j]);
        nz = cadd(nz, term);
    }
    std::vector<double> nr, dr;
    for (const auto& v : nz) nr.push_back(v.real());
    for (const auto& v : dz) dr.push_back(v.real());
    return rational_tf(polynomial(nr), polynomial(dr), Ts);
}

// Frequencies (rad/s, >= 0) where the reference spectrum carries delta terms.
inline std::vector<double> delta_frequencies(const reference_signal& ref) {
    std::vector<double> out;
    for (const auto& c : detail::cluster_roots(ref.laplace().poles()))
        if (std::abs(c.p.real()) < 1e-12 && c.p.imag() >= -1e-12) out.push_back(std::abs(c.p.imag()));
    return out;
}

// R^{Ts}(e^{jwTs}) / R(jw) on the rational parts. Where both spectra carry a delta
// at w, the ratio of the delta coefficients is returned, which is 1/Ts.
inline cplx reference_ratio(const reference_signal& ref, double Ts, double w) {
    const rational_tf R = ref.laplace();
    const rational_tf Rs = starred_transform(ref, Ts);
    const double tol = 1e-9 * std::max(1.0, std::abs(w));
    for (double d : delta_frequencies(ref)) {
        if (std::abs(w - d) < tol) return 1.0 / Ts;
    }
    for (double d : delta_frequencies(ref)) {
        const double ws = 2 * std::numbers::pi / Ts;
        for (int sgn : {1, -1}) {
            const double x = (w - sgn * d) / ws;
            if (std::abs(x - std::round(x)) * ws < tol)
                fail(error_code::delta_support, "frequency on an alias of the reference delta support");
        }
    }
    const cplx r = R.freq(w);
    if (std::abs(r) == 0) fail(error_code::zero_reference_spectrum, "R(jw) vanishes");
    return Rs.freq(w) / r;
}

} // namespace drqft
