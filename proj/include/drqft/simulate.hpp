#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "errors.hpp"
#include "sampling.hpp"
#include "spectra.hpp"
#include "transfer_function.hpp"

namespace drqft {

// Transposed direct form II realization of a proper discrete transfer function.
class tdf2_filter {
public:
    explicit tdf2_filter(const rational_tf& h) {
        if (!h.is_proper()) fail(error_code::improper_tf, "difference equation needs a proper transfer function");
        const int n = h.den().degree();
        for (int k = n; k >= 0; --k) {
            b_.push_back(h.num().coeff(k));
            a_.push_back(h.den().coeff(k));
        }
        const double a0 = a_[0];
        for (auto& v : b_) v /= a0;
        for (auto& v : a_) v /= a0;
        s_.assign(static_cast<std::size_t>(n), 0.0);
    }

    double step(double x) {
        const double y = b_[0] * x + (s_.empty() ? 0.0 : s_[0]);
        const std::size_t n = s_.size();
        for (std::size_t i = 0; i < n; ++i)
            s_[i] = b_[i + 1] * x - a_[i + 1] * y + (i + 1 < n ? s_[i + 1] : 0.0);
        return y;
    }

private:
    std::vector<double> b_, a_, s_;
};

// First n samples of the impulse response of a proper discrete system.
inline std::vector<double> impulse_series(const rational_tf& h, int n) {
    tdf2_filter f(h);
    std::vector<double> out;
    for (int k = 0; k < n; ++k) out.push_back(f.step(k == 0 ? 1.0 : 0.0));
    return out;
}

struct sim_trace {
    std::vector<double> t, y, u, r;  // substep grid Tf/M
    std::vector<double> t_slow, y_slow, u_slow, r_slow;
    int substeps = 1;
    bool diverged = false;

    std::string csv() const {
        std::ostringstream os;
        os.precision(12);
        os << "t,r,u,y\n";
        for (std::size_t i = 0; i < t.size(); ++i) os << t[i] << ',' << r[i] << ',' << u[i] << ',' << y[i] << '\n';
        return os.str();
    }
};

// Exact closed-loop simulation: controllers at rest, plant state advanced by the
// matrix exponential over each of the M substeps of a fast period.
inline sim_trace simulate(const dual_rate_loop& loop, const reference_signal& ref, double t_end, int M = 32) {
    if (!(t_end > 0)) fail(error_code::invalid_argument, "simulation horizon must be positive");
    if (M < 1) fail(error_code::invalid_argument, "substep count must be at least 1");
    if (!loop.plant.is_strictly_proper()) fail(error_code::improper_tf, "simulation needs a strictly proper plant");
    const auto& tm = loop.timing;
    const state_space ss = to_state_space(loop.plant);
    const auto n = ss.A.rows();
    const double h = tm.Tf / M;
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = ss.A * h;
    aug.topRightCorner(n, 1) = ss.B * h;
    const Eigen::MatrixXd E = aug.exp();
    const Eigen::MatrixXd Phi = E.topLeftCorner(n, n);
    const Eigen::VectorXd Gam = E.topRightCorner(n, 1);
    const Eigen::RowVectorXd C = ss.C;

    tdf2_filter gl(loop.g_slow), gr(loop.g_fast), fl(loop.prefilter_d);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    const long K = static_cast<long>(std::ceil(t_end / tm.Ts - 1e-9));
    const long per_slow = static_cast<long>(tm.N) * M;

    sim_trace tr;
    tr.substeps = M;
    const std::size_t total = static_cast<std::size_t>(K * per_slow + 1);
    tr.t.reserve(total);
    tr.y.reserve(total);
    tr.u.reserve(total);
    tr.r.reserve(total);
    double u = 0;
    for (long k = 0; k < K; ++k) {
        const double tk = k * tm.Ts;
        const double yk = C * x;
        const double rk = ref.value(tk);
        const double v = gl.step(fl.step(rk) - yk);
        tr.t_slow.push_back(tk);
        tr.y_slow.push_back(yk);
        tr.r_slow.push_back(rk);
        tr.u_slow.push_back(v);
        for (int i = 0; i < tm.N; ++i) {
            u = gr.step(v);
            for (int m = 0; m < M; ++m) {
                const long idx = k * per_slow + static_cast<long>(i) * M + m;
                const double t = idx * h;
                tr.t.push_back(t);
                tr.y.push_back(C * x);
                tr.u.push_back(u);
                tr.r.push_back(ref.value(t));
                x = Phi * x + Gam * u;
            }
        }
        if (!x.allFinite() || x.norm() > 1e150) {
            tr.diverged = true;
            break;
        }
    }
    const double tf = static_cast<double>(tr.t.size()) * h;
    tr.t.push_back(tf);
    tr.y.push_back(C * x);
    tr.u.push_back(u);
    tr.r.push_back(ref.value(tf));
    return tr;
}

// Fourier transform of a step-like trace: the integral of (y - y_ss) e^{-jwt}
// by Simpson's rule plus the analytic y_ss/(jw) of the settled level.
inline cplx transient_transform(const sim_trace& tr, double w, double y_ss) {
    const std::size_t n = tr.t.size();
    if (n < 3) fail(error_code::insufficient_steady_state, "trace too short");
    const double h = tr.t[1] - tr.t[0];
    const cplx rot = std::polar(1.0, -w * h);
    cplx ph = 1.0, acc = 0;
    const std::size_t last = (n - 1) % 2 == 0 ? n - 1 : n - 2;
    for (std::size_t i = 0; i <= last; ++i) {
        const double wgt = (i == 0 || i == last) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += wgt * (tr.y[i] - y_ss) * ph;
        if (i < n - 1) ph *= rot;
    }
    acc *= h / 3;
    if (last != n - 1) {
        const cplx p0 = std::polar(1.0, -w * tr.t[n - 2]), p1 = std::polar(1.0, -w * tr.t[n - 1]);
        acc += 0.5 * h * ((tr.y[n - 2] - y_ss) * p0 + (tr.y[n - 1] - y_ss) * p1);
    }
    return acc + y_ss / cplx(0, w);
}

struct ripple_component {
    double frequency;
    double amplitude;
};

struct ripple_report {
    double fundamental_amplitude = 0; // settled level for a step
    std::vector<ripple_component> harmonics;
    double dominant_ripple_frequency = 0;
    // fitted amplitude; for a step, |transient_transform| at the dominant frequency
    double dominant_ripple_level = 0;
    double window_start = 0;
    double window_end = 0;
    int window_periods = 0;
};

// Least-squares fit of the settled trace over the trailing 40% (whole slow periods)
// at w0 and its aliases |w0 + k 2pi/Ts|, k = -K..K; w0 = 0 for a step.
inline ripple_report ripple_metrics(const sim_trace& tr, double Ts, double w0, int K = 8) {
    if (tr.t.size() < 2) fail(error_code::insufficient_steady_state, "empty trace");
    const double span = tr.t.back() - tr.t.front();
    const int periods = static_cast<int>(std::floor(0.4 * span / Ts + 1e-9));
    if (periods < 5) fail(error_code::insufficient_steady_state, "fewer than 5 slow periods in the settled window");
    ripple_report rep;
    rep.window_end = tr.t.back();
    rep.window_start = rep.window_end - periods * Ts;
    rep.window_periods = periods;

    const double ws = 2 * std::numbers::pi / Ts;
    std::vector<double> freqs;
    for (int k = -K; k <= K; ++k) {
        const double f = std::abs(w0 + k * ws);
        if (f < 1e-9 * ws) continue;
        if (std::none_of(freqs.begin(), freqs.end(), [&](double g) { return std::abs(g - f) < 1e-9 * ws; }))
            freqs.push_back(f);
    }
    std::sort(freqs.begin(), freqs.end());

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < tr.t.size(); ++i)
        if (tr.t[i] >= rep.window_start - 1e-12) rows.push_back(i);
    const Eigen::Index cols = 1 + 2 * static_cast<Eigen::Index>(freqs.size());
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), cols);
    Eigen::VectorXd yv(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double t = tr.t[rows[r]] - rep.window_start;
        const auto ri = static_cast<Eigen::Index>(r);
        X(ri, 0) = 1;
        for (std::size_t j = 0; j < freqs.size(); ++j) {
            X(ri, 1 + 2 * static_cast<Eigen::Index>(j)) = std::cos(freqs[j] * t);
            X(ri, 2 + 2 * static_cast<Eigen::Index>(j)) = std::sin(freqs[j] * t);
        }
        yv(ri) = tr.y[rows[r]];
    }
    const Eigen::VectorXd coef = X.colPivHouseholderQr().solve(yv);
    for (std::size_t j = 0; j < freqs.size(); ++j) {
        const auto c = 1 + 2 * static_cast<Eigen::Index>(j);
        rep.harmonics.push_back({freqs[j], std::hypot(coef(c), coef(c + 1))});
    }

    if (w0 > 0) {
        for (const auto& hc : rep.harmonics) {
            if (std::abs(hc.frequency - w0) < 1e-9 * ws) {
                rep.fundamental_amplitude = hc.amplitude;
                continue;
            }
            if (hc.amplitude > rep.dominant_ripple_level) {
                rep.dominant_ripple_level = hc.amplitude;
                rep.dominant_ripple_frequency = hc.frequency;
            }
        }
        return rep;
    }

    // A stable loop settles under a step, so the ripple lives in the transient:
    // locate the peak of the output transform above the slow Nyquist frequency.
    rep.fundamental_amplitude = coef(0);
    const double lo = ws / 2, hi = 4 * ws;
    const int G = 800;
    double best_w = lo, best = -1;
    for (int i = 1; i <= G; ++i) {
        const double w = lo + (hi - lo) * i / G;
        const double m = std::abs(transient_transform(tr, w, coef(0)));
        if (m > best) {
            best = m;
            best_w = w;
        }
    }
    double a = best_w - (hi - lo) / G, b = best_w + (hi - lo) / G;
    const double g = (std::sqrt(5.0) - 1) / 2;
    for (int it = 0; it < 40; ++it) {
        const double c = b - g * (b - a), d = a + g * (b - a);
        if (std::abs(transient_transform(tr, c, coef(0))) > std::abs(transient_transform(tr, d, coef(0)))) b = d;
        else a = c;
    }
    rep.dominant_ripple_frequency = 0.5 * (a + b);
    rep.dominant_ripple_level = std::abs(transient_transform(tr, rep.dominant_ripple_frequency, coef(0)));
    return rep;
}

// Physical constants of the reaction wheel pendulum, SI units.
struct rwip_parameters {
    double J_p = 413e-6;
    double m_p = 0.233;
    double l_p = 84.85e-3;
    double J_f_nominal = 290e-6;
    double m_f = 0.147;
    double l_f = 84.85e-3;
    double B = 0.1;
    double g = 9.81;
};

// Linearized pendulum angle per wheel speed, J_f s/(J_T s^2 + B s - ML g), with J_f
// in kg mm^2. gain_only keeps J_T at its nominal value, so J_f scales the gain alone.
inline rational_tf rwip_plant(double J_f_kgmm2, bool gain_only = false, const rwip_parameters& p = {}) {
    if (!(J_f_kgmm2 > 0)) fail(error_code::non_positive_inertia, "flywheel inertia must be positive");
    const double jf = J_f_kgmm2 * 1e-6;
    if (jf > p.J_f_nominal * (1 + 1e-12)) fail(error_code::invalid_argument, "flywheel inertia above its nominal value");
    const double jt = p.m_p * p.l_p * p.l_p + p.m_f * p.l_f * p.l_f + p.J_p + (gain_only ? p.J_f_nominal : jf);
    const double mlg = (p.m_p * p.l_p + p.m_f * p.l_f) * p.g;
    return rational_tf(polynomial{jf, 0.0}, polynomial{jt, p.B, -mlg});
}

} // namespace drqft
