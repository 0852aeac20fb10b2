#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "polynomial.hpp"

namespace drqft {

enum class compose_mode { series, parallel, feedback_unity };

// num/den with a monic denominator. No sample time means continuous time.
template <class Real = double>
class basic_rational_tf {
public:
    using poly = basic_polynomial<Real>;
    using complex_type = std::complex<Real>;

    basic_rational_tf() : num_(poly::constant(0)), den_(poly::constant(1)) {}
    basic_rational_tf(poly num, poly den, std::optional<Real> ts = std::nullopt)
        : num_(std::move(num)), den_(std::move(den)), ts_(ts) {
        if (den_.is_zero()) fail(error_code::invalid_argument, "denominator is identically zero");
        if (ts_ && !(*ts_ > 0)) fail(error_code::invalid_argument, "sample time must be positive");
        const Real lead = den_.leading();
        if (lead != Real(1)) {
            num_ = (Real(1) / lead) * num_;
            den_ = (Real(1) / lead) * den_;
        }
    }

    static basic_rational_tf gain(Real k, std::optional<Real> ts = std::nullopt) {
        return basic_rational_tf(poly::constant(k), poly::constant(1), ts);
    }

    const poly& num() const noexcept { return num_; }
    const poly& den() const noexcept { return den_; }
    std::optional<Real> ts() const noexcept { return ts_; }
    bool is_discrete() const noexcept { return ts_.has_value(); }
    bool is_static() const noexcept { return den_.degree() == 0; }
    bool is_proper() const noexcept { return num_.is_zero() || num_.degree() <= den_.degree(); }
    bool is_strictly_proper() const noexcept { return num_.is_zero() || num_.degree() < den_.degree(); }
    int order() const noexcept { return den_.degree(); }

    complex_type operator()(complex_type q) const { return eval(q); }

    complex_type eval(complex_type q) const {
        const complex_type d = den_(q);
        const Real scale = den_.magnitude_scale(std::abs(q));
        if (std::abs(d) < Real(1e-300) * std::max(scale, Real(1)) || std::abs(d) == Real(0))
            fail(error_code::pole_proximity, "evaluation at a denominator root");
        return num_(q) / d;
    }

    // Frequency response: s = j*w for continuous, z = exp(j*w*ts) for discrete.
    complex_type freq(Real w) const { return eval(point(w)); }

    complex_type point(Real w) const {
        if (ts_) return std::polar(Real(1), w * *ts_);
        return complex_type(0, w);
    }

    std::vector<complex_type> poles() const { return den_.roots(); }
    std::vector<complex_type> zeros() const { return num_.roots(); }

    // Value at s=0 or z=1; infinite (signed by the numerator) when the denominator vanishes there.
    Real dc_gain() const {
        const Real x = ts_ ? Real(1) : Real(0);
        const Real d = den_(x);
        const Real n = num_(x);
        if (std::abs(d) <= Real(1e-13) * den_.magnitude_scale(x)) {
            if (n == Real(0)) return std::numeric_limits<Real>::quiet_NaN();
            return std::copysign(std::numeric_limits<Real>::infinity(), n);
        }
        return n / d;
    }

    // True if a root lies in the instability region (closed RHP or outside the open unit disk).
    bool unstable_root(complex_type r, Real tol = 0) const { return basic_rational_tf::unstable_root(r, ts_, tol); }

    static bool unstable_root(complex_type r, std::optional<Real> ts, Real tol = 0) {
        if (ts) return std::abs(r) >= Real(1) - tol;
        return r.real() >= -tol;
    }

    basic_rational_tf with_ts(std::optional<Real> ts) const { return basic_rational_tf(num_, den_, ts); }

private:
    poly num_;
    poly den_;
    std::optional<Real> ts_;
};

using rational_tf = basic_rational_tf<double>;

namespace detail {

template <class Real>
std::optional<Real> merged_ts(const basic_rational_tf<Real>& a, const basic_rational_tf<Real>& b) {
    // A static gain with no sample time is sample-time agnostic.
    if (a.is_static() && !a.ts()) return b.ts();
    if (b.is_static() && !b.ts()) return a.ts();
    if (a.ts().has_value() != b.ts().has_value())
        fail(error_code::sample_time_mismatch, "continuous and discrete operands");
    if (a.ts() && std::abs(*a.ts() - *b.ts()) > Real(1e-12) * *a.ts())
        fail(error_code::sample_time_mismatch, "operands sampled at different periods");
    return a.ts();
}

// Remove a root (and its conjugate, if complex) from p by exact deflation.
template <class Real>
basic_polynomial<Real> deflate(const basic_polynomial<Real>& p, std::complex<Real> r) {
    if (std::abs(r.imag()) <= Real(1e-12) * std::max(Real(1), std::abs(r)))
        return p.quotient(basic_polynomial<Real>({Real(1), -r.real()}));
    return p.quotient(basic_polynomial<Real>({Real(1), -2 * r.real(), std::norm(r)}));
}

// Cancels numerator/denominator root pairs closer than tol, but only inside the
// stability region; unstable common factors are kept so hidden modes stay visible.
template <class Real>
basic_rational_tf<Real> cancel_stable(const basic_rational_tf<Real>& tf, Real tol = Real(1e-8)) {
    if (tf.num().is_zero() || tf.num().degree() == 0 || tf.den().degree() == 0) return tf;
    auto z = tf.zeros();
    auto p = tf.poles();
    auto num = tf.num();
    auto den = tf.den();
    std::vector<bool> used(z.size(), false);
    bool changed = false;
    for (const auto& pr : p) {
        // boundary roots come out of the root finder slightly perturbed; keep them
        if (basic_rational_tf<Real>::unstable_root(pr, tf.ts(), Real(1e-6))) continue;
        if (pr.imag() < 0) continue; // handled with its conjugate
        for (std::size_t k = 0; k < z.size(); ++k) {
            if (used[k]) continue;
            if (std::abs(z[k] - pr) < tol * std::max(Real(1), std::abs(pr))) {
                used[k] = true;
                if (std::abs(pr.imag()) > Real(1e-12) * std::max(Real(1), std::abs(pr))) {
                    for (std::size_t m = 0; m < z.size(); ++m) {
                        if (!used[m] && std::abs(z[m] - std::conj(pr)) < tol * std::max(Real(1), std::abs(pr))) {
                            used[m] = true;
                            break;
                        }
                    }
                }
                num = deflate(num, pr);
                den = deflate(den, pr);
                changed = true;
                break;
            }
        }
    }
    if (!changed) return tf;
    return basic_rational_tf<Real>(num, den, tf.ts());
}

} // namespace detail

template <class Real>
basic_rational_tf<Real> compose(const basic_rational_tf<Real>& a, const basic_rational_tf<Real>& b, compose_mode mode) {
    const auto ts = detail::merged_ts(a, b);
    basic_rational_tf<Real> out;
    switch (mode) {
    case compose_mode::series:
        out = basic_rational_tf<Real>(a.num() * b.num(), a.den() * b.den(), ts);
        break;
    case compose_mode::parallel:
        out = basic_rational_tf<Real>(a.num() * b.den() + b.num() * a.den(), a.den() * b.den(), ts);
        break;
    case compose_mode::feedback_unity:
        // a forward, b in the negative feedback path: a / (1 + a b).
        out = basic_rational_tf<Real>(a.num() * b.den(), a.den() * b.den() + a.num() * b.num(), ts);
        break;
    }
    return detail::cancel_stable(out);
}

template <class Real>
basic_rational_tf<Real> series(const basic_rational_tf<Real>& a, const basic_rational_tf<Real>& b) {
    return compose(a, b, compose_mode::series);
}
template <class Real>
basic_rational_tf<Real> parallel(const basic_rational_tf<Real>& a, const basic_rational_tf<Real>& b) {
    return compose(a, b, compose_mode::parallel);
}
template <class Real>
basic_rational_tf<Real> feedback_unity(const basic_rational_tf<Real>& l) {
    return compose(l, basic_rational_tf<Real>::gain(Real(1)), compose_mode::feedback_unity);
}

template <class Real>
basic_rational_tf<Real> operator*(const basic_rational_tf<Real>& a, const basic_rational_tf<Real>& b) {
    return series(a, b);
}

template <class Real = double>
struct basic_state_space {
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    Mat A;
    Mat B; // n x 1
    Mat C; // 1 x n
    Real D = 0;
    std::optional<Real> ts;

    Eigen::Index order() const noexcept { return A.rows(); }

    std::complex<Real> eval(std::complex<Real> q) const {
        const auto n = A.rows();
        if (n == 0) return D;
        using CMat = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
        CMat M = -A.template cast<std::complex<Real>>();
        M.diagonal().array() += q;
        const CMat x = M.partialPivLu().solve(B.template cast<std::complex<Real>>());
        return (C.template cast<std::complex<Real>>() * x)(0, 0) + D;
    }
};

using state_space = basic_state_space<double>;

// Controllable canonical realization (companion form in the first row).
template <class Real>
basic_state_space<Real> to_state_space(const basic_rational_tf<Real>& tf) {
    if (!tf.is_proper()) fail(error_code::improper_tf, "realization needs a proper transfer function");
    const int n = tf.den().degree();
    basic_state_space<Real> ss;
    ss.ts = tf.ts();
    const Real d = tf.num().coeff(n);
    ss.D = d;
    ss.A = basic_state_space<Real>::Mat::Zero(n, n);
    ss.B = basic_state_space<Real>::Mat::Zero(n, 1);
    ss.C = basic_state_space<Real>::Mat::Zero(1, n);
    if (n == 0) return ss;
    for (int j = 0; j < n; ++j) ss.A(0, j) = -tf.den().coeff(n - 1 - j);
    for (int i = 1; i < n; ++i) ss.A(i, i - 1) = Real(1);
    ss.B(0, 0) = Real(1);
    for (int j = 0; j < n; ++j) ss.C(0, j) = tf.num().coeff(n - 1 - j) - d * tf.den().coeff(n - 1 - j);
    return ss;
}

// Transfer function of a SISO realization. The denominator comes from the
// eigenvalues of A; the numerator is recovered by interpolating C(qI-A)^-1 B + D
// times the denominator on a circle enclosing the spectrum.
template <class Real>
basic_rational_tf<Real> ss_to_tf(const basic_state_space<Real>& ss) {
    using poly = basic_polynomial<Real>;
    using cplx = std::complex<Real>;
    const int n = static_cast<int>(ss.A.rows());
    if (n == 0) return basic_rational_tf<Real>(poly::constant(ss.D), poly::constant(1), ss.ts);
    typename basic_state_space<Real>::Mat Ab = ss.A;
    detail::balance(Ab);
    Eigen::EigenSolver<typename basic_state_space<Real>::Mat> es(Ab, false);
    if (es.info() != Eigen::Success) fail(error_code::non_convergence, "state matrix eigenvalues");
    std::vector<cplx> eig;
    Real rmax = 0;
    for (int i = 0; i < n; ++i) {
        eig.push_back(es.eigenvalues()(i));
        rmax = std::max(rmax, std::abs(eig.back()));
    }
    const poly den = poly::from_roots(eig);
    const Real rho = Real(1.5) * std::max(Real(1), rmax);
    const int m = n + 1;
    std::vector<cplx> v(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
        const cplx q = std::polar(rho, 2 * std::numbers::pi_v<Real> * Real(k) / Real(m));
        v[static_cast<std::size_t>(k)] = ss.eval(q) * den(q);
    }
    std::vector<Real> c(static_cast<std::size_t>(m)); // highest first
    for (int p = 0; p < m; ++p) {
        cplx acc = 0;
        for (int k = 0; k < m; ++k)
            acc += v[static_cast<std::size_t>(k)] * std::polar(Real(1), -2 * std::numbers::pi_v<Real> * Real(k * p) / Real(m));
        acc /= Real(m) * std::pow(rho, Real(p));
        c[static_cast<std::size_t>(n - p)] = acc.real();
    }
    if (ss.D == Real(0)) c[0] = Real(0);
    return basic_rational_tf<Real>(poly(c), den, ss.ts);
}

} // namespace drqft
