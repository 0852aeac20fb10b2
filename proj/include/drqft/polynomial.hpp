#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace drqft {

namespace detail {

// Parlett-Reinsch balancing with radix-2 scaling; eigenvalues are unchanged.
template <class Matrix>
void balance(Matrix& m) {
    using Real = typename Matrix::Scalar;
    const auto n = m.rows();
    bool done = false;
    while (!done) {
        done = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            Real c = 0, r = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(m(j, i));
                r += std::abs(m(i, j));
            }
            if (c == 0 || r == 0) continue;
            const Real s = c + r;
            Real f = 1;
            while (c < r / 2) { c *= 2; r /= 2; f *= 2; }
            while (c >= r * 2) { c /= 2; r *= 2; f /= 2; }
            if ((c + r) / f < Real(0.95) * s) {
                done = false;
                m.row(i) /= f;
                m.col(i) *= f;
            }
        }
    }
}

} // namespace detail

// Real-coefficient polynomial, coefficients stored highest degree first.
template <class Real = double>
class basic_polynomial {
public:
    using complex_type = std::complex<Real>;

    basic_polynomial() : c_{Real(0)} {}
    basic_polynomial(std::initializer_list<Real> c) : c_(c) { trim(); }
    explicit basic_polynomial(std::vector<Real> c) : c_(std::move(c)) { trim(); }

    static basic_polynomial constant(Real v) { return basic_polynomial({v}); }
    static basic_polynomial monomial(int degree, Real v = 1) {
        std::vector<Real> c(static_cast<std::size_t>(degree) + 1, Real(0));
        c[0] = v;
        return basic_polynomial(std::move(c));
    }

    // Product of (x - r) over the roots, times gain. Complex roots must come in
    // conjugate pairs for the result to be real; the imaginary residue is dropped.
    static basic_polynomial from_roots(const std::vector<complex_type>& roots, Real gain = 1) {
        std::vector<complex_type> acc{complex_type(1)};
        for (const auto& r : roots) {
            std::vector<complex_type> next(acc.size() + 1, complex_type(0));
            for (std::size_t i = 0; i < acc.size(); ++i) {
                next[i] += acc[i];
                next[i + 1] -= acc[i] * r;
            }
            acc = std::move(next);
        }
        std::vector<Real> c(acc.size());
        for (std::size_t i = 0; i < acc.size(); ++i) c[i] = gain * acc[i].real();
        return basic_polynomial(std::move(c));
    }

    const std::vector<Real>& coeffs() const noexcept { return c_; }
    int degree() const noexcept { return static_cast<int>(c_.size()) - 1; }
    bool is_zero() const noexcept { return c_.size() == 1 && c_[0] == Real(0); }
    Real leading() const noexcept { return c_.front(); }

    // Coefficient of x^k.
    Real coeff(int k) const noexcept {
        if (k < 0 || k > degree()) return Real(0);
        return c_[static_cast<std::size_t>(degree() - k)];
    }

    template <class T>
    T operator()(const T& x) const {
        T acc = T(c_[0]);
        for (std::size_t i = 1; i < c_.size(); ++i) acc = acc * x + T(c_[i]);
        return acc;
    }

    // Sum of |c_k| |x|^k: the natural floating-point scale of an evaluation at x.
    Real magnitude_scale(Real absx) const {
        Real acc = 0;
        for (Real v : c_) acc = acc * absx + std::abs(v);
        return acc;
    }

    basic_polynomial derivative() const {
        if (degree() == 0) return basic_polynomial();
        std::vector<Real> d(c_.size() - 1);
        const int n = degree();
        for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = c_[static_cast<std::size_t>(i)] * Real(n - i);
        return basic_polynomial(std::move(d));
    }

    std::vector<complex_type> roots() const {
        std::vector<complex_type> out;
        if (is_zero()) return out;
        std::vector<Real> c = c_;
        while (c.size() > 1 && c.back() == Real(0)) {
            c.pop_back();
            out.emplace_back(Real(0));
        }
        const int n = static_cast<int>(c.size()) - 1;
        if (n == 0) return out;
        if (n == 1) {
            out.emplace_back(-c[1] / c[0]);
            return out;
        }
        using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
        Mat comp = Mat::Zero(n, n);
        for (int j = 0; j < n; ++j) comp(0, j) = -c[static_cast<std::size_t>(j + 1)] / c[0];
        for (int i = 1; i < n; ++i) comp(i, i - 1) = Real(1);
        detail::balance(comp);
        Eigen::EigenSolver<Mat> es(comp, false);
        if (es.info() != Eigen::Success) fail(error_code::non_convergence, "companion eigenvalue solver");
        const auto ev = es.eigenvalues();
        for (int i = 0; i < n; ++i) out.push_back(ev(i));
        return out;
    }

    friend basic_polynomial operator+(const basic_polynomial& a, const basic_polynomial& b) {
        const std::size_t n = std::max(a.c_.size(), b.c_.size());
        std::vector<Real> c(n, Real(0));
        for (std::size_t i = 0; i < a.c_.size(); ++i) c[n - a.c_.size() + i] += a.c_[i];
        for (std::size_t i = 0; i < b.c_.size(); ++i) c[n - b.c_.size() + i] += b.c_[i];
        return basic_polynomial(std::move(c));
    }
    friend basic_polynomial operator-(const basic_polynomial& a) {
        auto c = a.c_;
        for (auto& v : c) v = -v;
        return basic_polynomial(std::move(c));
    }
    friend basic_polynomial operator-(const basic_polynomial& a, const basic_polynomial& b) { return a + (-b); }
    friend basic_polynomial operator*(const basic_polynomial& a, const basic_polynomial& b) {
        std::vector<Real> c(a.c_.size() + b.c_.size() - 1, Real(0));
        for (std::size_t i = 0; i < a.c_.size(); ++i)
            for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
        return basic_polynomial(std::move(c));
    }
    friend basic_polynomial operator*(Real s, const basic_polynomial& a) {
        auto c = a.c_;
        for (auto& v : c) v *= s;
        return basic_polynomial(std::move(c));
    }
    friend basic_polynomial operator*(const basic_polynomial& a, Real s) { return s * a; }

    // Quotient of division by a monic-or-not divisor; the remainder is discarded.
    basic_polynomial quotient(const basic_polynomial& d) const {
        if (d.is_zero()) fail(error_code::invalid_argument, "division by zero polynomial");
        if (d.degree() > degree()) return basic_polynomial();
        std::vector<Real> r = c_;
        std::vector<Real> q(static_cast<std::size_t>(degree() - d.degree() + 1), Real(0));
        for (std::size_t i = 0; i < q.size(); ++i) {
            const Real f = r[i] / d.c_[0];
            q[i] = f;
            for (std::size_t j = 0; j < d.c_.size(); ++j) r[i + j] -= f * d.c_[j];
        }
        return basic_polynomial(std::move(q));
    }

    friend bool operator==(const basic_polynomial& a, const basic_polynomial& b) { return a.c_ == b.c_; }

private:
    void trim() {
        if (c_.empty()) c_.push_back(Real(0));
        std::size_t k = 0;
        while (k + 1 < c_.size() && c_[k] == Real(0)) ++k;
        c_.erase(c_.begin(), c_.begin() + static_cast<std::ptrdiff_t>(k));
    }

    std::vector<Real> c_;
};

using polynomial = basic_polynomial<double>;

} // namespace drqft
