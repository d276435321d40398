#pragma once

#include <cstdlib>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "momentbound/rational.hpp"

namespace momentbound {

/// Exponent vector over the extended state (species first, then parameters).
struct ExpVec {
    std::vector<int> e;

    ExpVec() = default;
    explicit ExpVec(size_t arity) : e(arity, 0) {}
    ExpVec(std::initializer_list<int> init) : e(init) {}

    size_t arity() const { return e.size(); }
    int operator[](size_t i) const { return e[i]; }
    int& operator[](size_t i) { return e[i]; }

    int total_degree() const { return std::accumulate(e.begin(), e.end(), 0); }
    int degree_range(size_t begin, size_t end) const {
        int d = 0;
        for (size_t i = begin; i < end && i < e.size(); ++i) d += e[i];
        return d;
    }
    bool is_zero() const {
        for (int v : e) if (v != 0) return false;
        return true;
    }

    friend ExpVec operator+(const ExpVec& a, const ExpVec& b) {
        ExpVec r(a.arity());
        for (size_t i = 0; i < a.e.size(); ++i) r.e[i] = a.e[i] + b.e[i];
        return r;
    }
    friend bool operator==(const ExpVec& a, const ExpVec& b) { return a.e == b.e; }
    friend bool operator!=(const ExpVec& a, const ExpVec& b) { return !(a == b); }
};

/// Graded order: lower total degree first; within a grade, larger leading
/// exponents first (so X precedes K1 precedes K2, and XK1 precedes XK2).
struct GradedLess {
    bool operator()(const ExpVec& a, const ExpVec& b) const {
        int da = a.total_degree(), db = b.total_degree();
        if (da != db) return da < db;
        return a.e > b.e;  // lexicographically larger exponents come first
    }
};

/// Multivariate polynomial as a canonical map from exponent vectors to exact
/// rational coefficients. Zero coefficients are never stored.
class ExpPoly {
public:
    using TermMap = std::map<ExpVec, Rational, GradedLess>;

    ExpPoly() : arity_(0) {}
    explicit ExpPoly(size_t arity) : arity_(arity) {}

    static ExpPoly constant(size_t arity, const Rational& c) {
        ExpPoly p(arity);
        p.add_term(ExpVec(arity), c);
        return p;
    }
    static ExpPoly monomial(size_t arity, const ExpVec& ev, const Rational& c = Rational(1)) {
        ExpPoly p(arity);
        p.add_term(ev, c);
        return p;
    }
    /// Single variable X_i.
    static ExpPoly variable(size_t arity, size_t i) {
        ExpVec ev(arity);
        ev[i] = 1;
        return monomial(arity, ev);
    }

    size_t arity() const { return arity_; }
    const TermMap& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    size_t term_count() const { return terms_.size(); }

    Rational coeff(const ExpVec& ev) const {
        auto it = terms_.find(ev);
        return it == terms_.end() ? Rational(0) : it->second;
    }

    void add_term(const ExpVec& ev, const Rational& c) {
        if (ev.arity() != arity_) throw std::invalid_argument("exponent arity mismatch");
        if (c.is_zero()) return;
        auto [it, inserted] = terms_.emplace(ev, c);
        if (!inserted) {
            it->second += c;
            if (it->second.is_zero()) terms_.erase(it);
        }
    }

    friend ExpPoly operator+(const ExpPoly& p, const ExpPoly& q) {
        check_arity(p, q);
        ExpPoly r = p;
        for (const auto& [ev, c] : q.terms_) r.add_term(ev, c);
        return r;
    }
    friend ExpPoly operator-(const ExpPoly& p, const ExpPoly& q) {
        check_arity(p, q);
        ExpPoly r = p;
        for (const auto& [ev, c] : q.terms_) r.add_term(ev, -c);
        return r;
    }
    friend ExpPoly operator*(const ExpPoly& p, const ExpPoly& q) {
        check_arity(p, q);
        ExpPoly r(p.arity_);
        for (const auto& [ea, ca] : p.terms_)
            for (const auto& [eb, cb] : q.terms_) r.add_term(ea + eb, ca * cb);
        return r;
    }

    ExpPoly scaled(const Rational& c) const {
        ExpPoly r(arity_);
        if (c.is_zero()) return r;
        for (const auto& [ev, k] : terms_) r.terms_.emplace(ev, k * c);
        return r;
    }

    friend bool operator==(const ExpPoly& p, const ExpPoly& q) {
        return p.arity_ == q.arity_ && p.terms_ == q.terms_;
    }

private:
    size_t arity_;
    TermMap terms_;

    static void check_arity(const ExpPoly& p, const ExpPoly& q) {
        if (p.arity_ != q.arity_) throw std::invalid_argument("polynomial arity mismatch");
    }
};

/// Net state change of one reaction on the extended state; the parameter
/// components are identically zero (reactions never change rate constants).
struct ExtStoich {
    std::vector<long long> shift;  // length n+r, trailing r entries zero

    size_t arity() const { return shift.size(); }
};

inline long long binomial_ll(int n, int k) {
    if (k < 0 || k > n) return 0;
    long long r = 1;
    for (int j = 1; j <= k; ++j) r = r * (n - j + 1) / j;
    return r;
}

/// Expands (X̂+ŝ)^ζ − X̂^ζ exactly. Identically zero whenever every shifted
/// component of ζ vanishes.
inline ExpPoly shift_diff(const ExpVec& zeta, const ExtStoich& shat) {
    if (zeta.arity() != shat.arity()) throw std::invalid_argument("shift_diff arity mismatch");
    size_t arity = zeta.arity();
    ExpPoly prod = ExpPoly::constant(arity, Rational(1));
    for (size_t i = 0; i < arity; ++i) {
        int z = zeta[i];
        if (z == 0) continue;
        long long s = shat.shift[i];
        ExpPoly factor(arity);
        if (s == 0) {
            ExpVec ev(arity);
            ev[i] = z;
            factor.add_term(ev, Rational(1));
        } else {
            // (X_i + s)^z via the binomial theorem
            for (int j = 0; j <= z; ++j) {
                ExpVec ev(arity);
                ev[i] = j;
                Rational c = Rational(binomial_ll(z, j)) * Rational(s).pow(z - j);
                factor.add_term(ev, c);
            }
        }
        prod = prod * factor;
    }
    ExpPoly xz = ExpPoly::monomial(arity, [&] {
        ExpVec ev(arity);
        for (size_t i = 0; i < arity; ++i) ev[i] = zeta[i];
        return ev;
    }());
    return prod - xz;
}

/// Falling-factorial product over species: ∏ X_i(X_i−1)…(X_i−m_i+1),
/// the combinatorial form of elementary mass-action propensities.
inline ExpPoly expand_falling_factorial(size_t arity, const std::map<size_t, int>& orders) {
    int total = 0;
    for (const auto& [idx, m] : orders) {
        if (m < 0) throw std::invalid_argument("negative falling-factorial order");
        total += m;
    }
    if (total > 2) throw std::invalid_argument("propensity order exceeds 2 (non-elementary reaction)");
    ExpPoly p = ExpPoly::constant(arity, Rational(1));
    for (const auto& [idx, m] : orders) {
        for (int j = 0; j < m; ++j) {
            ExpPoly factor = ExpPoly::variable(arity, idx) - ExpPoly::constant(arity, Rational(j));
            p = p * factor;
        }
    }
    return p;
}

/// Generator row polynomial {(X̂+ŝ)^ζ − X̂^ζ}·ŵ(X̂); its term map is exactly
/// the coefficient family a^ζ_γ of the stationary moment equation.
inline ExpPoly generator_poly(const ExpVec& zeta, const ExtStoich& shat, const ExpPoly& w_hat) {
    return shift_diff(zeta, shat) * w_hat;
}

}  // namespace momentbound
