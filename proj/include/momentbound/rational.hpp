#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>

namespace momentbound {

/// Exact rational number on 64-bit integers. Overflow throws instead of
/// wrapping; all symbolic assembly stays exact until conic construction.
class Rational {
public:
    Rational() : num_(0), den_(1) {}
    Rational(long long n) : num_(n), den_(1) {}
    Rational(long long n, long long d) { assign(n, d); }

    long long num() const { return num_; }
    long long den() const { return den_; }

    bool is_zero() const { return num_ == 0; }

    double to_double() const { return double(num_) / double(den_); }

    Rational operator-() const { return Rational(-num_, den_); }

    friend Rational operator+(const Rational& a, const Rational& b) {
        __int128 n = (__int128)a.num_ * b.den_ + (__int128)b.num_ * a.den_;
        __int128 d = (__int128)a.den_ * b.den_;
        return from128(n, d);
    }
    friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
    friend Rational operator*(const Rational& a, const Rational& b) {
        return from128((__int128)a.num_ * b.num_, (__int128)a.den_ * b.den_);
    }
    friend Rational operator/(const Rational& a, const Rational& b) {
        if (b.num_ == 0) throw std::domain_error("rational division by zero");
        return from128((__int128)a.num_ * b.den_, (__int128)a.den_ * b.num_);
    }

    Rational& operator+=(const Rational& b) { return *this = *this + b; }
    Rational& operator-=(const Rational& b) { return *this = *this - b; }
    Rational& operator*=(const Rational& b) { return *this = *this * b; }
    Rational& operator/=(const Rational& b) { return *this = *this / b; }

    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num_ == b.num_ && a.den_ == b.den_;
    }
    friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
    friend bool operator<(const Rational& a, const Rational& b) {
        return (__int128)a.num_ * b.den_ < (__int128)b.num_ * a.den_;
    }
    friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
    friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

    Rational pow(int e) const {
        if (e < 0) return Rational(1) / pow(-e);
        Rational r(1), base = *this;
        while (e > 0) {
            if (e & 1) r *= base;
            base = (e > 1) ? base * base : base;
            e >>= 1;
        }
        return r;
    }

    std::string str() const {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

    /// Parses a decimal literal such as "-0.02", "5", or "1.2e-3".
    static Rational from_decimal(std::string_view s);

private:
    long long num_, den_;

    void assign(long long n, long long d) {
        if (d == 0) throw std::domain_error("rational with zero denominator");
        if (d < 0) { n = -n; d = -d; }
        long long g = std::gcd(n < 0 ? -n : n, d);
        if (g > 1) { n /= g; d /= g; }
        num_ = n;
        den_ = d;
    }

    static Rational from128(__int128 n, __int128 d) {
        if (d == 0) throw std::domain_error("rational with zero denominator");
        if (d < 0) { n = -n; d = -d; }
        __int128 an = n < 0 ? -n : n;
        __int128 g = gcd128(an, d);
        if (g > 1) { n /= g; d /= g; }
        constexpr __int128 lim = INT64_MAX;
        if (n > lim || n < -lim || d > lim) throw std::overflow_error("rational overflow");
        Rational r;
        r.num_ = (long long)n;
        r.den_ = (long long)d;
        return r;
    }

    static __int128 gcd128(__int128 a, __int128 b) {
        while (b != 0) { __int128 t = a % b; a = b; b = t; }
        return a;
    }
};

inline Rational Rational::from_decimal(std::string_view s) {
    if (s.empty()) throw std::invalid_argument("empty decimal literal");
    size_t i = 0;
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') { neg = (s[i] == '-'); ++i; }
    __int128 mant = 0;
    int frac_digits = 0, ndigits = 0;
    bool seen_dot = false, seen_digit = false;
    for (; i < s.size(); ++i) {
        char c = s[i];
        if (c == '.') {
            if (seen_dot) throw std::invalid_argument("bad decimal literal");
            seen_dot = true;
        } else if (c >= '0' && c <= '9') {
            if (++ndigits > 18) throw std::overflow_error("decimal literal too long");
            mant = mant * 10 + (c - '0');
            if (seen_dot) ++frac_digits;
            seen_digit = true;
        } else if (c == 'e' || c == 'E') {
            break;
        } else {
            throw std::invalid_argument("bad decimal literal");
        }
    }
    int expo = 0;
    if (i < s.size()) {  // exponent part
        ++i;
        bool eneg = false;
        if (i < s.size() && (s[i] == '+' || s[i] == '-')) { eneg = (s[i] == '-'); ++i; }
        if (i >= s.size()) throw std::invalid_argument("bad decimal exponent");
        for (; i < s.size(); ++i) {
            if (s[i] < '0' || s[i] > '9') throw std::invalid_argument("bad decimal exponent");
            expo = expo * 10 + (s[i] - '0');
            if (expo > 30) throw std::overflow_error("decimal exponent too large");
        }
        if (eneg) expo = -expo;
    }
    if (!seen_digit) throw std::invalid_argument("bad decimal literal");
    if (neg) mant = -mant;
    int p = expo - frac_digits;
    Rational r((long long)mant);
    Rational ten(10);
    return p >= 0 ? r * ten.pow(p) : r / ten.pow(-p);
}

}  // namespace momentbound
