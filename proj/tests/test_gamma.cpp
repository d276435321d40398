#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "momentbound/gamma.hpp"

using momentbound::gamma_moment;
using momentbound::gamma_moment_exact;
using momentbound::Rational;

TEST_CASE("gamma moments for the running example marginals") {
    // shape 2, scale 0.4: E[K] = 0.8, E[K^2] = 0.96
    CHECK(gamma_moment_exact(Rational(2), Rational(2, 5), 1) == Rational(4, 5));
    CHECK(gamma_moment_exact(Rational(2), Rational(2, 5), 2) == Rational(24, 25));
    // shape 4, scale 0.1: E[K] = 0.4, E[K^2] = 0.2
    CHECK(gamma_moment_exact(Rational(4), Rational(1, 10), 1) == Rational(2, 5));
    CHECK(gamma_moment_exact(Rational(4), Rational(1, 10), 2) == Rational(1, 5));

    CHECK(gamma_moment(2, 0.4, 1) == Catch::Approx(0.8).epsilon(1e-14));
    CHECK(gamma_moment(2, 0.4, 2) == Catch::Approx(0.96).epsilon(1e-14));
    CHECK(gamma_moment(4, 0.1, 1) == Catch::Approx(0.4).epsilon(1e-14));
    CHECK(gamma_moment(4, 0.1, 2) == Catch::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("gamma moments satisfy the order recursion to order 10") {
    // E[K^b] = theta (eta + b - 1) E[K^{b-1}], checked to 1e-12 in doubles
    // and exactly in rationals.
    struct Marg {
        double eta, theta;
        Rational eta_r, theta_r;
    };
    const Marg margs[] = {{2, 0.4, Rational(2), Rational(2, 5)},
                          {4, 0.1, Rational(4), Rational(1, 10)}};
    for (const auto& m : margs) {
        for (int b = 1; b <= 10; ++b) {
            double lhs = gamma_moment(m.eta, m.theta, b);
            double rhs = m.theta * (m.eta + b - 1) * gamma_moment(m.eta, m.theta, b - 1);
            CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
            CHECK(gamma_moment_exact(m.eta_r, m.theta_r, b) ==
                  m.theta_r * (m.eta_r + Rational(b - 1)) *
                      gamma_moment_exact(m.eta_r, m.theta_r, b - 1));
        }
    }
}

TEST_CASE("zeroth moment is one") {
    CHECK(gamma_moment_exact(Rational(3), Rational(7), 0) == Rational(1));
    CHECK(gamma_moment(3, 7, 0) == 1.0);
}

TEST_CASE("gamma moment argument validation") {
    CHECK_THROWS_AS(gamma_moment_exact(Rational(0), Rational(1), 1), std::invalid_argument);
    CHECK_THROWS_AS(gamma_moment_exact(Rational(1), Rational(-1), 1), std::invalid_argument);
    CHECK_THROWS_AS(gamma_moment(1, 1, -1), std::invalid_argument);
}
