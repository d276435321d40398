#pragma once

#include <stdexcept>

#include "momentbound/rational.hpp"

namespace momentbound {

/// Raw moment E[K^β] of a gamma(shape η, scale θ) distribution,
/// θ^β ∏_{j=1..β} (η+j−1), evaluated exactly.
inline Rational gamma_moment_exact(const Rational& eta, const Rational& theta, int beta) {
    if (beta < 0) throw std::invalid_argument("negative moment order");
    if (eta <= Rational(0) || theta <= Rational(0))
        throw std::invalid_argument("gamma shape and scale must be positive");
    Rational m(1);
    for (int j = 1; j <= beta; ++j) m *= theta * (eta + Rational(j - 1));
    return m;
}

inline double gamma_moment(double eta, double theta, int beta) {
    if (beta < 0) throw std::invalid_argument("negative moment order");
    if (eta <= 0.0 || theta <= 0.0)
        throw std::invalid_argument("gamma shape and scale must be positive");
    double m = 1.0;
    for (int j = 1; j <= beta; ++j) m *= theta * (eta + j - 1);
    return m;
}

}  // namespace momentbound
