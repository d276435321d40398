#include <catch2/catch_amalgamated.hpp>
#include <fstream>
#include <map>
#include <sstream>

#include "momentbound/momeq.hpp"

using namespace momentbound;

namespace {

const std::string kDataDir = MOMENTBOUND_DATA_DIR;

Network load(const std::string& file) {
    std::ifstream f(kDataDir + file);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_network(ss.str());
}

using RowMap = std::map<MomentKey, Rational, MomentKeyLess>;

/// Recombines the A/B/C blocks of one row into a single key -> coefficient map.
RowMap row_map(const MomentSystem& sys, size_t ri) {
    RowMap m;
    for (size_t c = 0; c < sys.mu_keys.size(); ++c)
        if (!sys.A[ri][c].is_zero()) m[sys.mu_keys[c]] = sys.A[ri][c];
    for (size_t c = 0; c < sys.nu_keys.size(); ++c)
        if (!sys.B[ri][c].is_zero()) m[sys.nu_keys[c]] = sys.B[ri][c];
    for (size_t c = 0; c < sys.xi_keys.size(); ++c)
        if (!sys.C[ri][c].is_zero()) m[sys.xi_keys[c]] = sys.C[ri][c];
    return m;
}

MomentKey key(std::vector<int> alpha, std::vector<int> beta) {
    MomentKey k;
    k.alpha = std::move(alpha);
    k.beta = std::move(beta);
    return k;
}

}  // namespace

TEST_CASE("zeta enumeration respects both truncation orders") {
    // one species, two parameters
    auto z11 = enumerate_zeta(TruncationOrder{1, 1}, 1, 2);
    REQUIRE(z11.size() == 3);
    CHECK(z11[0] == ExpVec{1, 0, 0});
    CHECK(z11[1] == ExpVec{1, 1, 0});
    CHECK(z11[2] == ExpVec{1, 0, 1});

    // sigma = 0 keeps only pure species indices
    auto z20 = enumerate_zeta(TruncationOrder{2, 0}, 1, 2);
    REQUIRE(z20.size() == 2);
    CHECK(z20[0] == ExpVec{1, 0, 0});
    CHECK(z20[1] == ExpVec{2, 0, 0});

    // indices with zero species part never appear
    for (const auto& z : enumerate_zeta(TruncationOrder{3, 2}, 1, 2))
        CHECK(z.degree_range(0, 1) >= 1);

    CHECK_THROWS_AS(enumerate_zeta(TruncationOrder{0, 0}, 1, 2), std::invalid_argument);
}

TEST_CASE("dimerization moment equations at first order, exact coefficients") {
    // Expected rows for the dimerization system (D = 5, k3 = 1/50 fixed):
    //   zeta X    :  1/25 E[X]    - 1/25 E[X^2]    - E[X K2]     + 5 E[K1]    = 0
    //   zeta X K1 :  1/25 E[X K1] - 1/25 E[X^2 K1] - E[X K1 K2]  + 5 E[K1^2]  = 0
    //   zeta X K2 :  1/25 E[X K2] - 1/25 E[X^2 K2] - E[X K2^2]   + 5 E[K1 K2] = 0
    Network net = load("/dimer.json");
    MomentSystem sys = assemble_moment_equations(net, TruncationOrder{1, 1});
    REQUIRE(sys.rows.size() == 3);

    const Rational c(1, 25);
    RowMap r0{{key({1}, {0, 0}), c},
              {key({2}, {0, 0}), -c},
              {key({1}, {0, 1}), Rational(-1)},
              {key({0}, {1, 0}), Rational(5)}};
    RowMap r1{{key({1}, {1, 0}), c},
              {key({2}, {1, 0}), -c},
              {key({1}, {1, 1}), Rational(-1)},
              {key({0}, {2, 0}), Rational(5)}};
    RowMap r2{{key({1}, {0, 1}), c},
              {key({2}, {0, 1}), -c},
              {key({1}, {0, 2}), Rational(-1)},
              {key({0}, {1, 1}), Rational(5)}};

    std::vector<RowMap> expected{r0, r1, r2};
    std::vector<RowMap> got;
    for (size_t i = 0; i < 3; ++i) {
        CHECK(sys.constant[i].is_zero());
        got.push_back(row_map(sys, i));
    }
    // row order is permutation-free here, but compare as multisets anyway
    for (const auto& e : expected) {
        bool found = false;
        for (const auto& g : got) found = found || g == e;
        CHECK(found);
    }
}

TEST_CASE("moment keys split into mu, nu, xi blocks") {
    Network net = load("/dimer.json");
    MomentSystem sys = assemble_moment_equations(net, TruncationOrder{1, 1});
    // mu: E[X], E[X^2]; xi: E[K1], E[K1^2], E[K1 K2]; the rest are nu
    CHECK(sys.mu_keys.size() == 2);
    CHECK(sys.xi_keys.size() == 3);
    CHECK(sys.nu_keys.size() == 6);
    for (const auto& k : sys.mu_keys) CHECK(k.classify() == MomentKey::Class::mu);
    for (const auto& k : sys.nu_keys) CHECK(k.classify() == MomentKey::Class::nu);
    for (const auto& k : sys.xi_keys) CHECK(k.classify() == MomentKey::Class::xi);
}

TEST_CASE("birth-death moment equation") {
    // zeta X: 5 k1 E[1] - k2 E[X] = 0, with both parameters fixed; the birth
    // term stays attached to the unit moment until normalization pins E[1]
    Network net = load("/birthdeath.json");
    MomentSystem sys = assemble_moment_equations(net, TruncationOrder{1, 0});
    REQUIRE(sys.rows.size() == 1);
    RowMap row = row_map(sys, 0);
    REQUIRE(row.size() == 2);
    CHECK(row.at(key({1}, {})) == -Rational(2, 5));
    CHECK(row.at(key({0}, {})) == Rational(4));  // 5 * 4/5
    CHECK(sys.constant[0].is_zero());
}

TEST_CASE("known xi values: marginal powers and independent products") {
    Network net = load("/dimer.json");  // r = 0.2: cross moments unknown
    CHECK(known_xi_value(net, key({0}, {1, 0})) == Rational(4, 5));
    CHECK(known_xi_value(net, key({0}, {2, 0})) == Rational(24, 25));
    CHECK(known_xi_value(net, key({0}, {0, 2})) == Rational(1, 5));
    CHECK_FALSE(known_xi_value(net, key({0}, {1, 1})).has_value());
    CHECK_FALSE(known_xi_value(net, key({0}, {0, 0})).has_value());  // E[1]
    CHECK_FALSE(known_xi_value(net, key({1}, {1, 0})).has_value());  // not xi

    // r = 0 declares independence: every cross moment factors
    Network ind = net;
    for (auto& cb : ind.correlation_bounds) cb.r = 0;
    CHECK(known_xi_value(ind, key({0}, {1, 1})) == Rational(4, 5) * Rational(2, 5));
    CHECK(known_xi_value(ind, key({0}, {2, 1})) == Rational(24, 25) * Rational(2, 5));
    CHECK(known_xi_value(ind, key({0}, {2, 2})) == Rational(24, 25) * Rational(1, 5));

    // partially specified marginals limit what factors
    Network part = load("/dimer_unknown.json");
    for (auto& cb : part.correlation_bounds) cb.r = 0;
    CHECK(known_xi_value(part, key({0}, {1, 1})) == Rational(8, 25));
    CHECK_FALSE(known_xi_value(part, key({0}, {3, 0})).has_value());
    CHECK_FALSE(known_xi_value(part, key({0}, {3, 1})).has_value());
}

TEST_CASE("substitute_known folds xi columns into constants") {
    Network net = load("/dimer.json");
    MomentSystem sys = assemble_moment_equations(net, TruncationOrder{1, 1});
    auto known = collect_known_xi(net, sys);
    // E[K1] and E[K1^2] are known; E[K1 K2] is not (r = 0.2)
    CHECK(known.size() == 2);
    MomentSystem sub = substitute_known(sys, known);
    CHECK(sub.xi_keys.size() == 1);
    CHECK(sub.xi_keys[0] == key({0}, {1, 1}));
    // zeta X row gains the constant 5 E[K1] = 4
    CHECK(sub.constant[0] == Rational(4));
    // zeta X K1 row gains 5 E[K1^2] = 24/5
    CHECK(sub.constant[1] == Rational(24, 5));
    CHECK(sub.constant[2].is_zero());

    MomentKey bogus = key({0}, {7, 7});
    std::map<MomentKey, Rational, MomentKeyLess> bad{{bogus, Rational(1)}};
    CHECK_THROWS_AS(substitute_known(sys, bad), std::invalid_argument);
}
