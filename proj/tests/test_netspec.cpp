#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

#include "momentbound/netspec.hpp"

using namespace momentbound;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const std::string kDataDir = MOMENTBOUND_DATA_DIR;

}  // namespace

TEST_CASE("parse the dimerization network") {
    Network net = parse_network(slurp(kDataDir + "/dimer.json"));
    REQUIRE(net.n_species() == 1);
    CHECK(net.species[0].name == "X");
    REQUIRE(net.n_params() == 3);
    CHECK(net.params[0].kind == ParamKind::uncertain);
    REQUIRE(net.params[0].gamma.has_value());
    CHECK(net.params[0].gamma->shape == Rational(2));
    CHECK(net.params[0].gamma->scale == Rational(2, 5));
    CHECK(net.params[2].kind == ParamKind::fixed);
    CHECK(net.params[2].value == Rational(1, 50));
    REQUIRE(net.reactions.size() == 3);
    CHECK(net.reactions[0].propensity.const_factor == Rational(5));
    REQUIRE(net.correlation_bounds.size() == 1);
    CHECK(net.correlation_bounds[0].r == 0.2);

    // gamma marginals auto-fill known moments up to max_order
    CHECK(net.params[0].known_moments.at(1) == Rational(4, 5));
    CHECK(net.params[0].known_moments.at(2) == Rational(24, 25));
    CHECK(net.params[1].known_moments.at(1) == Rational(2, 5));
    CHECK(net.params[1].known_moments.at(2) == Rational(1, 5));
    CHECK(net.params[0].known_moments.count(12) == 1);
    CHECK(net.params[0].known_moments.count(13) == 0);
}

TEST_CASE("serialize then parse is the identity") {
    for (const char* file : {"/dimer.json", "/dimer_unknown.json", "/birthdeath.json",
                             "/dimer_fixed.json"}) {
        Network net = parse_network(slurp(kDataDir + file));
        Network again = parse_network(serialize_network(net));
        CHECK(net == again);
    }
}

TEST_CASE("validation accepts the shipped networks") {
    for (const char* file : {"/dimer.json", "/dimer_unknown.json", "/birthdeath.json",
                             "/dimer_fixed.json"}) {
        Network net = parse_network(slurp(kDataDir + file));
        for (const auto& d : validate_network(net))
            CHECK(d.severity != Diagnostic::Severity::error);
    }
}

TEST_CASE("parse rejects malformed documents") {
    CHECK_THROWS_AS(parse_network("not json"), ParseError);
    CHECK_THROWS_AS(parse_network("{}"), ParseError);  // no species
    // reaction referencing an unknown parameter
    CHECK_THROWS_AS(parse_network(R"({"species":["X"],"parameters":[],
        "reactions":[{"rate":"nope","stoich":{"X":1}}]})"),
                    ParseError);
    // unknown species in stoichiometry
    CHECK_THROWS_AS(parse_network(R"({"species":["X"],
        "parameters":[{"name":"k","kind":"fixed","value":1}],
        "reactions":[{"rate":"k","stoich":{"Y":1}}]})"),
                    ParseError);
    // correlation bound outside [0,1]
    CHECK_THROWS_AS(parse_network(R"({"species":["X"],
        "parameters":[{"name":"a","kind":"uncertain","gamma":{"shape":2,"scale":1}},
                      {"name":"b","kind":"uncertain","gamma":{"shape":2,"scale":1}}],
        "reactions":[{"rate":"a","stoich":{"X":1}},{"rate":"b","orders":{"X":1},"stoich":{"X":-1}}],
        "constraints":[{"type":"correlation_bound","params":["a","b"],"r":1.5}]})"),
                    ParseError);
}

TEST_CASE("correlation constraints encode the running example box") {
    Network net = parse_network(slurp(kDataDir + "/dimer.json"));
    auto [h1, h2] = correlation_constraints(net.params[0], net.params[1], 0.2);

    // mean product 0.32, sigma product sqrt(var1 * var2) = sqrt(0.32 * 0.04)
    const double mm = 0.32;
    const double ss = std::sqrt(0.32 * 0.04);
    CHECK(h1.constant == Catch::Approx(mm + 0.2 * ss).epsilon(1e-14));
    CHECK(h2.constant == Catch::Approx(-mm + 0.2 * ss).epsilon(1e-14));
    REQUIRE(h1.terms.size() == 1);
    CHECK(h1.terms[0].coeff == -1.0);
    CHECK(h2.terms[0].coeff == 1.0);
    CHECK(h1.terms[0].beta.at("k1") == 1);
    CHECK(h1.terms[0].beta.at("k2") == 1);

    // the admissible interval for E[K1 K2] at r = 0.2
    double lo = -h2.constant;
    double hi = h1.constant;
    CHECK(lo == Catch::Approx(0.2973725830020305).epsilon(1e-13));
    CHECK(hi == Catch::Approx(0.3426274169979695).epsilon(1e-13));

    // r = 0 collapses the interval to the product of means
    auto [g1, g2] = correlation_constraints(net.params[0], net.params[1], 0.0);
    CHECK(g1.constant == Catch::Approx(mm).epsilon(1e-14));
    CHECK(-g2.constant == Catch::Approx(mm).epsilon(1e-14));

    // width is affine and increasing in r
    auto width = [&](double r) {
        auto [a, b] = correlation_constraints(net.params[0], net.params[1], r);
        return a.constant + b.constant;
    };
    CHECK(width(0.0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(width(1.0) == Catch::Approx(2 * ss).epsilon(1e-13));
    CHECK(width(0.5) == Catch::Approx(ss).epsilon(1e-13));

    CHECK_THROWS_AS(correlation_constraints(net.params[0], net.params[1], -0.1),
                    std::invalid_argument);
    CHECK_THROWS_AS(correlation_constraints(net.params[0], net.params[1], 1.1),
                    std::invalid_argument);
}

TEST_CASE("fixed parameters are stored exactly") {
    Network net = parse_network(slurp(kDataDir + "/birthdeath.json"));
    CHECK(net.params[0].value == Rational(4, 5));
    CHECK(net.params[1].value == Rational(2, 5));
}
