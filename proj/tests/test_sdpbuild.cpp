#include <catch2/catch_amalgamated.hpp>
#include <fstream>
#include <sstream>

#include "momentbound/momeq.hpp"
#include "momentbound/sdpbuild.hpp"

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

ConicProblem dimer_problem(int rho, int sigma, Direction dir) {
    Network net = load("/dimer.json");
    TruncationOrder t{rho, sigma};
    MomentSystem sys0 = assemble_moment_equations(net, t);
    MomentSystem sys = substitute_known(sys0, collect_known_xi(net, sys0));
    MomentKey obj;
    obj.alpha = {1};
    obj.beta = {0, 0};
    return assemble_conic(sys, net, t, std::nullopt, obj, dir);
}

}  // namespace

TEST_CASE("monomial basis respects separate caps and graded order") {
    MonomialBasis b = monomial_basis(1, 2, 1, 1);
    // 1, X, K1, K2, XK1, XK2, K1K2, XK1K2 is wrong: param total degree <= 1
    // allows only one parameter at a time: 1, X, K1, K2, XK1, XK2
    REQUIRE(b.monomials.size() == 6);
    CHECK(b.monomials[0] == ExpVec{0, 0, 0});
    CHECK(b.monomials[1] == ExpVec{1, 0, 0});
    CHECK(b.monomials[2] == ExpVec{0, 1, 0});
    CHECK(b.monomials[3] == ExpVec{0, 0, 1});
    CHECK(b.monomials[4] == ExpVec{1, 1, 0});
    CHECK(b.monomials[5] == ExpVec{1, 0, 1});

    CHECK(monomial_basis(1, 2, 0, 0).monomials.size() == 1);
    CHECK_THROWS_AS(monomial_basis(1, 2, -1, 0), std::invalid_argument);
}

TEST_CASE("dimerization conic problem at first order has the known shape") {
    ConicProblem p = dimer_problem(1, 1, Direction::maximize);
    // moment matrix over (1, X, K1, K2, XK1, XK2), two parameter localizers,
    // one species localizer
    REQUIRE(p.psd_blocks.size() == 4);
    CHECK(p.psd_blocks[0].size() == 6);
    CHECK(p.psd_blocks[1].size() == 2);
    CHECK(p.psd_blocks[2].size() == 2);
    CHECK(p.psd_blocks[3].size() == 3);

    // normalization plus the three truncated moment equations
    CHECK(p.equalities.size() == 4);
    // the r = 0.2 correlation box contributes two inequality rows
    CHECK(p.inequalities.size() == 2);

    // E[1] is variable 0 and the normalization row pins it to one
    const AffExpr& norm = p.equalities[0];
    REQUIRE(norm.terms.size() == 1);
    CHECK(norm.terms[0].first == 0);
    CHECK(norm.terms[0].second == 1.0);
    CHECK(norm.constant == -1.0);
}

TEST_CASE("independence collapses the correlation box to nothing") {
    Network net = load("/dimer.json");
    for (auto& cb : net.correlation_bounds) cb.r = 0;
    TruncationOrder t{1, 1};
    MomentSystem sys0 = assemble_moment_equations(net, t);
    MomentSystem sys = substitute_known(sys0, collect_known_xi(net, sys0));
    MomentKey obj;
    obj.alpha = {1};
    obj.beta = {0, 0};
    ConicProblem p = assemble_conic(sys, net, t, std::nullopt, obj, Direction::maximize);
    // E[K1 K2] is a known constant, so no inequality carries any variable
    for (const AffExpr& e : p.inequalities) CHECK(e.terms.empty());
}

TEST_CASE("sdpa export is deterministic and carries the block structure") {
    ConicProblem p = dimer_problem(1, 1, Direction::minimize);
    std::string a = export_sdpa(p);
    std::string b = export_sdpa(p);
    CHECK(a == b);
    CHECK(a.find("6 2 2 3 ") != std::string::npos);
    CHECK(a.find("nBLOCK") != std::string::npos);
}

TEST_CASE("scaling preserves problem semantics") {
    ConicProblem p = dimer_problem(1, 1, Direction::maximize);
    ScaleRecord s;
    s.c_species = {5.0};
    s.c_params = {3.0, 0.7};
    ConicProblem q = scale_problem(p, s);
    CHECK(q.scaled);
    REQUIRE(q.variables.size() == p.variables.size());

    // a feasible-looking point maps consistently: x_scaled = x / divisor
    std::vector<double> x(p.variables.size());
    for (size_t i = 0; i < x.size(); ++i) x[i] = 1.0 + 0.01 * (double)i;
    std::vector<double> xs(x.size());
    for (size_t i = 0; i < x.size(); ++i) xs[i] = x[i] / s.divisor(p.variables[i]);
    std::vector<double> back = unscale_point(q, xs);
    for (size_t i = 0; i < x.size(); ++i) CHECK(back[i] == Catch::Approx(x[i]).epsilon(1e-12));

    // every equality row evaluates to the same residual up to its row divisor
    auto eval = [](const AffExpr& e, const std::vector<double>& v) {
        double r = e.constant;
        for (const auto& [vi, c] : e.terms) r += c * v[vi];
        return r;
    };
    for (size_t ri = 0; ri < p.equalities.size(); ++ri) {
        double orig = eval(p.equalities[ri], x);
        double scal = eval(q.equalities[ri], xs);
        if (orig == 0.0)
            CHECK(scal == Catch::Approx(0.0).margin(1e-12));
        else
            CHECK(scal / orig > 0.0);  // same sign: row divisors are positive
    }

    CHECK_THROWS_AS(scale_problem(p, ScaleRecord{{0.0}, {1.0, 1.0}}), std::invalid_argument);
}

TEST_CASE("default caps grow until the relaxation covers all moment keys") {
    // every key of the moment system must be representable as a product of
    // two basis monomials, otherwise assemble_conic would have thrown
    for (int sigma : {1, 2, 3}) {
        ConicProblem p = dimer_problem(2, sigma, Direction::maximize);
        CHECK(p.caps.species >= 1);
        CHECK(p.caps.params >= 1);
        CHECK(p.variables.size() > 4);
    }
}
