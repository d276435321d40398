#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "momentbound/momeq.hpp"
#include "momentbound/netspec.hpp"
#include "momentbound/polyalg.hpp"

namespace momentbound {

struct MonomialBasis {
    std::vector<ExpVec> monomials;  // over species + uncertain parameters
    int cap_species = 0;
    int cap_params = 0;
};

/// All monomials with species total degree ≤ cap_species and parameter total
/// degree ≤ cap_params, graded-ordered. Always contains the constant monomial.
inline MonomialBasis monomial_basis(size_t n, size_t r, int cap_species, int cap_params) {
    if (cap_species < 0 || cap_params < 0) throw std::invalid_argument("negative basis cap");
    MonomialBasis b;
    b.cap_species = cap_species;
    b.cap_params = cap_params;
    std::vector<std::vector<int>> species, params;
    detail::enumerate_bounded(n, cap_species, 0, species);
    detail::enumerate_bounded(r, cap_params, 0, params);
    for (const auto& a : species)
        for (const auto& p : params) {
            ExpVec m(n + r);
            for (size_t i = 0; i < n; ++i) m[i] = a[i];
            for (size_t i = 0; i < r; ++i) m[n + i] = p[i];
            b.monomials.push_back(std::move(m));
        }
    std::sort(b.monomials.begin(), b.monomials.end(),
              [](const ExpVec& a, const ExpVec& c) { return GradedLess{}(a, c); });
    return b;
}

/// Affine expression over moment-variable indices.
struct AffExpr {
    std::vector<std::pair<int, double>> terms;  // (variable index, coefficient)
    double constant = 0.0;

    void add(int var, double coef) {
        if (coef == 0.0) return;
        for (auto& [v, c] : terms)
            if (v == var) {
                c += coef;
                return;
            }
        terms.emplace_back(var, coef);
    }
};

/// Symmetric matrix of affine expressions: entry (a,b) is the moment of
/// multiplier · g_a · g_b. Upper triangle stored row-major.
struct PsdBlock {
    std::string label;
    ExpPoly multiplier;
    MonomialBasis basis;
    std::vector<AffExpr> entries;  // p <= q, index tri_index(p,q)

    int size() const { return (int)basis.monomials.size(); }
    size_t tri_index(int p, int q) const {
        // requires p <= q
        int nn = size();
        return (size_t)p * nn - (size_t)p * (p - 1) / 2 + (size_t)(q - p);
    }
    const AffExpr& at(int p, int q) const { return entries[tri_index(std::min(p, q), std::max(p, q))]; }
};

/// Per-axis positive constants; moments are divided by ∏C_X^α ∏C_K^β.
struct ScaleRecord {
    std::vector<double> c_species;
    std::vector<double> c_params;  // aligned with the uncertain parameters

    static ScaleRecord ones(size_t n, size_t r_u) {
        ScaleRecord s;
        s.c_species.assign(n, 1.0);
        s.c_params.assign(r_u, 1.0);
        return s;
    }
    double divisor(const MomentKey& key) const {
        double d = 1.0;
        for (size_t i = 0; i < key.alpha.size(); ++i)
            d *= std::pow(c_species[i], key.alpha[i]);
        for (size_t u = 0; u < key.beta.size(); ++u)
            d *= std::pow(c_params[u], key.beta[u]);
        return d;
    }
};

enum class Direction { minimize, maximize };

struct BasisCaps {
    int species = 0;
    int params = 0;
};

struct ConicProblem {
    size_t n_species = 0;
    size_t n_uncertain = 0;
    std::vector<MomentKey> variables;  // scaled variables when `scaled`
    std::map<MomentKey, int, MomentKeyLess> index;
    Direction direction = Direction::minimize;
    std::vector<std::pair<int, double>> objective;
    std::vector<AffExpr> equalities;    // expr == 0
    std::vector<std::optional<MomentKey>> eq_scale_key;  // ζ of moment-equation rows
    std::vector<AffExpr> inequalities;  // expr >= 0
    std::vector<PsdBlock> psd_blocks;
    BasisCaps caps;
    ScaleRecord scale;  // identity until scale_problem is applied
    bool scaled = false;

    int var(const MomentKey& key) const {
        auto it = index.find(key);
        if (it == index.end()) throw std::logic_error("moment variable not registered");
        return it->second;
    }
};

namespace detail {

inline MomentKey key_from_expvec(const ExpVec& ev, size_t n) {
    MomentKey k;
    k.alpha.assign(ev.e.begin(), ev.e.begin() + n);
    k.beta.assign(ev.e.begin() + n, ev.e.end());
    return k;
}

}  // namespace detail

/// Builds one PSD block. Known ξ moments become constants; every other
/// moment key is registered as a variable on demand.
inline PsdBlock localizing_matrix(const MonomialBasis& basis, const ExpPoly& multiplier,
                                  const Network& net, ConicProblem& prob, std::string label) {
    PsdBlock blk;
    blk.label = std::move(label);
    blk.multiplier = multiplier;
    blk.basis = basis;
    int nn = (int)basis.monomials.size();
    size_t n = prob.n_species;
    blk.entries.resize((size_t)nn * (nn + 1) / 2);
    for (int p = 0; p < nn; ++p) {
        for (int q = p; q < nn; ++q) {
            AffExpr e;
            ExpVec gagb = basis.monomials[p] + basis.monomials[q];
            for (const auto& [mterm, mcoef] : multiplier.terms()) {
                MomentKey key = detail::key_from_expvec(mterm + gagb, n);
                double c = mcoef.to_double();
                if (auto v = known_xi_value(net, key)) {
                    e.constant += c * v->to_double();
                } else {
                    auto it = prob.index.find(key);
                    int vi;
                    if (it == prob.index.end()) {
                        vi = (int)prob.variables.size();
                        prob.variables.push_back(key);
                        prob.index.emplace(key, vi);
                    } else {
                        vi = it->second;
                    }
                    e.add(vi, c);
                }
            }
            blk.entries[blk.tri_index(p, q)] = std::move(e);
        }
    }
    return blk;
}

/// Assembles the full conic relaxation: normalization, moment equations,
/// affine moment inequalities, moment matrix and localizing matrices.
inline ConicProblem assemble_conic(const MomentSystem& sys, const Network& net,
                                   const TruncationOrder& t, std::optional<BasisCaps> caps_opt,
                                   const MomentKey& objective, Direction direction) {
    if (objective.classify() != MomentKey::Class::mu)
        throw std::invalid_argument("objective must be a copy-number moment");

    size_t n = sys.n_species;
    size_t r_u = sys.n_uncertain;
    auto unc = net.uncertain_param_indices();

    ConicProblem prob;
    prob.n_species = n;
    prob.n_uncertain = r_u;
    prob.direction = direction;
    prob.scale = ScaleRecord::ones(n, r_u);

    // Default caps cover every system moment; explicit caps must do so too.
    int cs, cp;
    if (caps_opt) {
        cs = caps_opt->species;
        cp = caps_opt->params;
    } else {
        cs = (t.rho + 2) / 2;    // ceil((rho+1)/2)
        cp = (t.sigma + 2) / 2;  // ceil((sigma+1)/2)
    }
    auto check_coverage = [&](int cs_, int cp_) -> std::optional<MomentKey> {
        auto keys = sys.all_keys();
        keys.push_back(objective);
        for (const auto& k : keys) {
            if (k.alpha_degree() > 2 * cs_ || k.beta_degree() > 2 * cp_) return k;
        }
        return std::nullopt;
    };
    if (caps_opt) {
        if (auto missing = check_coverage(cs, cp)) {
            std::ostringstream os;
            os << "basis caps too small: moment with species degree "
               << missing->alpha_degree() << " and parameter degree " << missing->beta_degree()
               << " is not covered";
            throw std::invalid_argument(os.str());
        }
    } else {
        while (auto missing = check_coverage(cs, cp)) {
            if (missing->alpha_degree() > 2 * cs)
                cs = (missing->alpha_degree() + 1) / 2;
            else
                cp = (missing->beta_degree() + 1) / 2;
        }
    }
    prob.caps = {cs, cp};

    // Register E[1] first so the normalization row always has a variable.
    MomentKey unit;
    unit.alpha.assign(n, 0);
    unit.beta.assign(r_u, 0);
    prob.variables.push_back(unit);
    prob.index.emplace(unit, 0);

    size_t arity = n + r_u;
    // Moment matrix H0.
    prob.psd_blocks.push_back(localizing_matrix(monomial_basis(n, r_u, cs, cp),
                                                ExpPoly::constant(arity, Rational(1)), net, prob,
                                                "H0"));
    // Localizing matrices for the default support polynomials c_i(K)=K_i.
    for (size_t u = 0; u < r_u; ++u) {
        ExpPoly mult = ExpPoly::variable(arity, n + u);
        int bcs = cs, bcp = std::max(0, cp - 1);
        prob.psd_blocks.push_back(localizing_matrix(monomial_basis(n, r_u, bcs, bcp), mult, net,
                                                    prob, "c:" + net.params[unc[u]].name));
    }
    // Localizing matrices for d_j(X)=X_j.
    for (size_t j = 0; j < n; ++j) {
        ExpPoly mult = ExpPoly::variable(arity, j);
        int bcs = std::max(0, cs - 1), bcp = cp;
        prob.psd_blocks.push_back(localizing_matrix(monomial_basis(n, r_u, bcs, bcp), mult, net,
                                                    prob, "d:" + net.species[j].name));
    }

    // Variable registration for any equation moment not present in a block
    // cannot happen once coverage holds; var() below would throw otherwise.

    // Normalization E[1] = 1.
    {
        AffExpr norm;
        norm.add(prob.var(unit), 1.0);
        norm.constant = -1.0;
        prob.equalities.push_back(std::move(norm));
        prob.eq_scale_key.push_back(std::nullopt);
    }

    // Moment-equation rows (constants from substituted known moments fold in).
    auto add_block_terms = [&](AffExpr& e, const std::vector<MomentKey>& keys,
                               const std::vector<Rational>& row) {
        for (size_t c = 0; c < keys.size(); ++c) {
            if (row[c].is_zero()) continue;
            if (auto v = known_xi_value(net, keys[c]))
                e.constant += row[c].to_double() * v->to_double();
            else
                e.add(prob.var(keys[c]), row[c].to_double());
        }
    };
    for (size_t ri = 0; ri < sys.rows.size(); ++ri) {
        AffExpr e;
        add_block_terms(e, sys.mu_keys, sys.A[ri]);
        add_block_terms(e, sys.nu_keys, sys.B[ri]);
        add_block_terms(e, sys.xi_keys, sys.C[ri]);
        e.constant = sys.constant[ri].to_double();
        prob.equalities.push_back(std::move(e));
        prob.eq_scale_key.push_back(detail::key_from_expvec(sys.rows[ri], n));
    }

    // Affine moment constraints: correlation bounds first, then explicit ones.
    auto beta_key = [&](const std::map<std::string, int>& beta) {
        MomentKey k;
        k.alpha.assign(n, 0);
        k.beta.assign(r_u, 0);
        for (const auto& [name, order] : beta) {
            int full = net.param_index(name);
            for (size_t u = 0; u < unc.size(); ++u)
                if (unc[u] == full) k.beta[u] = order;
        }
        return k;
    };
    auto add_affine = [&](const AffineMomentConstraint& ac, AffExpr& e) {
        e.constant = ac.constant;
        for (const auto& term : ac.terms) {
            MomentKey k = beta_key(term.beta);
            if (auto v = known_xi_value(net, k))
                e.constant += term.coeff * v->to_double();
            else
                e.add(prob.var(k), term.coeff);
        }
    };
    for (const auto& cb : net.correlation_bounds) {
        auto [h1, h2] = correlation_constraints(net.param(cb.param_a), net.param(cb.param_b), cb.r);
        if (cb.r == 0.0) {
            // The pair collapses to an equality; keep the interior nonempty.
            AffExpr e;
            add_affine(h2, e);
            prob.equalities.push_back(std::move(e));
            prob.eq_scale_key.push_back(std::nullopt);
        } else {
            AffExpr e1, e2;
            add_affine(h1, e1);
            add_affine(h2, e2);
            prob.inequalities.push_back(std::move(e1));
            prob.inequalities.push_back(std::move(e2));
        }
    }
    for (const auto& ac : net.affine_constraints) {
        AffExpr e;
        add_affine(ac, e);
        prob.inequalities.push_back(std::move(e));
    }

    prob.objective.emplace_back(prob.var(objective), 1.0);
    return prob;
}

/// Rewrites the problem in scaled moment variables. The optimum of the scaled
/// problem equals the optimum of the original in original units.
inline ConicProblem scale_problem(const ConicProblem& p, const ScaleRecord& s) {
    for (double c : s.c_species)
        if (!(c > 0.0)) throw std::invalid_argument("scale constants must be positive");
    for (double c : s.c_params)
        if (!(c > 0.0)) throw std::invalid_argument("scale constants must be positive");

    ConicProblem q = p;
    q.scale = s;
    q.scaled = true;
    auto div = [&](int vi) { return s.divisor(p.variables[vi]); };

    for (auto& [vi, c] : q.objective) c *= div(vi);

    for (size_t ri = 0; ri < q.equalities.size(); ++ri) {
        AffExpr& e = q.equalities[ri];
        double rowdiv = 1.0;
        if (q.eq_scale_key[ri]) {
            rowdiv = s.divisor(*q.eq_scale_key[ri]);
        } else {
            for (const auto& [vi, c] : e.terms) rowdiv = std::max(rowdiv, div(vi));
        }
        for (auto& [vi, c] : e.terms) c *= div(vi) / rowdiv;
        e.constant /= rowdiv;
    }
    for (AffExpr& e : q.inequalities) {
        double rowdiv = 1.0;
        for (const auto& [vi, c] : e.terms) rowdiv = std::max(rowdiv, div(vi));
        for (auto& [vi, c] : e.terms) c *= div(vi) / rowdiv;
        e.constant /= rowdiv;
    }
    for (PsdBlock& blk : q.psd_blocks) {
        int nn = blk.size();
        std::vector<double> gdiv(nn);
        for (int a = 0; a < nn; ++a)
            gdiv[a] = s.divisor(detail::key_from_expvec(blk.basis.monomials[a], p.n_species));
        for (int a = 0; a < nn; ++a)
            for (int b = a; b < nn; ++b) {
                AffExpr& e = blk.entries[blk.tri_index(a, b)];
                double d = gdiv[a] * gdiv[b];
                for (auto& [vi, c] : e.terms) c *= div(vi) / d;
                e.constant /= d;
            }
    }
    return q;
}

/// Maps a primal point of a (possibly scaled) problem back to original units.
inline std::vector<double> unscale_point(const ConicProblem& p, const std::vector<double>& x) {
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * p.scale.divisor(p.variables[i]);
    return out;
}

/// Sparse SDPA (.dat-s) export. Equalities are encoded as paired inequalities
/// inside the trailing diagonal block, as noted in the header comments.
inline std::string export_sdpa(const ConicProblem& p) {
    std::ostringstream os;
    auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    os << "* moment-bound SDP export (SDPA sparse format)\n";
    os << "* variables are moment variables; objective is the "
       << (p.direction == Direction::maximize ? "negated target moment (maximization)"
                                              : "target moment")
       << "\n";
    os << "* equality constraints are encoded as paired inequalities in the final"
          " diagonal block\n";
    size_t nvars = p.variables.size();
    size_t neq = p.equalities.size(), nineq = p.inequalities.size();
    size_t diag = nineq + 2 * neq;
    os << nvars << " = mDIM\n";
    os << (p.psd_blocks.size() + (diag ? 1 : 0)) << " = nBLOCK\n";
    for (size_t b = 0; b < p.psd_blocks.size(); ++b)
        os << p.psd_blocks[b].size() << (b + 1 < p.psd_blocks.size() || diag ? " " : "");
    if (diag) os << "-" << diag;
    os << " = bLOCKsTRUCT\n";
    std::vector<double> c(nvars, 0.0);
    for (const auto& [vi, coef] : p.objective)
        c[vi] = p.direction == Direction::maximize ? -coef : coef;
    for (size_t i = 0; i < nvars; ++i) os << num(c[i]) << (i + 1 < nvars ? " " : "");
    os << "\n";
    // Entry lines: <matno> <blkno> <i> <j> <value>, matno 0 encodes F0.
    for (size_t b = 0; b < p.psd_blocks.size(); ++b) {
        const PsdBlock& blk = p.psd_blocks[b];
        for (int i = 0; i < blk.size(); ++i)
            for (int j = i; j < blk.size(); ++j) {
                const AffExpr& e = blk.at(i, j);
                if (e.constant != 0.0)
                    os << "0 " << b + 1 << " " << i + 1 << " " << j + 1 << " "
                       << num(-e.constant) << "\n";
                for (const auto& [vi, coef] : e.terms)
                    os << vi + 1 << " " << b + 1 << " " << i + 1 << " " << j + 1 << " "
                       << num(coef) << "\n";
            }
    }
    if (diag) {
        size_t blkno = p.psd_blocks.size() + 1;
        size_t pos = 1;
        auto emit_row = [&](const AffExpr& e, double sign) {
            if (e.constant != 0.0)
                os << "0 " << blkno << " " << pos << " " << pos << " "
                   << num(-sign * e.constant) << "\n";
            for (const auto& [vi, coef] : e.terms)
                os << vi + 1 << " " << blkno << " " << pos << " " << pos << " "
                   << num(sign * coef) << "\n";
            ++pos;
        };
        for (const auto& e : p.inequalities) emit_row(e, 1.0);
        for (const auto& e : p.equalities) {
            emit_row(e, 1.0);
            emit_row(e, -1.0);
        }
    }
    return os.str();
}

}  // namespace momentbound
