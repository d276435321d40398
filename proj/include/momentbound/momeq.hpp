#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "momentbound/netspec.hpp"
#include "momentbound/polyalg.hpp"

namespace momentbound {

/// Moment E[X^α K^β]; β ranges over the uncertain parameters only.
struct MomentKey {
    std::vector<int> alpha;  // species exponents
    std::vector<int> beta;   // uncertain-parameter exponents

    enum class Class { mu, nu, xi };

    int alpha_degree() const { return std::accumulate(alpha.begin(), alpha.end(), 0); }
    int beta_degree() const { return std::accumulate(beta.begin(), beta.end(), 0); }

    bool is_unit() const { return alpha_degree() == 0 && beta_degree() == 0; }

    Class classify() const {
        if (alpha_degree() == 0) return Class::xi;  // includes E[1]
        return beta_degree() == 0 ? Class::mu : Class::nu;
    }

    std::vector<int> concat() const {
        std::vector<int> v = alpha;
        v.insert(v.end(), beta.begin(), beta.end());
        return v;
    }

    friend bool operator==(const MomentKey&, const MomentKey&) = default;
};

/// Graded order matching the monomial order of the polynomial layer.
struct MomentKeyLess {
    bool operator()(const MomentKey& a, const MomentKey& b) const {
        int da = a.alpha_degree() + a.beta_degree();
        int db = b.alpha_degree() + b.beta_degree();
        if (da != db) return da < db;
        auto ca = a.concat(), cb = b.concat();
        return ca > cb;
    }
};

struct TruncationOrder {
    int rho = 1;    // max species total order of ζ
    int sigma = 0;  // max parameter total order of ζ
};

/// Truncated stationary moment system 0 = Aμ + Bν + Cξ + constant.
struct MomentSystem {
    size_t n_species = 0;
    size_t n_uncertain = 0;
    std::vector<ExpVec> rows;  // ζ over species + uncertain parameters
    std::vector<MomentKey> mu_keys, nu_keys, xi_keys;
    std::vector<std::vector<Rational>> A, B, C;  // one row per ζ
    std::vector<Rational> constant;              // from substituted known moments

    std::vector<MomentKey> all_keys() const {
        std::vector<MomentKey> keys = mu_keys;
        keys.insert(keys.end(), nu_keys.begin(), nu_keys.end());
        keys.insert(keys.end(), xi_keys.begin(), xi_keys.end());
        return keys;
    }
};

namespace detail {

inline void enumerate_bounded(size_t dims, int max_total, int min_total,
                              std::vector<std::vector<int>>& out) {
    std::vector<int> cur(dims, 0);
    // Depth-first over exponents; results are filtered by total degree.
    std::function<void(size_t, int)> rec = [&](size_t pos, int used) {
        if (pos == dims) {
            if (used >= min_total) out.push_back(cur);
            return;
        }
        for (int v = 0; v <= max_total - used; ++v) {
            cur[pos] = v;
            rec(pos + 1, used + v);
        }
        cur[pos] = 0;
    };
    rec(0, 0);
}

}  // namespace detail

/// All truncation indices ζ with 1 ≤ |species part| ≤ ρ and
/// |parameter part| ≤ σ, in graded order. Indices with zero species part are
/// excluded: their moment-equation rows vanish identically.
inline std::vector<ExpVec> enumerate_zeta(const TruncationOrder& t, size_t n, size_t r) {
    if (t.rho < 1) throw std::invalid_argument("rho must be >= 1");
    if (t.sigma < 0) throw std::invalid_argument("sigma must be >= 0");
    std::vector<std::vector<int>> species, params;
    detail::enumerate_bounded(n, t.rho, 1, species);
    detail::enumerate_bounded(r, t.sigma, 0, params);
    std::vector<ExpVec> zetas;
    zetas.reserve(species.size() * params.size());
    for (const auto& a : species)
        for (const auto& b : params) {
            ExpVec z(n + r);
            for (size_t i = 0; i < n; ++i) z[i] = a[i];
            for (size_t i = 0; i < r; ++i) z[n + i] = b[i];
            zetas.push_back(std::move(z));
        }
    std::sort(zetas.begin(), zetas.end(), [](const ExpVec& a, const ExpVec& b) {
        return GradedLess{}(a, b);
    });
    return zetas;
}

/// Known value of a ξ moment, when derivable from per-parameter moment data.
/// Mixed moments factor into products only when every involved pair carries a
/// correlation bound of exactly zero, which pins the joint distribution to the
/// product of the marginals. E[1] is deliberately left unknown; the conic
/// layer pins it to 1.
inline std::optional<Rational> known_xi_value(const Network& net, const MomentKey& key) {
    if (key.alpha_degree() != 0) return std::nullopt;
    auto unc = net.uncertain_param_indices();
    std::vector<size_t> nz;
    for (size_t u = 0; u < key.beta.size(); ++u)
        if (key.beta[u] != 0) nz.push_back(u);
    if (nz.empty()) return std::nullopt;  // E[1]
    auto declared_independent = [&](const std::string& a, const std::string& b) {
        for (const auto& cb : net.correlation_bounds)
            if (cb.r == 0 && ((cb.param_a == a && cb.param_b == b) ||
                              (cb.param_a == b && cb.param_b == a)))
                return true;
        return false;
    };
    for (size_t i = 0; i < nz.size(); ++i)
        for (size_t j = i + 1; j < nz.size(); ++j)
            if (!declared_independent(net.params[unc[nz[i]]].name,
                                      net.params[unc[nz[j]]].name))
                return std::nullopt;
    Rational prod(1);
    for (size_t u : nz) {
        const ParamSpec& p = net.params[unc[u]];
        auto it = p.known_moments.find(key.beta[u]);
        if (it == p.known_moments.end()) return std::nullopt;
        prod = prod * it->second;
    }
    return prod;
}

/// Assembles the truncated stationary moment equations. Fixed parameters are
/// substituted numerically; each remaining moment lands in exactly one of the
/// μ/ν/ξ blocks.
inline MomentSystem assemble_moment_equations(const Network& net, const TruncationOrder& t) {
    size_t n = net.n_species();
    auto unc = net.uncertain_param_indices();
    size_t r_u = unc.size();
    size_t arity = net.arity();

    MomentSystem sys;
    sys.n_species = n;
    sys.n_uncertain = r_u;
    sys.rows = enumerate_zeta(t, n, r_u);

    // Cache per-reaction stoichiometry and propensity polynomials.
    std::vector<ExtStoich> shats;
    std::vector<ExpPoly> whats;
    for (const auto& rxn : net.reactions) {
        shats.push_back(ext_stoich(net, rxn));
        whats.push_back(propensity_poly(net, rxn));
    }

    using RowMap = std::map<MomentKey, Rational, MomentKeyLess>;
    std::vector<RowMap> row_maps(sys.rows.size());
    std::map<MomentKey, MomentKey::Class, MomentKeyLess> seen;

    for (size_t ri = 0; ri < sys.rows.size(); ++ri) {
        const ExpVec& zeta = sys.rows[ri];
        ExpVec zf(arity);
        for (size_t i = 0; i < n; ++i) zf[i] = zeta[(int)i];
        for (size_t u = 0; u < r_u; ++u) zf[n + unc[u]] = zeta[(int)(n + u)];

        ExpPoly row(arity);
        for (size_t k = 0; k < net.reactions.size(); ++k)
            row = row + generator_poly(zf, shats[k], whats[k]);

        for (const auto& [gamma, coef] : row.terms()) {
            MomentKey key;
            key.alpha.assign(n, 0);
            key.beta.assign(r_u, 0);
            Rational c = coef;
            for (size_t i = 0; i < n; ++i) key.alpha[i] = gamma[(int)i];
            std::vector<int> unc_pos(net.n_params(), -1);
            for (size_t u = 0; u < r_u; ++u) unc_pos[unc[u]] = (int)u;
            for (size_t p = 0; p < net.n_params(); ++p) {
                int e = gamma[(int)(n + p)];
                if (e == 0) continue;
                if (unc_pos[p] >= 0)
                    key.beta[unc_pos[p]] = e;
                else
                    c *= net.params[p].value.pow(e);  // fixed parameter power
            }
            if (c.is_zero()) continue;
            auto [it, ins] = row_maps[ri].emplace(key, c);
            if (!ins) {
                it->second += c;
                if (it->second.is_zero()) row_maps[ri].erase(it);
            }
        }
        for (const auto& [key, c] : row_maps[ri]) seen.emplace(key, key.classify());
    }

    for (const auto& [key, cls] : seen) {
        switch (cls) {
            case MomentKey::Class::mu: sys.mu_keys.push_back(key); break;
            case MomentKey::Class::nu: sys.nu_keys.push_back(key); break;
            case MomentKey::Class::xi: sys.xi_keys.push_back(key); break;
        }
    }

    size_t nr = sys.rows.size();
    sys.A.assign(nr, std::vector<Rational>(sys.mu_keys.size(), Rational(0)));
    sys.B.assign(nr, std::vector<Rational>(sys.nu_keys.size(), Rational(0)));
    sys.C.assign(nr, std::vector<Rational>(sys.xi_keys.size(), Rational(0)));
    sys.constant.assign(nr, Rational(0));

    auto col_of = [](const std::vector<MomentKey>& keys, const MomentKey& k) {
        auto it = std::lower_bound(keys.begin(), keys.end(), k, MomentKeyLess{});
        return (size_t)(it - keys.begin());
    };
    for (size_t ri = 0; ri < nr; ++ri) {
        for (const auto& [key, c] : row_maps[ri]) {
            switch (key.classify()) {
                case MomentKey::Class::mu: sys.A[ri][col_of(sys.mu_keys, key)] = c; break;
                case MomentKey::Class::nu: sys.B[ri][col_of(sys.nu_keys, key)] = c; break;
                case MomentKey::Class::xi: sys.C[ri][col_of(sys.xi_keys, key)] = c; break;
            }
        }
    }
    return sys;
}

/// Folds a-priori known ξ moments into the constant vector and drops their
/// columns. Throws if a key is not in the ξ block.
inline MomentSystem substitute_known(const MomentSystem& sys,
                                     const std::map<MomentKey, Rational, MomentKeyLess>& known) {
    MomentSystem out = sys;
    if (known.empty()) return out;
    std::vector<size_t> keep;
    for (size_t c = 0; c < sys.xi_keys.size(); ++c)
        if (!known.count(sys.xi_keys[c])) keep.push_back(c);
    for (const auto& [key, value] : known) {
        bool found = false;
        for (const auto& xk : sys.xi_keys)
            if (xk == key) found = true;
        if (!found) throw std::invalid_argument("substituted key is not in the xi block");
        (void)value;
    }
    out.xi_keys.clear();
    for (size_t c : keep) out.xi_keys.push_back(sys.xi_keys[c]);
    for (size_t ri = 0; ri < sys.rows.size(); ++ri) {
        std::vector<Rational> row;
        row.reserve(keep.size());
        for (size_t c = 0; c < sys.xi_keys.size(); ++c) {
            auto it = known.find(sys.xi_keys[c]);
            if (it == known.end())
                row.push_back(sys.C[ri][c]);
            else
                out.constant[ri] += sys.C[ri][c] * it->second;
        }
        out.C[ri] = std::move(row);
    }
    return out;
}

/// Gathers every ξ key of the system whose value is derivable from the
/// network's per-parameter moment data.
inline std::map<MomentKey, Rational, MomentKeyLess> collect_known_xi(const Network& net,
                                                                     const MomentSystem& sys) {
    std::map<MomentKey, Rational, MomentKeyLess> known;
    for (const auto& key : sys.xi_keys)
        if (auto v = known_xi_value(net, key)) known.emplace(key, *v);
    return known;
}

}  // namespace momentbound
