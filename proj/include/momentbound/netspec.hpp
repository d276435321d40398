#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "momentbound/gamma.hpp"
#include "momentbound/polyalg.hpp"
#include "momentbound/rational.hpp"

namespace momentbound {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Species {
    std::string name;
    int index = 0;

    friend bool operator==(const Species&, const Species&) = default;
};

/// Propensity of an elementary reaction: const_factor · K_rate · ∏ X_i^(m_i)
/// with falling-factorial powers and total order ≤ 2.
struct Propensity {
    std::string rate_param;
    Rational const_factor{1};
    std::map<std::string, int> orders;  // species name -> falling-factorial order

    friend bool operator==(const Propensity&, const Propensity&) = default;
};

struct Reaction {
    std::map<std::string, long long> stoich;  // species name -> net change
    Propensity propensity;

    friend bool operator==(const Reaction&, const Reaction&) = default;
};

enum class ParamKind { fixed, uncertain };

struct GammaSpec {
    Rational shape;
    Rational scale;
    int max_order = 2;

    friend bool operator==(const GammaSpec&, const GammaSpec&) = default;
};

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::fixed;
    Rational value{0};  // meaningful for fixed parameters only
    std::optional<GammaSpec> gamma;
    std::map<int, Rational> known_moments;  // order -> E[K^order]
    Rational support_lower{0};

    friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

/// One affine inequality over parameter moments: Σ coeff·E[K^β] + constant ≥ 0.
struct AffineMomentConstraint {
    struct Term {
        double coeff = 0;
        std::map<std::string, int> beta;  // parameter name -> order

        friend bool operator==(const Term&, const Term&) = default;
    };
    std::vector<Term> terms;
    double constant = 0;

    friend bool operator==(const AffineMomentConstraint&, const AffineMomentConstraint&) = default;
};

/// |corr(K_a, K_b)| ≤ r, kept symbolic so that sweeps can vary r.
struct CorrelationBound {
    std::string param_a, param_b;
    double r = 0;

    friend bool operator==(const CorrelationBound&, const CorrelationBound&) = default;
};

struct Diagnostic {
    enum class Severity { error, warning };
    Severity severity;
    std::string message;
};

struct Network {
    std::vector<Species> species;
    std::vector<Reaction> reactions;
    std::vector<ParamSpec> params;
    std::vector<AffineMomentConstraint> affine_constraints;
    std::vector<CorrelationBound> correlation_bounds;

    friend bool operator==(const Network&, const Network&) = default;

    size_t n_species() const { return species.size(); }
    size_t n_params() const { return params.size(); }
    /// Arity of the extended state (species followed by all parameters).
    size_t arity() const { return species.size() + params.size(); }

    int species_index(const std::string& name) const {
        for (const auto& s : species)
            if (s.name == name) return s.index;
        throw ParseError("unknown species " + name);
    }
    int param_index(const std::string& name) const {
        for (size_t i = 0; i < params.size(); ++i)
            if (params[i].name == name) return (int)i;
        throw ParseError("unknown parameter " + name);
    }
    const ParamSpec& param(const std::string& name) const { return params[param_index(name)]; }

    std::vector<int> uncertain_param_indices() const {
        std::vector<int> idx;
        for (size_t i = 0; i < params.size(); ++i)
            if (params[i].kind == ParamKind::uncertain) idx.push_back((int)i);
        return idx;
    }
};

inline ExtStoich ext_stoich(const Network& net, const Reaction& rxn) {
    ExtStoich s;
    s.shift.assign(net.arity(), 0);
    for (const auto& [name, delta] : rxn.stoich) s.shift[net.species_index(name)] = delta;
    return s;
}

/// Propensity as a polynomial over the extended state with every parameter
/// kept symbolic: const_factor · K_rate · falling-factorial(orders).
inline ExpPoly propensity_poly(const Network& net, const Reaction& rxn) {
    size_t arity = net.arity();
    std::map<size_t, int> orders;
    for (const auto& [name, m] : rxn.propensity.orders)
        if (m > 0) orders[(size_t)net.species_index(name)] = m;
    ExpPoly w = expand_falling_factorial(arity, orders);
    ExpVec kvar(arity);
    kvar[net.n_species() + net.param_index(rxn.propensity.rate_param)] = 1;
    return w * ExpPoly::monomial(arity, kvar, rxn.propensity.const_factor);
}

/// Builds the pair of affine inequalities bounding |corr(K_a, K_b)| by r.
inline std::pair<AffineMomentConstraint, AffineMomentConstraint> correlation_constraints(
    const ParamSpec& pa, const ParamSpec& pb, double r) {
    if (r < 0.0 || r > 1.0) throw std::invalid_argument("correlation bound r must lie in [0,1]");
    auto moment = [](const ParamSpec& p, int order) {
        auto it = p.known_moments.find(order);
        if (it == p.known_moments.end())
            throw std::invalid_argument("parameter " + p.name +
                                        " lacks a known moment of order " + std::to_string(order));
        return it->second.to_double();
    };
    double ma = moment(pa, 1), mb = moment(pb, 1);
    double va = moment(pa, 2) - ma * ma, vb = moment(pb, 2) - mb * mb;
    if (va <= 0.0 || vb <= 0.0) throw std::invalid_argument("non-positive parameter variance");
    double sasb = std::sqrt(va) * std::sqrt(vb);

    AffineMomentConstraint::Term cross;
    cross.beta = {{pa.name, 1}, {pb.name, 1}};

    AffineMomentConstraint h1;  // -E[KaKb] + ma·mb + r·sa·sb >= 0
    cross.coeff = -1.0;
    h1.terms = {cross};
    h1.constant = ma * mb + r * sasb;

    AffineMomentConstraint h2;  // E[KaKb] - ma·mb + r·sa·sb >= 0
    cross.coeff = 1.0;
    h2.terms = {cross};
    h2.constant = -ma * mb + r * sasb;
    return {h1, h2};
}

namespace detail {

inline Rational json_to_rational(const nlohmann::json& j) {
    if (j.is_number_integer()) return Rational(j.get<long long>());
    // Re-serialize and parse the shortest decimal form exactly.
    return Rational::from_decimal(j.dump());
}

}  // namespace detail

inline Network parse_network(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("syntax error: ") + e.what());
    }
    Network net;
    try {
        if (!j.contains("species") || !j["species"].is_array() || j["species"].empty())
            throw ParseError("empty species list");
        int idx = 0;
        for (const auto& s : j["species"]) {
            std::string name = s.get<std::string>();
            for (const auto& sp : net.species)
                if (sp.name == name) throw ParseError("duplicate species " + name);
            net.species.push_back({name, idx++});
        }

        for (const auto& p : j.value("parameters", nlohmann::json::array())) {
            ParamSpec ps;
            ps.name = p.at("name").get<std::string>();
            std::string kind = p.at("kind").get<std::string>();
            if (kind == "fixed") {
                ps.kind = ParamKind::fixed;
                ps.value = detail::json_to_rational(p.at("value"));
                if (ps.value <= Rational(0))
                    throw ParseError("non-positive fixed value for parameter " + ps.name);
                if (p.contains("gamma") || p.contains("moments"))
                    throw ParseError("fixed parameter " + ps.name + " carries moment data");
            } else if (kind == "uncertain") {
                ps.kind = ParamKind::uncertain;
                if (p.contains("gamma")) {
                    GammaSpec g;
                    g.shape = detail::json_to_rational(p["gamma"].at("shape"));
                    g.scale = detail::json_to_rational(p["gamma"].at("scale"));
                    g.max_order = p["gamma"].value("max_order", 2);
                    if (g.shape <= Rational(0) || g.scale <= Rational(0))
                        throw ParseError("gamma shape/scale must be positive for " + ps.name);
                    if (g.max_order < 1) throw ParseError("gamma max_order must be >= 1");
                    ps.gamma = g;
                    for (int b = 1; b <= g.max_order; ++b)
                        ps.known_moments[b] = gamma_moment_exact(g.shape, g.scale, b);
                }
                if (p.contains("moments")) {
                    for (const auto& [k, v] : p["moments"].items()) {
                        int order = std::stoi(k);
                        if (order < 1) throw ParseError("moment order must be >= 1");
                        ps.known_moments[order] = detail::json_to_rational(v);
                    }
                }
            } else {
                throw ParseError("unknown parameter kind '" + kind + "'");
            }
            if (p.contains("support_lower"))
                ps.support_lower = detail::json_to_rational(p["support_lower"]);
            for (const auto& q : net.params)
                if (q.name == ps.name) throw ParseError("duplicate parameter " + ps.name);
            net.params.push_back(std::move(ps));
        }

        if (!j.contains("reactions") || j["reactions"].empty())
            throw ParseError("empty reaction list");
        for (const auto& r : j["reactions"]) {
            Reaction rxn;
            rxn.propensity.rate_param = r.at("rate").get<std::string>();
            net.param_index(rxn.propensity.rate_param);  // resolve or throw
            if (r.contains("const")) {
                rxn.propensity.const_factor = detail::json_to_rational(r["const"]);
                if (rxn.propensity.const_factor <= Rational(0))
                    throw ParseError("propensity const factor must be positive");
            }
            int total = 0;
            const nlohmann::json orders = r.value("orders", nlohmann::json::object());
            for (const auto& [name, m] : orders.items()) {
                net.species_index(name);
                int mi = m.get<int>();
                if (mi < 0 || mi > 2) throw ParseError("falling-factorial order must be 0, 1, or 2");
                total += mi;
                if (mi > 0) rxn.propensity.orders[name] = mi;
            }
            if (total > 2) throw ParseError("propensity order > 2 (non-elementary reaction)");
            for (const auto& [name, d] : r.at("stoich").items()) {
                net.species_index(name);
                long long delta = d.get<long long>();
                if (delta != 0) rxn.stoich[name] = delta;
            }
            if (rxn.stoich.empty()) throw ParseError("reaction with all-zero stoichiometry");
            net.reactions.push_back(std::move(rxn));
        }

        for (const auto& c : j.value("constraints", nlohmann::json::array())) {
            std::string type = c.at("type").get<std::string>();
            if (type == "correlation_bound") {
                CorrelationBound cb;
                cb.param_a = c.at("params").at(0).get<std::string>();
                cb.param_b = c.at("params").at(1).get<std::string>();
                cb.r = c.at("r").get<double>();
                if (cb.r < 0.0 || cb.r > 1.0) throw ParseError("correlation bound r outside [0,1]");
                const ParamSpec& pa = net.param(cb.param_a);
                const ParamSpec& pb = net.param(cb.param_b);
                if (pa.kind != ParamKind::uncertain || pb.kind != ParamKind::uncertain)
                    throw ParseError("correlation bound references a fixed parameter");
                correlation_constraints(pa, pb, cb.r);  // validates available moments
                net.correlation_bounds.push_back(std::move(cb));
            } else if (type == "affine") {
                AffineMomentConstraint ac;
                for (const auto& t : c.at("terms")) {
                    AffineMomentConstraint::Term term;
                    term.coeff = t.at("coeff").get<double>();
                    for (const auto& [name, order] : t.at("beta").items()) {
                        if (net.param(name).kind != ParamKind::uncertain)
                            throw ParseError("affine constraint references fixed parameter " + name);
                        term.beta[name] = order.get<int>();
                    }
                    if (term.beta.empty()) throw ParseError("affine constraint term without exponents");
                    ac.terms.push_back(std::move(term));
                }
                if (ac.terms.empty()) throw ParseError("affine constraint without terms");
                ac.constant = c.value("constant", 0.0);
                std::string sense = c.value("sense", ">=");
                if (sense != ">=") throw ParseError("only sense '>=' is supported");
                net.affine_constraints.push_back(std::move(ac));
            } else {
                throw ParseError("unknown constraint type '" + type + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed network document: ") + e.what());
    }
    return net;
}

inline std::string serialize_network(const Network& net) {
    nlohmann::ordered_json j;
    for (const auto& s : net.species) j["species"].push_back(s.name);
    j["parameters"] = nlohmann::ordered_json::array();
    for (const auto& p : net.params) {
        nlohmann::ordered_json pj;
        pj["name"] = p.name;
        pj["kind"] = p.kind == ParamKind::fixed ? "fixed" : "uncertain";
        if (p.kind == ParamKind::fixed) pj["value"] = p.value.to_double();
        if (p.gamma) {
            pj["gamma"] = {{"shape", p.gamma->shape.to_double()},
                           {"scale", p.gamma->scale.to_double()},
                           {"max_order", p.gamma->max_order}};
        } else if (!p.known_moments.empty()) {
            nlohmann::ordered_json mj;
            for (const auto& [order, v] : p.known_moments) mj[std::to_string(order)] = v.to_double();
            pj["moments"] = mj;
        }
        if (!(p.support_lower == Rational(0))) pj["support_lower"] = p.support_lower.to_double();
        j["parameters"].push_back(pj);
    }
    j["reactions"] = nlohmann::ordered_json::array();
    for (const auto& r : net.reactions) {
        nlohmann::ordered_json rj;
        rj["rate"] = r.propensity.rate_param;
        if (!(r.propensity.const_factor == Rational(1)))
            rj["const"] = r.propensity.const_factor.to_double();
        if (!r.propensity.orders.empty()) {
            nlohmann::ordered_json oj;
            for (const auto& [name, m] : r.propensity.orders) oj[name] = m;
            rj["orders"] = oj;
        }
        nlohmann::ordered_json sj;
        for (const auto& [name, d] : r.stoich) sj[name] = d;
        rj["stoich"] = sj;
        j["reactions"].push_back(rj);
    }
    if (!net.correlation_bounds.empty() || !net.affine_constraints.empty()) {
        j["constraints"] = nlohmann::ordered_json::array();
        for (const auto& cb : net.correlation_bounds)
            j["constraints"].push_back({{"type", "correlation_bound"},
                                        {"params", {cb.param_a, cb.param_b}},
                                        {"r", cb.r}});
        for (const auto& ac : net.affine_constraints) {
            nlohmann::ordered_json cj;
            cj["type"] = "affine";
            for (const auto& t : ac.terms) {
                nlohmann::ordered_json tj;
                tj["coeff"] = t.coeff;
                for (const auto& [name, order] : t.beta) tj["beta"][name] = order;
                cj["terms"].push_back(tj);
            }
            cj["constant"] = ac.constant;
            cj["sense"] = ">=";
            j["constraints"].push_back(cj);
        }
    }
    return j.dump(2) + "\n";
}

inline std::vector<Diagnostic> validate_network(const Network& net) {
    std::vector<Diagnostic> diags;
    auto error = [&](std::string msg) {
        diags.push_back({Diagnostic::Severity::error, std::move(msg)});
    };
    auto warning = [&](std::string msg) {
        diags.push_back({Diagnostic::Severity::warning, std::move(msg)});
    };

    if (net.species.empty()) error("empty species list");
    for (size_t i = 0; i < net.species.size(); ++i)
        if (net.species[i].index != (int)i) error("non-contiguous species indices");

    for (size_t i = 0; i < net.reactions.size(); ++i) {
        const auto& r = net.reactions[i];
        bool all_zero = true;
        for (const auto& [name, d] : r.stoich)
            if (d != 0) all_zero = false;
        if (all_zero) error("reaction " + std::to_string(i) + " has all-zero stoichiometry");
        if (r.propensity.const_factor <= Rational(0))
            error("reaction " + std::to_string(i) + " has non-positive const factor");
        int total = 0;
        for (const auto& [name, m] : r.propensity.orders) total += m;
        if (total > 2) error("reaction " + std::to_string(i) + " propensity order > 2");
    }

    for (const auto& p : net.params) {
        if (p.kind == ParamKind::fixed) {
            if (p.value <= Rational(0)) error("fixed parameter " + p.name + " is non-positive");
            if (!p.known_moments.empty()) error("fixed parameter " + p.name + " carries moment data");
            continue;
        }
        bool constrained = !p.known_moments.empty();
        for (const auto& cb : net.correlation_bounds)
            if (cb.param_a == p.name || cb.param_b == p.name) constrained = true;
        for (const auto& ac : net.affine_constraints)
            for (const auto& t : ac.terms)
                if (t.beta.count(p.name)) constrained = true;
        if (!constrained)
            warning("unconstrained parameter " + p.name +
                    " (no moments or constraints restrict its distribution)");
    }
    return diags;
}

}  // namespace momentbound
