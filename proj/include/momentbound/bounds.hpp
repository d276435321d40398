#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "momentbound/momeq.hpp"
#include "momentbound/netspec.hpp"
#include "momentbound/sdpbuild.hpp"
#include "momentbound/solver.hpp"
#include "momentbound/ssa.hpp"

namespace momentbound {

/// Everything needed to pose one bound computation on a network.
struct BoundRequest {
    MomentKey target;
    int rho = 1;
    int sigma = 0;
    std::optional<BasisCaps> caps;
    std::optional<ScaleRecord> scale;   // all-ones when absent
    std::optional<double> r_override;   // replaces every correlation bound's r
    std::optional<SolverSettings> settings;  // size-adapted defaults when absent
};

struct BoundResult {
    Direction direction = Direction::minimize;
    double value = std::numeric_limits<double>::quiet_NaN();
    SolveStatus status = SolveStatus::numerical_failure;
    double solver_gap = 0, primal_res = 0, dual_res = 0;
    int iterations = 0;
    double seconds = 0;
    std::string message;
};

struct BoundPair {
    BoundResult lo, hi;
    double seconds = 0;

    double gap() const { return hi.value - lo.value; }
    bool both_optimal() const {
        return lo.status == SolveStatus::optimal && hi.status == SolveStatus::optimal;
    }
};

/// True when every uncertain parameter carries known moments up to order
/// sigma. Partial information leaves high-order parameter moments as free
/// variables, which flattens the optimal face of the relaxation.
inline bool has_full_moment_info(const Network& net, int sigma) {
    for (size_t idx : net.uncertain_param_indices())
        for (int o = 1; o <= sigma; ++o)
            if (!net.params[idx].known_moments.count(o)) return false;
    return true;
}

/// Interior-point tolerances adapted to relaxation size. Small relaxations
/// solve to 1e-8; the large dimerization-style instances have an unbounded
/// primal optimal face that caps attainable feasibility near 1e-4, so their
/// runs are declared optimal at an honest, explicitly looser tolerance.
inline SolverSettings recommended_settings(int rho, int sigma, size_t n_uncertain = 2,
                                           bool full_info = true) {
    SolverSettings s;
    if (n_uncertain == 0) {
        // Fixed-parameter relaxations solve to 1e-8 at low order; larger
        // moment matrices keep a small feasibility floor.
        if (rho >= 3) {
            s.tol_gap = 1e-7;
            s.tol_feas = 1e-6;
        }
        return s;
    }
    if (!full_info && sigma >= 7) {
        // Partial moment information at high parameter order: the flat
        // optimal face stalls progress around a 1e-3 relative gap.
        s.tol_gap = 2e-3;
        s.tol_feas = 1e-3;
    } else if (sigma >= 8) {
        // The largest parameter orders stall a few 1e-4 above the gap
        // tolerance used below, while staying well inside the feasibility
        // tolerance. Declaring them at 1e-3 keeps the reported status honest.
        s.tol_gap = 1e-3;
        s.tol_feas = 1e-3;
    } else if (rho >= 3 || sigma >= 4) {
        s.tol_gap = 1e-4;
        s.tol_feas = 1e-3;
    } else {
        s.tol_gap = 1e-6;
        s.tol_feas = 1e-6;
    }
    return s;
}

/// Target moment from a CLI-style string: a species name, optionally with a
/// power, e.g. "X" or "X^2".
inline MomentKey parse_target(const Network& net, const std::string& text) {
    std::string name = text;
    int power = 1;
    auto caret = text.find('^');
    if (caret != std::string::npos) {
        name = text.substr(0, caret);
        try {
            power = std::stoi(text.substr(caret + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("bad target power in '" + text + "'");
        }
        if (power < 1) throw std::invalid_argument("target power must be >= 1");
    }
    MomentKey key;
    key.alpha.assign(net.n_species(), 0);
    key.beta.assign(net.uncertain_param_indices().size(), 0);
    key.alpha[net.species_index(name)] = power;
    return key;
}

namespace detail {

inline Network with_r(const Network& net, std::optional<double> r_override) {
    if (!r_override) return net;
    if (!(*r_override >= 0 && *r_override <= 1))
        throw std::invalid_argument("correlation override must be in [0, 1]");
    Network out = net;
    for (auto& cb : out.correlation_bounds) cb.r = *r_override;
    return out;
}

}  // namespace detail

inline BoundResult compute_bound(const Network& net, const BoundRequest& req, Direction dir);
inline BoundPair compute_bounds(const Network& net, const BoundRequest& req);

namespace detail {

/// Magnitude-based scaling used when the caller supplies none. Moment
/// variables at high order span many decades (E[X^5 K^9] vs E[K]), which
/// wrecks interior-point conditioning; dividing each species and parameter
/// by a rough magnitude keeps the relaxation solvable. Parameter magnitudes
/// are their known first moments; species magnitudes come from the cheap
/// first-order relaxation of their own means.
inline ScaleRecord auto_scale(const Network& net, const BoundRequest& req) {
    auto unc = net.uncertain_param_indices();
    ScaleRecord s = ScaleRecord::ones(net.n_species(), unc.size());
    for (size_t u = 0; u < unc.size(); ++u) {
        auto it = net.params[unc[u]].known_moments.find(1);
        if (it != net.params[unc[u]].known_moments.end()) {
            double m = it->second.to_double();
            if (m > 1e-12) s.c_params[u] = m;
        }
    }
    for (size_t i = 0; i < net.n_species(); ++i) {
        BoundRequest probe;
        probe.target.alpha.assign(net.n_species(), 0);
        probe.target.beta.assign(unc.size(), 0);
        probe.target.alpha[i] = 1;
        probe.rho = 1;
        probe.sigma = unc.empty() ? 0 : std::min(req.sigma, 1);
        probe.r_override = req.r_override;
        probe.scale = s;  // explicit scale, so the probe cannot recurse
        probe.settings = recommended_settings(1, probe.sigma, unc.size());
        try {
            // the first-order lower bound is usually trivial, so the upper
            // bound alone is the magnitude estimate
            BoundResult ub = compute_bound(net, probe, Direction::maximize);
            if (ub.status == SolveStatus::optimal && ub.value > 1e-6)
                s.c_species[i] = ub.value;
        } catch (const std::exception&) {
            // keep the unit scale for this species
        }
    }
    return s;
}

}  // namespace detail

inline BoundResult compute_bound(const Network& net0, const BoundRequest& req, Direction dir) {
    Network net = detail::with_r(net0, req.r_override);
    TruncationOrder t{req.rho, req.sigma};
    MomentSystem sys0 = assemble_moment_equations(net, t);
    MomentSystem sys = substitute_known(sys0, collect_known_xi(net, sys0));
    ConicProblem prob = assemble_conic(sys, net, t, req.caps, req.target, dir);
    ScaleRecord scale = req.scale ? *req.scale : detail::auto_scale(net, req);
    prob = scale_problem(prob, scale);
    SolverSettings settings = req.settings.value_or(
        recommended_settings(req.rho, req.sigma, net.uncertain_param_indices().size(),
                             has_full_moment_info(net, req.sigma)));

    auto t0 = std::chrono::steady_clock::now();
    Solution sol = solve(prob, settings);
    auto t1 = std::chrono::steady_clock::now();

    BoundResult res;
    res.direction = dir;
    res.value = sol.value;
    res.status = sol.status;
    res.solver_gap = sol.rel_gap;
    res.primal_res = sol.primal_res;
    res.dual_res = sol.dual_res;
    res.iterations = sol.iterations;
    res.seconds = std::chrono::duration<double>(t1 - t0).count();
    res.message = sol.message;
    return res;
}

inline BoundPair compute_bounds(const Network& net, const BoundRequest& req) {
    BoundPair pair;
    pair.lo = compute_bound(net, req, Direction::minimize);
    pair.hi = compute_bound(net, req, Direction::maximize);
    pair.seconds = pair.lo.seconds + pair.hi.seconds;
    return pair;
}

/// SDPA sparse-format text of the posed problem (before solving).
inline std::string export_bound_sdpa(const Network& net0, const BoundRequest& req,
                                     Direction dir) {
    Network net = detail::with_r(net0, req.r_override);
    TruncationOrder t{req.rho, req.sigma};
    MomentSystem sys0 = assemble_moment_equations(net, t);
    MomentSystem sys = substitute_known(sys0, collect_known_xi(net, sys0));
    ConicProblem prob = assemble_conic(sys, net, t, req.caps, req.target, dir);
    prob = scale_problem(prob, req.scale ? *req.scale : detail::auto_scale(net, req));
    return export_sdpa(prob);
}

struct SweepSpec {
    std::vector<double> r_values;
    int sigma_lo = 1, sigma_hi = 1;
    int rho = 1;
    MomentKey target;
    std::optional<ScaleRecord> scale;
    std::optional<SolverSettings> settings;
    int jobs = 1;

    void validate() const {
        if (r_values.empty()) throw std::invalid_argument("sweep: empty r list");
        for (double r : r_values)
            if (!(r >= 0 && r <= 1)) throw std::invalid_argument("sweep: r outside [0, 1]");
        if (sigma_lo < 0 || sigma_hi < sigma_lo)
            throw std::invalid_argument("sweep: bad sigma range");
        if (rho < 1) throw std::invalid_argument("sweep: rho must be >= 1");
        if (jobs < 1) throw std::invalid_argument("sweep: jobs must be >= 1");
    }
};

struct SweepRow {
    double r = 0;
    int sigma = 0;
    BoundPair bounds;
};

/// Runs the full (r, sigma) grid. Cells are independent; with jobs > 1 they
/// are distributed over threads, but rows always come back in (r, sigma)
/// lexicographic order.
inline std::vector<SweepRow> run_sweep(const Network& net, const SweepSpec& spec) {
    spec.validate();
    std::vector<std::pair<double, int>> cells;
    for (double r : spec.r_values)
        for (int s = spec.sigma_lo; s <= spec.sigma_hi; ++s) cells.emplace_back(r, s);
    std::vector<SweepRow> rows(cells.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            BoundRequest req;
            req.target = spec.target;
            req.rho = spec.rho;
            req.sigma = cells[i].second;
            req.scale = spec.scale;
            req.r_override = cells[i].first;
            req.settings = spec.settings;
            rows[i] = SweepRow{cells[i].first, cells[i].second, compute_bounds(net, req)};
        }
    };
    int jobs = std::min<int>(spec.jobs, (int)cells.size());
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return rows;
}

enum class CheckMode { oracle, simulation };

struct CheckReport {
    bool pass = false;
    CheckMode mode = CheckMode::oracle;
    double lb = 0, ub = 0;
    double observed_lo = 0, observed_hi = 0;
    double epsilon = 0;
    double tail_mass = 0;        // oracle mode
    double achieved_corr_pos = 0, achieved_corr_neg = 0;  // simulation mode
    bool stationarity_warning = false;
    std::string detail;
};

/// Fixed-parameter containment check: the truncated-chain stationary mean
/// must lie inside the SDP bracket.
inline CheckReport check_oracle(const Network& net, const BoundRequest& req,
                                const ParamSample& k, int64_t n_max, int target_species = 0) {
    BoundPair bp = compute_bounds(net, req);
    StationaryResult st = truncated_chain_stationary(net, k, n_max);
    if (st.tail_mass > 1e-8)
        throw std::runtime_error("check: oracle truncation tail mass above 1e-8; raise n_max");
    CheckReport rep;
    rep.mode = CheckMode::oracle;
    rep.lb = bp.lo.value;
    rep.ub = bp.hi.value;
    rep.observed_lo = rep.observed_hi = st.mean[target_species];
    rep.epsilon = 1e-6;
    rep.tail_mass = st.tail_mass;
    rep.pass = bp.both_optimal() && rep.observed_lo >= rep.lb - rep.epsilon &&
               rep.observed_hi <= rep.ub + rep.epsilon;
    if (!bp.both_optimal()) rep.detail = "bound solve not optimal";
    return rep;
}

/// Coupled-sampling containment check: the interval of grand means over the
/// positively and negatively coupled SSA ensembles must lie inside the SDP
/// bracket, up to three standard errors.
inline CheckReport check_simulation(const Network& net, const BoundRequest& req, double r,
                                    const SimConfig& cfg, int target_species = 0) {
    auto unc = net.uncertain_param_indices();
    if (unc.size() != 2 || !net.params[unc[0]].gamma || !net.params[unc[1]].gamma)
        throw std::invalid_argument(
            "check: simulation mode needs exactly two uncertain gamma parameters");
    BoundRequest breq = req;
    breq.r_override = r;
    BoundPair bp = compute_bounds(net, breq);

    const GammaSpec& ga = *net.params[unc[0]].gamma;
    const GammaSpec& gb = *net.params[unc[1]].gamma;
    CorrelatedSamples pos =
        sample_correlated_params(ga, gb, r, CorrSign::positive, cfg.n_cells, cfg.seed);
    CorrelatedSamples neg =
        sample_correlated_params(ga, gb, r, CorrSign::negative, cfg.n_cells, cfg.seed + 1);
    if (!pos.converged || !neg.converged)
        throw std::runtime_error("check: coupling protocol did not converge: " + pos.note +
                                 neg.note);

    auto embed = [&](const std::vector<ParamSample>& pairs) {
        std::vector<ParamSample> full(pairs.size());
        for (size_t i = 0; i < pairs.size(); ++i) {
            full[i].values.resize(net.n_params());
            for (size_t p = 0; p < net.n_params(); ++p)
                full[i].values[p] = net.params[p].value.to_double();
            full[i].values[unc[0]] = pairs[i].values[0];
            full[i].values[unc[1]] = pairs[i].values[1];
        }
        return full;
    };
    MeanInterval mi = empirical_mean_interval(
        net, std::vector<std::vector<ParamSample>>{embed(pos.pairs), embed(neg.pairs)}, cfg,
        target_species);

    CheckReport rep;
    rep.mode = CheckMode::simulation;
    rep.lb = bp.lo.value;
    rep.ub = bp.hi.value;
    rep.observed_lo = mi.lo;
    rep.observed_hi = mi.hi;
    rep.epsilon = std::max(1e-6, 3 * mi.max_se);
    rep.achieved_corr_pos = pos.corr;
    rep.achieved_corr_neg = neg.corr;
    rep.stationarity_warning = mi.stationarity_warning;
    rep.pass = bp.both_optimal() && rep.observed_lo >= rep.lb - rep.epsilon &&
               rep.observed_hi <= rep.ub + rep.epsilon;
    if (!bp.both_optimal()) rep.detail = "bound solve not optimal";
    return rep;
}

}  // namespace momentbound
