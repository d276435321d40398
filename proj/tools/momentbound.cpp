// momentbound: guaranteed stationary-moment bounds for reaction networks
// with uncertain kinetic parameters.
//
// Subcommands:
//   bound  - one bound computation, JSON row on stdout
//   sweep  - (r, sigma) grid, CSV on stdout
//   check  - cross-validate SDP bounds against an independent oracle or SSA
//
// Exit codes: 0 success (and check PASS), 1 usage or input error,
// 2 infeasible relaxation, 3 numerical failure, 4 check FAIL.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "momentbound/bounds.hpp"

namespace mb = momentbound;

namespace {

mb::Network load_network(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open network file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return mb::parse_network(ss.str());
}

/// "NAME=VALUE" scale assignments over the all-ones default.
mb::ScaleRecord parse_scales(const mb::Network& net, const std::vector<std::string>& items) {
    auto unc = net.uncertain_param_indices();
    mb::ScaleRecord s = mb::ScaleRecord::ones(net.n_species(), unc.size());
    for (const auto& item : items) {
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("bad --scale entry (want NAME=VALUE): " + item);
        std::string name = item.substr(0, eq);
        double value = std::stod(item.substr(eq + 1));
        if (!(value > 0)) throw std::runtime_error("scale constants must be positive: " + item);
        bool found = false;
        for (size_t i = 0; i < net.species.size(); ++i)
            if (net.species[i].name == name) {
                s.c_species[i] = value;
                found = true;
            }
        for (size_t u = 0; u < unc.size(); ++u)
            if (net.params[unc[u]].name == name) {
                s.c_params[u] = value;
                found = true;
            }
        if (!found) throw std::runtime_error("--scale names no species or uncertain parameter: " + name);
    }
    return s;
}

int default_jobs() {
    if (const char* env = std::getenv("MOMENTBOUND_JOBS")) {
        int j = std::atoi(env);
        if (j >= 1) return j;
    }
    return 1;
}

int status_exit(mb::SolveStatus st) {
    switch (st) {
        case mb::SolveStatus::optimal: return 0;
        case mb::SolveStatus::primal_infeasible: return 2;
        case mb::SolveStatus::dual_infeasible_or_unbounded: return 2;
        default: return 3;
    }
}

nlohmann::ordered_json result_json(const mb::BoundResult& r) {
    return {{"direction", r.direction == mb::Direction::minimize ? "min" : "max"},
            {"value", r.value},
            {"status", mb::to_string(r.status)},
            {"solver_rel_gap", r.solver_gap},
            {"primal_res", r.primal_res},
            {"dual_res", r.dual_res},
            {"iterations", r.iterations},
            {"seconds", r.seconds},
            {"message", r.message}};
}

struct CommonFlags {
    std::string network_file;
    std::string target = "";
    int rho = 1;
    int sigma = 0;
    std::vector<std::string> scales;
};

void add_common(CLI::App* cmd, CommonFlags& cf, bool target_required) {
    cmd->add_option("network", cf.network_file, "network JSON file")->required();
    auto* t = cmd->add_option("--target", cf.target, "target moment, e.g. X or X^2");
    if (target_required) t->required();
    cmd->add_option("--rho", cf.rho, "species truncation order")->check(CLI::Range(1, 12));
    cmd->add_option("--sigma", cf.sigma, "parameter truncation order")->check(CLI::Range(0, 16));
    cmd->add_option("--scale", cf.scales,
                    "scaling constant NAME=VALUE (species or uncertain parameter), repeatable");
}

int run_bound(const CommonFlags& cf, const std::string& direction, const std::string& sdpa_path,
              std::optional<double> tol_gap, std::optional<double> tol_feas) {
    mb::Network net = load_network(cf.network_file);
    mb::BoundRequest req;
    req.target = mb::parse_target(net, cf.target);
    req.rho = cf.rho;
    req.sigma = cf.sigma;
    if (!cf.scales.empty()) req.scale = parse_scales(net, cf.scales);
    if (tol_gap || tol_feas) {
        mb::SolverSettings st =
            mb::recommended_settings(cf.rho, cf.sigma, net.uncertain_param_indices().size(),
                                     mb::has_full_moment_info(net, cf.sigma));
        if (tol_gap) st.tol_gap = *tol_gap;
        if (tol_feas) st.tol_feas = *tol_feas;
        req.settings = st;
    }

    if (!sdpa_path.empty()) {
        mb::Direction dir = direction == "max" ? mb::Direction::maximize : mb::Direction::minimize;
        std::ofstream out(sdpa_path);
        if (!out) throw std::runtime_error("cannot write SDPA file: " + sdpa_path);
        out << mb::export_bound_sdpa(net, req, dir);
    }

    nlohmann::ordered_json row;
    int code = 0;
    if (direction == "both") {
        mb::BoundPair bp = mb::compute_bounds(net, req);
        row = {{"target", cf.target},
               {"rho", cf.rho},
               {"sigma", cf.sigma},
               {"lb", result_json(bp.lo)},
               {"ub", result_json(bp.hi)},
               {"gap", bp.gap()},
               {"seconds", bp.seconds}};
        code = std::max(status_exit(bp.lo.status), status_exit(bp.hi.status));
    } else {
        mb::Direction dir = direction == "max" ? mb::Direction::maximize : mb::Direction::minimize;
        mb::BoundResult r = mb::compute_bound(net, req, dir);
        row = result_json(r);
        row["target"] = cf.target;
        row["rho"] = cf.rho;
        row["sigma"] = cf.sigma;
        code = status_exit(r.status);
    }
    std::cout << row.dump(2) << "\n";
    return code;
}

int run_sweep(const CommonFlags& cf, const std::vector<double>& r_values, int sigma_min,
              int sigma_max, int jobs) {
    mb::Network net = load_network(cf.network_file);
    mb::SweepSpec spec;
    spec.target = mb::parse_target(net, cf.target);
    spec.rho = cf.rho;
    spec.sigma_lo = sigma_min;
    spec.sigma_hi = sigma_max;
    spec.r_values = r_values;
    spec.jobs = jobs;
    if (!cf.scales.empty()) spec.scale = parse_scales(net, cf.scales);
    std::vector<mb::SweepRow> rows = mb::run_sweep(net, spec);

    std::cout << "r,sigma,lb,ub,gap,lb_status,ub_status,seconds\n";
    char buf[256];
    int worst = 0;
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%.9g,%d,%.9g,%.9g,%.9g,%s,%s,%.3f\n", row.r, row.sigma,
                      row.bounds.lo.value, row.bounds.hi.value, row.bounds.gap(),
                      mb::to_string(row.bounds.lo.status), mb::to_string(row.bounds.hi.status),
                      row.bounds.seconds);
        std::cout << buf;
        worst = std::max({worst, status_exit(row.bounds.lo.status),
                          status_exit(row.bounds.hi.status)});
    }
    return worst;
}

int run_check(const CommonFlags& cf, double r, int cells, uint64_t seed, double t_end,
              int64_t n_max) {
    mb::Network net = load_network(cf.network_file);
    mb::BoundRequest req;
    req.target = mb::parse_target(net, cf.target);
    req.rho = cf.rho;
    req.sigma = cf.sigma;
    if (!cf.scales.empty()) req.scale = parse_scales(net, cf.scales);

    auto unc = net.uncertain_param_indices();
    mb::CheckReport rep;
    if (unc.empty()) {
        mb::ParamSample k;
        for (const auto& p : net.params) k.values.push_back(p.value.to_double());
        rep = mb::check_oracle(net, req, k, n_max);
    } else {
        mb::SimConfig cfg;
        cfg.n_cells = cells;
        cfg.seed = seed;
        cfg.t_end = t_end;
        rep = mb::check_simulation(net, req, r, cfg);
    }

    nlohmann::ordered_json j = {
        {"verdict", rep.pass ? "PASS" : "FAIL"},
        {"mode", rep.mode == mb::CheckMode::oracle ? "oracle" : "simulation"},
        {"lb", rep.lb},
        {"ub", rep.ub},
        {"observed_lo", rep.observed_lo},
        {"observed_hi", rep.observed_hi},
        {"epsilon", rep.epsilon}};
    if (rep.mode == mb::CheckMode::oracle) {
        j["tail_mass"] = rep.tail_mass;
    } else {
        j["achieved_corr_positive"] = rep.achieved_corr_pos;
        j["achieved_corr_negative"] = rep.achieved_corr_neg;
        j["stationarity_warning"] = rep.stationarity_warning;
    }
    if (!rep.detail.empty()) j["detail"] = rep.detail;
    std::cout << j.dump(2) << "\n";
    return rep.pass ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Guaranteed bounds on stationary moments of reaction networks "
                 "under parameter uncertainty"};
    app.require_subcommand(1);

    CommonFlags bf, sf, kf;

    auto* bound = app.add_subcommand("bound", "compute one moment bound");
    add_common(bound, bf, true);
    std::string direction = "both", sdpa_path;
    std::optional<double> tol_gap, tol_feas;
    bound->add_option("--direction", direction, "min, max or both")
        ->check(CLI::IsMember({"min", "max", "both"}));
    bound->add_option("--export-sdpa", sdpa_path, "also write the problem in SDPA sparse format");
    bound->add_option("--tol-gap", tol_gap, "override duality-gap tolerance");
    bound->add_option("--tol-feas", tol_feas, "override feasibility tolerance");

    auto* sweep = app.add_subcommand("sweep", "bound grid over correlation r and sigma");
    add_common(sweep, sf, true);
    std::vector<double> r_values{0.0};
    int sigma_min = 1, sigma_max = 1, jobs = default_jobs();
    sweep->add_option("--r", r_values, "correlation bound values, repeatable")
        ->check(CLI::Range(0.0, 1.0));
    sweep->add_option("--sigma-min", sigma_min)->check(CLI::Range(0, 16));
    sweep->add_option("--sigma-max", sigma_max)->check(CLI::Range(0, 16));
    sweep->add_option("--jobs", jobs, "parallel sweep cells (default: MOMENTBOUND_JOBS or 1)")
        ->check(CLI::Range(1, 256));

    auto* check = app.add_subcommand("check", "validate bounds against an oracle or SSA");
    add_common(check, kf, true);
    double r = 0.2, t_end = 1440;
    int cells = 10000;
    uint64_t seed = 0;
    int64_t n_max = 400;
    check->add_option("--r", r, "correlation bound for the sampling protocol")
        ->check(CLI::Range(0.0, 1.0));
    check->add_option("--cells", cells, "SSA ensemble size")->check(CLI::Range(2, 10000000));
    check->add_option("--seed", seed, "RNG seed");
    check->add_option("--t-end", t_end, "SSA end time");
    check->add_option("--n-max", n_max, "oracle truncation cap")->check(CLI::Range(1, 100000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // collapse CLI11's exit-code family onto the documented usage code
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (bound->parsed()) return run_bound(bf, direction, sdpa_path, tol_gap, tol_feas);
        if (sweep->parsed()) {
            if (sf.sigma != 0) sigma_min = sigma_max = sf.sigma;  // --sigma as shorthand
            return run_sweep(sf, r_values, sigma_min, sigma_max, jobs);
        }
        if (check->parsed()) return run_check(kf, r, cells, seed, t_end, n_max);
    } catch (const mb::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
