#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "momentbound/netspec.hpp"

namespace momentbound {

/// Philox4x32-10 counter-based generator. Each (seed, stream) pair yields an
/// independent sequence, so per-cell substreams stay reproducible regardless
/// of scheduling.
class Philox {
public:
    using result_type = uint32_t;

    Philox(uint64_t seed, uint64_t stream) {
        key_ = {(uint32_t)(seed & 0xffffffffu), (uint32_t)(seed >> 32)};
        ctr_ = {0, 0, (uint32_t)(stream & 0xffffffffu), (uint32_t)(stream >> 32)};
        idx_ = 4;
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xffffffffu; }

    result_type operator()() {
        if (idx_ == 4) {
            buf_ = block(ctr_, key_);
            if (++ctr_[0] == 0) ++ctr_[1];
            idx_ = 0;
        }
        return buf_[idx_++];
    }

private:
    static std::array<uint32_t, 4> block(std::array<uint32_t, 4> c, std::array<uint32_t, 2> k) {
        constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
        constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            uint64_t p0 = (uint64_t)M0 * c[0];
            uint64_t p1 = (uint64_t)M1 * c[2];
            c = {(uint32_t)(p1 >> 32) ^ c[1] ^ k[0], (uint32_t)p1,
                 (uint32_t)(p0 >> 32) ^ c[3] ^ k[1], (uint32_t)p0};
            k[0] += W0;
            k[1] += W1;
        }
        return c;
    }

    std::array<uint32_t, 2> key_;
    std::array<uint32_t, 4> ctr_;
    std::array<uint32_t, 4> buf_{};
    int idx_ = 4;
};

/// One realization of the full parameter vector, ordered as net.params.
struct ParamSample {
    std::vector<double> values;
};

struct SimConfig {
    double t_end = 1440;
    int n_cells = 100000;
    uint64_t seed = 0;
    std::vector<int64_t> x0;  // empty means all-zero initial copy numbers

    void validate() const {
        if (!(t_end > 0)) throw std::invalid_argument("t_end must be > 0");
        if (n_cells < 1) throw std::invalid_argument("n_cells must be >= 1");
    }
};

namespace detail {

struct CompiledReaction {
    int rate_param;                              // index into net.params
    double const_factor;
    std::vector<std::pair<int, int>> orders;     // (species, order)
    std::vector<std::pair<int, int64_t>> delta;  // (species, change)
};

inline std::vector<CompiledReaction> compile_reactions(const Network& net) {
    std::vector<CompiledReaction> out;
    out.reserve(net.reactions.size());
    for (const auto& rxn : net.reactions) {
        CompiledReaction cr;
        cr.rate_param = net.param_index(rxn.propensity.rate_param);
        cr.const_factor = rxn.propensity.const_factor.to_double();
        for (const auto& [name, m] : rxn.propensity.orders)
            cr.orders.emplace_back(net.species_index(name), m);
        for (const auto& [name, d] : rxn.stoich)
            cr.delta.emplace_back(net.species_index(name), d);
        out.push_back(std::move(cr));
    }
    return out;
}

/// Mass-action propensity k * c * prod_j x_j (x_j - 1) ... (x_j - m_j + 1).
inline double propensity(const CompiledReaction& cr, const std::vector<int64_t>& x, double k) {
    double a = k * cr.const_factor;
    for (const auto& [sp, m] : cr.orders)
        for (int i = 0; i < m; ++i) a *= (double)(x[sp] - i);
    return a;
}

}  // namespace detail

/// Gillespie direct-method jump simulation to cfg.t_end. `cell` selects the
/// RNG substream; same (seed, cell) reproduces the path bit for bit. The
/// optional midpoint capture supports stationarity sanity checks.
inline std::vector<int64_t> ssa_path(const Network& net, const ParamSample& k,
                                     const SimConfig& cfg, uint64_t cell = 0,
                                     std::vector<int64_t>* at_half_time = nullptr) {
    cfg.validate();
    if (k.values.size() != net.n_params())
        throw std::invalid_argument("ssa_path: parameter sample arity mismatch");
    for (double v : k.values)
        if (!(v > 0)) throw std::invalid_argument("ssa_path: parameters must be positive");
    auto reactions = detail::compile_reactions(net);
    std::vector<int64_t> x(net.n_species(), 0);
    if (!cfg.x0.empty()) {
        if (cfg.x0.size() != net.n_species())
            throw std::invalid_argument("ssa_path: x0 arity mismatch");
        x = cfg.x0;
    }
    Philox rng(cfg.seed, cell);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double t_half = cfg.t_end / 2;
    bool half_recorded = false;
    double t = 0;
    // Dense per-path safety cap; exceeding it indicates an explosive system.
    constexpr int64_t kMaxSteps = 50'000'000;
    std::vector<double> a(reactions.size());
    for (int64_t step = 0;; ++step) {
        if (step >= kMaxSteps)
            throw std::runtime_error(
                "ssa_path: step limit exceeded; the chain looks explosive, violating the "
                "non-explosiveness assumption behind stationary moment analysis");
        double a0 = 0;
        for (size_t j = 0; j < reactions.size(); ++j) {
            a[j] = detail::propensity(reactions[j], x, k.values[reactions[j].rate_param]);
            if (a[j] < 0)
                throw std::runtime_error("ssa_path: negative propensity at a reachable state");
            a0 += a[j];
        }
        double dt = a0 > 0 ? -std::log1p(-unif(rng)) / a0
                           : std::numeric_limits<double>::infinity();
        if (!half_recorded && t + dt >= t_half) {
            if (at_half_time) *at_half_time = x;
            half_recorded = true;
        }
        if (t + dt >= cfg.t_end) break;
        t += dt;
        double u = unif(rng) * a0;
        size_t j = 0;
        for (; j + 1 < reactions.size(); ++j) {
            if (u < a[j]) break;
            u -= a[j];
        }
        for (const auto& [sp, d] : reactions[j].delta) x[sp] += d;
    }
    return x;
}

enum class CorrSign { positive, negative };

/// Output of the sort-pair / directed-swap coupling protocol.
struct CorrelatedSamples {
    std::vector<ParamSample> pairs;  // each sample holds the two drawn values
    double corr = 0;                 // achieved empirical correlation
    long swaps = 0;                  // accepted swaps
    bool converged = true;
    std::string note;
};

/// Draws n pairs from two gamma marginals, sort-pairs them (ascending for
/// positive coupling, ascending/descending for negative) and applies random
/// pair swaps, accepting only swaps that move the empirical correlation
/// toward the target. Swaps permute the second coordinate, so both marginal
/// multisets are preserved exactly.
inline CorrelatedSamples sample_correlated_params(const GammaSpec& spec_a,
                                                  const GammaSpec& spec_b, double r,
                                                  CorrSign sign, int n, uint64_t seed) {
    if (n < 2) throw std::invalid_argument("sample_correlated_params: n must be >= 2");
    if (!(r >= 0 && r <= 1))
        throw std::invalid_argument("sample_correlated_params: r must be in [0, 1]");
    std::vector<double> a(n), b(n);
    {
        Philox rng_a(seed, 0), rng_b(seed, 1);
        std::gamma_distribution<double> ga(spec_a.shape.to_double(), spec_a.scale.to_double());
        std::gamma_distribution<double> gb(spec_b.shape.to_double(), spec_b.scale.to_double());
        for (int i = 0; i < n; ++i) a[i] = ga(rng_a);
        for (int i = 0; i < n; ++i) b[i] = gb(rng_b);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (sign == CorrSign::negative) std::reverse(b.begin(), b.end());

    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double va = 0, vb = 0, sab = 0;
    for (int i = 0; i < n; ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        sab += a[i] * b[i];
    }
    double denom = std::sqrt(va * vb);
    // corr = (sab - n ma mb) / denom; only sab changes under swaps.
    auto corr_of = [&](double s) { return denom > 0 ? (s - n * ma * mb) / denom : 0.0; };

    CorrelatedSamples out;
    Philox rng(seed, 2);
    std::uniform_int_distribution<int> pick(0, n - 1);
    const long budget = 500L * n;
    long attempts = 0;
    auto satisfied = [&](double c) {
        return sign == CorrSign::positive ? c <= r : c >= -r;
    };
    while (!satisfied(corr_of(sab)) && attempts < budget) {
        ++attempts;
        int i = pick(rng), j = pick(rng);
        if (i == j) continue;
        double delta = (a[i] - a[j]) * (b[j] - b[i]);
        bool toward = sign == CorrSign::positive ? delta < 0 : delta > 0;
        if (!toward) continue;
        std::swap(b[i], b[j]);
        sab += delta;
        ++out.swaps;
    }
    out.corr = corr_of(sab);
    out.converged = satisfied(out.corr);
    if (!out.converged)
        out.note = "swap budget exhausted; achieved correlation " + std::to_string(out.corr);
    out.pairs.reserve(n);
    for (int i = 0; i < n; ++i) out.pairs.push_back(ParamSample{{a[i], b[i]}});
    return out;
}

/// Mean copy number of one species over an ensemble of cells, one parameter
/// sample per cell, with its standard error. `stationarity_warning` is set
/// when the midpoint and endpoint means differ by more than two standard
/// errors, suggesting t_end is too short for the chain to settle.
struct EnsembleStats {
    double mean = 0;
    double se = 0;
    bool stationarity_warning = false;
};

inline EnsembleStats ensemble_mean(const Network& net, const std::vector<ParamSample>& cells,
                                   const SimConfig& cfg, int target_species = 0) {
    if (cells.empty()) throw std::invalid_argument("ensemble_mean: empty ensemble");
    double sum = 0, sumsq = 0, sum_half = 0;
    for (size_t i = 0; i < cells.size(); ++i) {
        std::vector<int64_t> half;
        std::vector<int64_t> x = ssa_path(net, cells[i], cfg, i, &half);
        double v = (double)x[target_species];
        sum += v;
        sumsq += v * v;
        sum_half += (double)half[target_species];
    }
    double n = (double)cells.size();
    EnsembleStats st;
    st.mean = sum / n;
    double var = std::max(0.0, (sumsq - n * st.mean * st.mean) / std::max(1.0, n - 1));
    st.se = std::sqrt(var / n);
    double mean_half = sum_half / n;
    st.stationarity_warning = std::abs(mean_half - st.mean) > 2 * st.se && st.se > 0;
    return st;
}

struct MeanInterval {
    double lo = 0, hi = 0;
    double max_se = 0;
    bool stationarity_warning = false;
};

/// Interval spanned by per-ensemble mean copy numbers. Each inner vector is
/// one experimental condition (e.g. one coupling sign), simulated cell by
/// cell.
inline MeanInterval empirical_mean_interval(const Network& net,
                                            const std::vector<std::vector<ParamSample>>& ensembles,
                                            const SimConfig& cfg, int target_species = 0) {
    if (ensembles.empty()) throw std::invalid_argument("empirical_mean_interval: no ensembles");
    MeanInterval mi;
    mi.lo = std::numeric_limits<double>::infinity();
    mi.hi = -mi.lo;
    for (const auto& cells : ensembles) {
        EnsembleStats st = ensemble_mean(net, cells, cfg, target_species);
        mi.lo = std::min(mi.lo, st.mean);
        mi.hi = std::max(mi.hi, st.mean);
        mi.max_se = std::max(mi.max_se, st.se);
        mi.stationarity_warning = mi.stationarity_warning || st.stationarity_warning;
    }
    return mi;
}

inline MeanInterval empirical_mean_interval(const Network& net,
                                            const std::vector<ParamSample>& cells,
                                            const SimConfig& cfg, int target_species = 0) {
    return empirical_mean_interval(net, std::vector<std::vector<ParamSample>>{cells}, cfg,
                                   target_species);
}

struct StationaryResult {
    std::vector<double> mean;  // per species
    double tail_mass = 0;      // probability on the truncation boundary
};

/// Stationary distribution of the chain restricted to the box
/// {0..n_max}^n_species; reactions that would leave the box are dropped.
/// Solves pi' Q = 0 with the normalization row sum(pi) = 1 by dense LU.
/// Intended as an independent fixed-parameter oracle, not a production FSP.
inline StationaryResult truncated_chain_stationary(const Network& net, const ParamSample& k,
                                                   int64_t n_max) {
    if (n_max < 0) throw std::invalid_argument("truncated_chain_stationary: n_max must be >= 0");
    if (k.values.size() != net.n_params())
        throw std::invalid_argument("truncated_chain_stationary: parameter arity mismatch");
    size_t ns = net.n_species();
    int64_t side = n_max + 1;
    double total_d = std::pow((double)side, (double)ns);
    if (total_d > 250000)
        throw std::invalid_argument("truncated_chain_stationary: state box too large");
    int64_t total = (int64_t)total_d;
    auto reactions = detail::compile_reactions(net);

    auto decode = [&](int64_t idx) {
        std::vector<int64_t> x(ns);
        for (size_t s = 0; s < ns; ++s) {
            x[s] = idx % side;
            idx /= side;
        }
        return x;
    };
    auto encode = [&](const std::vector<int64_t>& x) {
        int64_t idx = 0;
        for (size_t s = ns; s-- > 0;) idx = idx * side + x[s];
        return idx;
    };

    // Rows of M are Q^T; the last row is replaced by the normalization.
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(total, total);
    for (int64_t i = 0; i < total; ++i) {
        std::vector<int64_t> x = decode(i);
        for (const auto& cr : reactions) {
            double a = detail::propensity(cr, x, k.values[cr.rate_param]);
            if (a <= 0) continue;
            std::vector<int64_t> y = x;
            bool inside = true;
            for (const auto& [sp, d] : cr.delta) {
                y[sp] += d;
                if (y[sp] < 0 || y[sp] > n_max) inside = false;
            }
            if (!inside) continue;
            int64_t j = encode(y);
            M(j, i) += a;
            M(i, i) -= a;
        }
    }
    M.row(total - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(total);
    rhs[total - 1] = 1;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible())
        throw std::runtime_error(
            "truncated_chain_stationary: singular stationary system (disconnected chain)");
    Eigen::VectorXd pi = lu.solve(rhs);

    StationaryResult res;
    res.mean.assign(ns, 0.0);
    for (int64_t i = 0; i < total; ++i) {
        std::vector<int64_t> x = decode(i);
        bool boundary = false;
        for (size_t s = 0; s < ns; ++s) {
            res.mean[s] += pi[i] * (double)x[s];
            if (x[s] == n_max) boundary = true;
        }
        if (boundary) res.tail_mass += std::abs(pi[i]);
    }
    return res;
}

}  // namespace momentbound
