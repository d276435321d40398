#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "momentbound/sdpbuild.hpp"

namespace momentbound {

struct SolverSettings {
    double tol_gap = 1e-8;
    double tol_feas = 1e-8;
    // Certificates stay strict even when tol_feas is relaxed, so a loosely
    // solved problem is never misreported as infeasible.
    double tol_infeas = 1e-8;
    int max_iters = 200;
    double step_fraction = 0.98;
    bool verbose = false;
};

enum class SolveStatus {
    optimal,
    primal_infeasible,
    dual_infeasible_or_unbounded,
    max_iters,
    numerical_failure
};

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::primal_infeasible: return "primal_infeasible";
        case SolveStatus::dual_infeasible_or_unbounded: return "dual_infeasible_or_unbounded";
        case SolveStatus::max_iters: return "max_iters";
        case SolveStatus::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

struct Solution {
    SolveStatus status = SolveStatus::numerical_failure;
    double value = std::numeric_limits<double>::quiet_NaN();  // original units
    std::vector<double> primal;  // in the variable space of the solved problem
    double primal_res = 0, dual_res = 0, gap = 0, rel_gap = 0;
    int iterations = 0;
    std::string message;
};

/// Feasibility of a candidate point, measured independently of the solver.
struct ResidualReport {
    double max_eq_violation = 0;
    double min_ineq_slack = std::numeric_limits<double>::infinity();
    double min_psd_eig = std::numeric_limits<double>::infinity();
    int worst_psd_block = -1;
};

inline ResidualReport residual_report(const ConicProblem& p, const std::vector<double>& x) {
    if (x.size() != p.variables.size())
        throw std::invalid_argument("residual_report: dimension mismatch");
    ResidualReport rep;
    auto eval = [&](const AffExpr& e) {
        double v = e.constant;
        for (const auto& [vi, c] : e.terms) v += c * x[vi];
        return v;
    };
    for (const auto& e : p.equalities)
        rep.max_eq_violation = std::max(rep.max_eq_violation, std::abs(eval(e)));
    for (const auto& e : p.inequalities)
        rep.min_ineq_slack = std::min(rep.min_ineq_slack, eval(e));
    for (size_t b = 0; b < p.psd_blocks.size(); ++b) {
        const PsdBlock& blk = p.psd_blocks[b];
        int nn = blk.size();
        Eigen::MatrixXd m(nn, nn);
        for (int i = 0; i < nn; ++i)
            for (int j = i; j < nn; ++j) m(i, j) = m(j, i) = eval(blk.at(i, j));
        double emin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly)
                          .eigenvalues()
                          .minCoeff();
        if (emin < rep.min_psd_eig) {
            rep.min_psd_eig = emin;
            rep.worst_psd_block = (int)b;
        }
    }
    return rep;
}

namespace ipm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct BlockEntry {
    int p, q;  // p <= q
    int var;
    double coef;
};

struct SdpBlock {
    int n = 0;
    MatrixXd F0;
    std::vector<BlockEntry> entries;
    std::vector<int> vars;                         // distinct vars, ascending
    std::vector<std::vector<BlockEntry>> by_var;   // aligned with vars
};

/// min f'y  s.t.  A y = b,  al_i·y + hl_i >= 0,  F0_j + Σ y_k F_jk >= 0.
struct StdForm {
    int nvar = 0;
    VectorXd f;
    MatrixXd A;
    VectorXd b;
    std::vector<std::vector<std::pair<int, double>>> lp_rows;
    VectorXd hl;
    std::vector<SdpBlock> blocks;

    int nlp() const { return (int)lp_rows.size(); }
    double cone_degree() const {
        double d = nlp();
        for (const auto& blk : blocks) d += blk.n;
        return d;
    }
};

struct ConeVec {
    VectorXd lp;
    std::vector<MatrixXd> mats;

    static ConeVec zero(const StdForm& sf) {
        ConeVec v;
        v.lp = VectorXd::Zero(sf.nlp());
        for (const auto& blk : sf.blocks) v.mats.push_back(MatrixXd::Zero(blk.n, blk.n));
        return v;
    }
    double dot(const ConeVec& o) const {
        double d = lp.dot(o.lp);
        for (size_t j = 0; j < mats.size(); ++j) d += (mats[j].array() * o.mats[j].array()).sum();
        return d;
    }
    double norm() const { return std::sqrt(dot(*this)); }
    void axpy(double a, const ConeVec& o) {
        lp += a * o.lp;
        for (size_t j = 0; j < mats.size(); ++j) mats[j] += a * o.mats[j];
    }
    void symmetrize() {
        for (auto& m : mats) m = 0.5 * (m + m.transpose()).eval();
    }
};

/// s = h - G y: the cone image of a point y together with the constants.
inline ConeVec cone_h(const StdForm& sf) {
    ConeVec v;
    v.lp = sf.hl;
    for (const auto& blk : sf.blocks) v.mats.push_back(blk.F0);
    return v;
}

inline ConeVec applyG(const StdForm& sf, const VectorXd& y) {
    ConeVec v = ConeVec::zero(sf);
    for (int i = 0; i < sf.nlp(); ++i) {
        double a = 0;
        for (const auto& [k, c] : sf.lp_rows[i]) a += c * y[k];
        v.lp[i] = -a;
    }
    for (size_t j = 0; j < sf.blocks.size(); ++j) {
        const auto& blk = sf.blocks[j];
        MatrixXd& m = v.mats[j];
        for (const auto& e : blk.entries) {
            m(e.p, e.q) -= e.coef * y[e.var];
            if (e.p != e.q) m(e.q, e.p) -= e.coef * y[e.var];
        }
    }
    return v;
}

inline VectorXd applyGT(const StdForm& sf, const ConeVec& u) {
    VectorXd r = VectorXd::Zero(sf.nvar);
    for (int i = 0; i < sf.nlp(); ++i)
        for (const auto& [k, c] : sf.lp_rows[i]) r[k] -= c * u.lp[i];
    for (size_t j = 0; j < sf.blocks.size(); ++j) {
        const auto& blk = sf.blocks[j];
        for (const auto& e : blk.entries) {
            double w = e.p == e.q ? u.mats[j](e.p, e.q) : u.mats[j](e.p, e.q) + u.mats[j](e.q, e.p);
            r[e.var] -= e.coef * w;
        }
    }
    return r;
}

struct BlockScale {
    MatrixXd R, Rinv, Tinv;
    VectorXd lam;
};

struct Scaling {
    VectorXd w_lp, lam_lp;
    std::vector<BlockScale> bs;
    bool identity = false;
};

inline std::optional<Scaling> compute_scaling(const StdForm& sf, const ConeVec& s,
                                              const ConeVec& z) {
    Scaling W;
    int nl = sf.nlp();
    W.w_lp.resize(nl);
    W.lam_lp.resize(nl);
    for (int i = 0; i < nl; ++i) {
        if (!(s.lp[i] > 0) || !(z.lp[i] > 0)) return std::nullopt;
        W.w_lp[i] = std::sqrt(s.lp[i] / z.lp[i]);
        W.lam_lp[i] = std::sqrt(s.lp[i] * z.lp[i]);
    }
    for (size_t j = 0; j < sf.blocks.size(); ++j) {
        Eigen::LLT<MatrixXd> ls(s.mats[j]), lz(z.mats[j]);
        if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return std::nullopt;
        MatrixXd Ls = ls.matrixL(), Lz = lz.matrixL();
        Eigen::BDCSVD<MatrixXd> svd(Lz.transpose() * Ls,
                                    Eigen::ComputeFullU | Eigen::ComputeFullV);
        VectorXd sig = svd.singularValues();
        if (sig.minCoeff() <= 0) return std::nullopt;
        BlockScale b;
        b.lam = sig;
        VectorXd isqrt = sig.array().sqrt().inverse();
        b.R = Ls * svd.matrixV() * isqrt.asDiagonal();
        // Rinv = sqrt(Sig) V' Ls^{-1}
        MatrixXd lsinv = Ls.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(b.R.rows(), b.R.cols()));
        b.Rinv = sig.array().sqrt().matrix().asDiagonal() * svd.matrixV().transpose() * lsinv;
        b.Tinv = b.Rinv.transpose() * b.Rinv;
        W.bs.push_back(std::move(b));
    }
    return W;
}

inline Scaling identity_scaling(const StdForm& sf) {
    Scaling W;
    W.identity = true;
    W.w_lp = VectorXd::Ones(sf.nlp());
    W.lam_lp = VectorXd::Ones(sf.nlp());
    for (const auto& blk : sf.blocks) {
        BlockScale b;
        b.R = b.Rinv = b.Tinv = MatrixXd::Identity(blk.n, blk.n);
        b.lam = VectorXd::Ones(blk.n);
        W.bs.push_back(std::move(b));
    }
    return W;
}

// Scaled-space maps: lambda = W^{-T}s = Wz.
inline ConeVec scale_z(const StdForm& sf, const Scaling& W, const ConeVec& z) {
    ConeVec v = z;
    v.lp = W.w_lp.cwiseProduct(z.lp);
    for (size_t j = 0; j < sf.blocks.size(); ++j)
        v.mats[j] = W.bs[j].R.transpose() * z.mats[j] * W.bs[j].R;
    return v;
}
inline ConeVec scale_s(const StdForm& sf, const Scaling& W, const ConeVec& s) {
    ConeVec v = s;
    v.lp = s.lp.cwiseQuotient(W.w_lp);
    for (size_t j = 0; j < sf.blocks.size(); ++j)
        v.mats[j] = W.bs[j].Rinv * s.mats[j] * W.bs[j].Rinv.transpose();
    return v;
}
/// ds = W'(v) for a scaled-space v.
inline ConeVec unscale_to_s(const StdForm& sf, const Scaling& W, const ConeVec& v) {
    ConeVec r = v;
    r.lp = W.w_lp.cwiseProduct(v.lp);
    for (size_t j = 0; j < sf.blocks.size(); ++j)
        r.mats[j] = W.bs[j].R * v.mats[j] * W.bs[j].R.transpose();
    return r;
}
inline ConeVec apply_WtW_inv(const StdForm& sf, const Scaling& W, const ConeVec& u) {
    ConeVec v = u;
    v.lp = u.lp.cwiseQuotient(W.w_lp.cwiseProduct(W.w_lp));
    for (size_t j = 0; j < sf.blocks.size(); ++j)
        v.mats[j] = W.bs[j].Tinv * u.mats[j] * W.bs[j].Tinv;
    return v;
}

struct Kkt {
    Eigen::LLT<MatrixXd> Mllt;
    Eigen::LLT<MatrixXd> Ellt;
    bool has_eq = false;
    const StdForm* sf = nullptr;
    const Scaling* W = nullptr;

    bool factor(const StdForm& sform, const Scaling& scal) {
        sf = &sform;
        W = &scal;
        int n = sf->nvar;
        MatrixXd M = MatrixXd::Zero(n, n);
        for (int i = 0; i < sf->nlp(); ++i) {
            double wi2 = 1.0 / (scal.w_lp[i] * scal.w_lp[i]);
            for (const auto& [k1, c1] : sf->lp_rows[i])
                for (const auto& [k2, c2] : sf->lp_rows[i]) M(k1, k2) += wi2 * c1 * c2;
        }
        for (size_t j = 0; j < sf->blocks.size(); ++j) {
            const auto& blk = sf->blocks[j];
            const MatrixXd& T = scal.bs[j].Tinv;
            MatrixXd Y(blk.n, blk.n);
            for (size_t ki = 0; ki < blk.vars.size(); ++ki) {
                Y.setZero();
                for (const auto& e : blk.by_var[ki]) {
                    if (e.p == e.q)
                        Y.noalias() += e.coef * (T.col(e.p) * T.col(e.q).transpose());
                    else {
                        Y.noalias() += e.coef * (T.col(e.p) * T.col(e.q).transpose());
                        Y.noalias() += e.coef * (T.col(e.q) * T.col(e.p).transpose());
                    }
                }
                int gk = blk.vars[ki];
                for (size_t li = 0; li <= ki; ++li) {
                    double acc = 0;
                    for (const auto& e : blk.by_var[li]) {
                        double y = e.p == e.q ? Y(e.p, e.q) : Y(e.p, e.q) + Y(e.q, e.p);
                        acc += e.coef * y;
                    }
                    int gl = blk.vars[li];
                    M(gl, gk) += acc;
                    if (gl != gk) M(gk, gl) += acc;
                }
            }
        }
        // Two-level Cholesky: factor M, then the Schur complement over the
        // equality rows, escalating the diagonal regularization if needed.
        // The Hessian scaling built into M keeps this implicitly equilibrated,
        // which beats pivoted solves of the raw augmented system here.
        double reg = 0;
        double base = M.diagonal().cwiseAbs().maxCoeff();
        if (!(base > 0)) base = 1.0;
        for (int attempt = 0; attempt < 4; ++attempt) {
            MatrixXd Mr = M;
            if (reg > 0) Mr.diagonal().array() += reg;
            Mllt.compute(Mr);
            if (Mllt.info() == Eigen::Success) break;
            reg = reg == 0 ? 1e-14 * base : reg * 1e3;
            if (attempt == 3) return false;
        }
        has_eq = sf->A.rows() > 0;
        if (has_eq) {
            MatrixXd S = Mllt.solve(sf->A.transpose());
            MatrixXd E = sf->A * S;
            double ereg = 0;
            double ebase = std::max(1.0, E.diagonal().cwiseAbs().maxCoeff());
            for (int attempt = 0; attempt < 4; ++attempt) {
                MatrixXd Er = E;
                if (ereg > 0) Er.diagonal().array() += ereg;
                Ellt.compute(Er);
                if (Ellt.info() == Eigen::Success) break;
                ereg = ereg == 0 ? 1e-14 * ebase : ereg * 1e3;
                if (attempt == 3) return false;
            }
        }
        return true;
    }

    void solve_once(const VectorXd& bx, const VectorXd& by, const ConeVec& bz, VectorXd& dx,
                    VectorXd& dy, ConeVec& dz) const {
        ConeVec v = apply_WtW_inv(*sf, *W, bz);
        VectorXd u = bx + applyGT(*sf, v);
        if (has_eq) {
            VectorXd t = Mllt.solve(u);
            dy = Ellt.solve(sf->A * t - by);
            dx = Mllt.solve(u - sf->A.transpose() * dy);
        } else {
            dy.resize(0);
            dx = Mllt.solve(u);
        }
        ConeVec g = applyG(*sf, dx);
        g.axpy(-1.0, bz);
        dz = apply_WtW_inv(*sf, *W, g);
    }

    /// Iterative refinement keeps the Schur-complement solve accurate on
    /// ill-conditioned moment problems.
    void solve(const VectorXd& bx, const VectorXd& by, const ConeVec& bz, VectorXd& dx,
               VectorXd& dy, ConeVec& dz, int refine_rounds = 2) const {
        solve_once(bx, by, bz, dx, dy, dz);
        for (int round = 0; round < refine_rounds; ++round) {
            // Residuals of the 3-block system; W'W dz = W'(W dz).
            ConeVec wdz = unscale_to_s(*sf, *W, scale_z(*sf, *W, dz));
            VectorXd r1 = bx - (applyGT(*sf, dz) + (has_eq ? VectorXd(sf->A.transpose() * dy)
                                                           : VectorXd(VectorXd::Zero(sf->nvar))));
            VectorXd r2 = has_eq ? VectorXd(by - sf->A * dx) : VectorXd();
            ConeVec r3 = applyG(*sf, dx);
            r3.axpy(-1.0, wdz);
            ConeVec bz_r = bz;
            bz_r.axpy(-1.0, r3);
            // r3 holds G dx - W'W dz; residual = bz - that.
            VectorXd cx, cy;
            ConeVec cz;
            solve_once(r1, has_eq ? r2 : VectorXd(), bz_r, cx, cy, cz);
            dx += cx;
            if (has_eq) dy += cy;
            dz.axpy(1.0, cz);
        }
    }
};

/// Max step a such that v + a*d stays in the cone (in scaled space where the
/// current point is lam / diag(lam)).
inline double max_step(const StdForm& sf, const Scaling& W, const ConeVec& d_scaled) {
    double amax = std::numeric_limits<double>::infinity();
    for (int i = 0; i < sf.nlp(); ++i) {
        if (d_scaled.lp[i] < 0) amax = std::min(amax, -W.lam_lp[i] / d_scaled.lp[i]);
    }
    for (size_t j = 0; j < sf.blocks.size(); ++j) {
        const VectorXd& lam = W.bs[j].lam;
        VectorXd isq = lam.array().sqrt().inverse();
        MatrixXd Dn = isq.asDiagonal() * d_scaled.mats[j] * isq.asDiagonal();
        double emin =
            Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (Dn + Dn.transpose()),
                                                    Eigen::EigenvaluesOnly)
                .eigenvalues()
                .minCoeff();
        if (emin < 0) amax = std::min(amax, -1.0 / emin);
    }
    return amax;
}

inline ConeVec compose(const StdForm& sf, const Scaling& W, const ConeVec& a, const ConeVec& b) {
    // Jordan product in scaled space.
    ConeVec v = ConeVec::zero(sf);
    v.lp = a.lp.cwiseProduct(b.lp);
    for (size_t j = 0; j < sf.blocks.size(); ++j)
        v.mats[j] = 0.5 * (a.mats[j] * b.mats[j] + b.mats[j] * a.mats[j]);
    return v;
}

inline ConeVec lambda_cone(const StdForm& sf, const Scaling& W) {
    ConeVec v = ConeVec::zero(sf);
    v.lp = W.lam_lp;
    for (size_t j = 0; j < sf.blocks.size(); ++j) v.mats[j] = W.bs[j].lam.asDiagonal();
    return v;
}

/// Solves lam ∘ u = b in scaled space (lam diagonal there).
inline ConeVec lambda_solve(const StdForm& sf, const Scaling& W, const ConeVec& b) {
    ConeVec v = b;
    v.lp = b.lp.cwiseQuotient(W.lam_lp);
    for (size_t j = 0; j < sf.blocks.size(); ++j) {
        const VectorXd& lam = W.bs[j].lam;
        MatrixXd& m = v.mats[j];
        for (int p = 0; p < m.rows(); ++p)
            for (int q = 0; q < m.cols(); ++q) m(p, q) = 2.0 * b.mats[j](p, q) / (lam[p] + lam[q]);
    }
    return v;
}

inline void add_identity(const StdForm& sf, ConeVec& v, double a) {
    v.lp.array() += a;
    for (auto& m : v.mats) m.diagonal().array() += a;
}

inline Solution solve_hsd(const StdForm& sf, const SolverSettings& st) {
    Solution sol;
    int n = sf.nvar;
    int ne = (int)sf.A.rows();
    if (sf.nlp() == 0 && sf.blocks.empty()) {
        sol.status = SolveStatus::numerical_failure;
        sol.message = "problem has no cone constraints";
        return sol;
    }

    VectorXd c = sf.f;
    VectorXd b = sf.b;
    ConeVec h = cone_h(sf);
    double normb = std::max(1.0, b.size() ? b.norm() : 0.0);
    double normh = std::max(1.0, h.norm());
    double normc = std::max(1.0, c.norm());
    double deg = sf.cone_degree();

    // --- Initialization from two least-norm solves with identity scaling ---
    Scaling W0 = identity_scaling(sf);
    Kkt kkt;
    if (!kkt.factor(sf, W0)) {
        sol.message = "initial KKT factorization failed";
        return sol;
    }
    VectorXd x, y, tmpy;
    ConeVec s = ConeVec::zero(sf), z = ConeVec::zero(sf);
    {
        VectorXd ux, uy;
        ConeVec uz;
        kkt.solve(VectorXd::Zero(n), b, h, ux, uy, uz);
        x = ux;
        s = uz;
        for (auto& m : s.mats) m = -m;
        s.lp = -s.lp;
        s.symmetrize();
        // Shift into the interior.
        double mineig = s.lp.size() ? s.lp.minCoeff() : 0.0;
        if (!s.lp.size()) mineig = std::numeric_limits<double>::infinity();
        for (const auto& m : s.mats)
            mineig = std::min(mineig, Eigen::SelfAdjointEigenSolver<MatrixXd>(m, Eigen::EigenvaluesOnly)
                                          .eigenvalues()
                                          .minCoeff());
        if (mineig < 1e-8) add_identity(sf, s, 1.0 - mineig);

        VectorXd vx, vy;
        ConeVec vz;
        kkt.solve(-c, VectorXd::Zero(ne), ConeVec::zero(sf), vx, vy, vz);
        y = vy;
        z = vz;
        z.symmetrize();
        double mineigz = z.lp.size() ? z.lp.minCoeff() : std::numeric_limits<double>::infinity();
        for (const auto& m : z.mats)
            mineigz = std::min(mineigz,
                               Eigen::SelfAdjointEigenSolver<MatrixXd>(m, Eigen::EigenvaluesOnly)
                                   .eigenvalues()
                                   .minCoeff());
        if (mineigz < 1e-8) add_identity(sf, z, 1.0 - mineigz);
    }
    if (ne == 0) y = VectorXd::Zero(0);
    double tau = 1.0, kappa = 1.0;

    auto lin_res = [&](double& rx_n, double& ry_n, double& rz_n, double& rt, VectorXd& rx,
                       VectorXd& ry, ConeVec& rz) {
        rx = applyGT(sf, z) + c * tau;
        if (ne) rx += sf.A.transpose() * y;
        ry = ne ? VectorXd(sf.A * x - b * tau) : VectorXd();
        rz = applyG(sf, x);
        rz.axpy(1.0, s);
        rz.axpy(-tau, h);
        rt = kappa + c.dot(x) + (ne ? b.dot(y) : 0.0) + h.dot(z);
        rx_n = rx.norm();
        ry_n = ne ? ry.norm() : 0.0;
        rz_n = rz.norm();
    };

    // Best iterate so far by worst-case accuracy; returned on stall so a
    // failed run still reports its most accurate point honestly.
    struct Best {
        double phi = std::numeric_limits<double>::infinity();
        double value = 0, pres = 0, dres = 0, gap = 0, relgap = 0;
        VectorXd primal;
    } best;
    int stall = 0;

    auto finish_with_best = [&](SolveStatus status, const std::string& msg) {
        sol.status = status;
        sol.message = msg;
        if (best.primal.size()) {
            sol.primal.assign(best.primal.data(), best.primal.data() + n);
            sol.primal_res = best.pres;
            sol.dual_res = best.dres;
            sol.gap = best.gap;
            sol.rel_gap = best.relgap;
            char buf[128];
            std::snprintf(buf, sizeof buf, " (best accuracy: pres %.1e dres %.1e relgap %.1e)",
                          best.pres, best.dres, best.relgap);
            sol.message += buf;
        }
        return sol;
    };

    for (int iter = 0; iter < st.max_iters; ++iter) {
        sol.iterations = iter;
        VectorXd rx, ry;
        ConeVec rz = ConeVec::zero(sf);
        double rx_n, ry_n, rz_n, rt;
        lin_res(rx_n, ry_n, rz_n, rt, rx, ry, rz);

        double stz = s.dot(z);
        double gap = stz / (tau * tau);
        double pcost = c.dot(x) / tau;
        double dcost = -((ne ? b.dot(y) : 0.0) + h.dot(z)) / tau;
        double relgap = gap / std::max(1.0, std::abs(pcost));
        double pres = std::max(ry_n / normb, rz_n / normh) / tau;
        double dres = rx_n / (normc * tau);

        double phi = std::max({pres, dres, std::min(gap, relgap)});
        if (phi < 0.9 * best.phi) {
            best.phi = phi;
            best.value = pcost;
            best.pres = pres;
            best.dres = dres;
            best.gap = gap;
            best.relgap = relgap;
            best.primal = x / tau;
            stall = 0;
        } else if (++stall >= 12) {
            return finish_with_best(SolveStatus::numerical_failure,
                                    "no progress over 12 iterations");
        }

        if (st.verbose)
            std::fprintf(stderr,
                         "it %3d pcost % .9e dcost % .9e gap %.2e pres %.2e dres %.2e tau %.2e "
                         "kap %.2e |x| %.2e |z| %.2e |s| %.2e\n",
                         iter, pcost, dcost, gap, pres, dres, tau, kappa, x.norm(), z.norm(),
                         s.norm());

        if (pres <= st.tol_feas && dres <= st.tol_feas &&
            (relgap <= st.tol_gap || gap <= st.tol_gap)) {
            sol.status = SolveStatus::optimal;
            sol.value = pcost;
            sol.primal.assign(x.data(), x.data() + n);
            for (auto& v : sol.primal) v /= tau;
            sol.primal_res = pres;
            sol.dual_res = dres;
            sol.gap = gap;
            sol.rel_gap = relgap;
            return sol;
        }
        // Certificates of infeasibility from the homogeneous iterate. The
        // certificate magnitude must dominate the cancellation in its own
        // dot products, otherwise a badly scaled feasible problem can fake
        // an arbitrarily clean certificate.
        double cert_mag = (ne ? std::abs(b.dot(y)) : 0.0) + std::abs(h.dot(z));
        double cert_p = -((ne ? b.dot(y) : 0.0) + h.dot(z));
        if (cert_p > 1e-6 * cert_mag && cert_p > 0) {
            VectorXd dres_vec = applyGT(sf, z);
            if (ne) dres_vec += sf.A.transpose() * y;
            double pinfres = dres_vec.norm() / (normc * cert_p);
            if (pinfres <= st.tol_infeas && kappa > 1e-8 * tau) {
                sol.status = SolveStatus::primal_infeasible;
                sol.message = "primal infeasibility certificate found";
                return sol;
            }
        }
        double cert_d = -c.dot(x);
        if (cert_d > 1e-6 * c.cwiseAbs().dot(x.cwiseAbs()) && cert_d > 0) {
            ConeVec gx = applyG(sf, x);
            gx.axpy(1.0, s);
            double dinfres = std::max(ne ? (sf.A * x).norm() / normb : 0.0, gx.norm() / normh) / cert_d;
            if (dinfres <= st.tol_infeas && kappa > 1e-8 * tau) {
                sol.status = SolveStatus::dual_infeasible_or_unbounded;
                sol.message = "dual infeasibility certificate found (objective unbounded)";
                return sol;
            }
        }

        auto Wopt = compute_scaling(sf, s, z);
        if (!Wopt)
            return finish_with_best(SolveStatus::numerical_failure,
                                    "iterate left the cone interior");
        const Scaling& W = *Wopt;
        if (!kkt.factor(sf, W))
            return finish_with_best(SolveStatus::numerical_failure, "KKT factorization failed");
        double mu = (stz + tau * kappa) / (deg + 1.0);

        VectorXd x1, y1;
        ConeVec z1;
        kkt.solve(-c, b, h, x1, y1, z1);
        double dd = c.dot(x1) + (ne ? b.dot(y1) : 0.0) + h.dot(z1) - kappa / tau;
        if (!std::isfinite(dd) || std::abs(dd) < 1e-300)
            return finish_with_best(SolveStatus::numerical_failure,
                                    "singular homogeneous subsystem");

        ConeVec lam = lambda_cone(sf, W);
        ConeVec dsa_sc, dza_sc;  // scaled affine directions, for the corrector
        double dtau_a = 0, dkap_a = 0;
        VectorXd dx, dy;
        ConeVec dz = ConeVec::zero(sf), ds = ConeVec::zero(sf);
        double dtau = 0, dkap = 0, sigma = 0;

        for (int pass = 0; pass < 2; ++pass) {
            ConeVec bs = compose(sf, W, lam, lam);
            bs.lp = -bs.lp;
            for (auto& m : bs.mats) m = -m;
            double bkap = -tau * kappa;
            if (pass == 1) {
                ConeVec corr = compose(sf, W, dsa_sc, dza_sc);
                bs.axpy(-1.0, corr);
                add_identity(sf, bs, sigma * mu);
                bkap += -dtau_a * dkap_a + sigma * mu;
            }
            double oms = 1.0 - sigma;
            VectorXd bx = -oms * rx;
            VectorXd by = ne ? VectorXd(-oms * ry) : VectorXd();
            double btau = -oms * rt;
            ConeVec lsb = lambda_solve(sf, W, bs);
            // bz* = -(1-sigma) rz - W'(lam^{-1} bs)
            ConeVec bz_rhs = unscale_to_s(sf, W, lsb);
            bz_rhs.lp = -bz_rhs.lp;
            for (auto& m : bz_rhs.mats) m = -m;
            bz_rhs.axpy(-oms, rz);
            VectorXd x2, y2;
            ConeVec z2;
            kkt.solve(bx, by, bz_rhs, x2, y2, z2);
            dtau = (btau - bkap / tau - (c.dot(x2) + (ne ? b.dot(y2) : 0.0) + h.dot(z2))) / dd;
            dx = x2 + dtau * x1;
            if (ne) dy = y2 + dtau * y1;
            dz = z2;
            dz.axpy(dtau, z1);
            // ds = W'(lam^{-1} bs - W dz)
            ConeVec wdz = scale_z(sf, W, dz);
            ConeVec inner = lsb;
            inner.axpy(-1.0, wdz);
            ds = unscale_to_s(sf, W, inner);
            dkap = (bkap - kappa * dtau) / tau;

            ConeVec ds_sc = inner;  // W^{-T} ds equals lam^{-1}bs - W dz
            double amax = std::min(max_step(sf, W, ds_sc), max_step(sf, W, wdz));
            if (dtau < 0) amax = std::min(amax, -tau / dtau);
            if (dkap < 0) amax = std::min(amax, -kappa / dkap);

            if (pass == 0) {
                double a_aff = std::min(1.0, amax);
                // Mehrotra centering: predicted complementarity after the
                // affine step, relative to the current one.
                ConeVec lpa = lam;
                lpa.axpy(a_aff, ds_sc);
                ConeVec lza = lam;
                lza.axpy(a_aff, wdz);
                double num = lpa.dot(lza) + (tau + a_aff * dtau) * (kappa + a_aff * dkap);
                double ratio = std::clamp(num / (stz + tau * kappa), 0.0, 1.0);
                sigma = ratio * ratio * ratio;
                dsa_sc = ds_sc;
                dza_sc = wdz;
                dtau_a = dtau;
                dkap_a = dkap;
            } else {
                double alpha = std::min(1.0, st.step_fraction * amax);
                if (!std::isfinite(alpha) || alpha <= 1e-12)
                    return finish_with_best(SolveStatus::numerical_failure,
                                            "step length collapsed");
                x += alpha * dx;
                if (ne) y += alpha * dy;
                s.axpy(alpha, ds);
                z.axpy(alpha, dz);
                s.symmetrize();
                z.symmetrize();
                tau += alpha * dtau;
                kappa += alpha * dkap;
                // The algorithm is invariant under a positive rescaling of the
                // whole iterate; renormalizing keeps tau+kappa at O(1) so that
                // roundoff does not erode the attainable feasibility.
                double rho = 2.0 / (tau + kappa);
                x *= rho;
                if (ne) y *= rho;
                s.lp *= rho;
                z.lp *= rho;
                for (auto& m : s.mats) m *= rho;
                for (auto& m : z.mats) m *= rho;
                tau *= rho;
                kappa *= rho;
            }
        }
    }
    return finish_with_best(SolveStatus::max_iters, "iteration limit reached");
}

/// Presolve: a variable with zero objective coefficient whose only occurrence
/// is a single diagonal PSD entry is an unbounded slack; the optimal value is
/// unchanged when its row and column are projected out. Removing it (and the
/// cascade it triggers) eliminates the zero-cost recession rays that
/// otherwise drive the homogeneous embedding's tau to zero.
struct PresolveInfo {
    struct Elim {
        int block;  // index into the original problem's psd_blocks
        int row;    // basis row in the original block
        int var;
    };
    std::vector<int> old_to_new;          // -1 for removed variables
    std::vector<int> kept;                // original index of each reduced variable
    std::vector<Elim> elims;              // in elimination order
    std::vector<int> orphans;             // variables that occur nowhere
    std::vector<std::vector<int>> rows;   // surviving original rows per block
};

inline PresolveInfo presolve_plan(const ConicProblem& p) {
    size_t nv = p.variables.size();
    std::vector<int> static_occ(nv, 0);
    for (const auto& [vi, c] : p.objective)
        if (c != 0.0) static_occ[vi] += 1;
    for (const auto& e : p.equalities)
        for (const auto& [vi, c] : e.terms)
            if (c != 0.0) static_occ[vi] += 1;
    for (const auto& e : p.inequalities)
        for (const auto& [vi, c] : e.terms)
            if (c != 0.0) static_occ[vi] += 1;

    PresolveInfo info;
    info.rows.resize(p.psd_blocks.size());
    for (size_t b = 0; b < p.psd_blocks.size(); ++b) {
        info.rows[b].resize(p.psd_blocks[b].size());
        for (int i = 0; i < p.psd_blocks[b].size(); ++i) info.rows[b][i] = i;
    }
    std::vector<char> removed(nv, 0);

    bool changed = true;
    while (changed) {
        changed = false;
        // Occurrences in the surviving PSD entries, remembering the unique
        // occurrence when there is exactly one.
        std::vector<int> psd_occ(nv, 0);
        std::vector<std::array<int, 3>> only(nv, {-1, -1, -1});  // block, row, col
        for (size_t b = 0; b < p.psd_blocks.size(); ++b) {
            const PsdBlock& blk = p.psd_blocks[b];
            const auto& rr = info.rows[b];
            for (size_t a = 0; a < rr.size(); ++a)
                for (size_t c = a; c < rr.size(); ++c)
                    for (const auto& [vi, co] : blk.at(rr[a], rr[c]).terms)
                        if (co != 0.0) {
                            psd_occ[vi] += 1;
                            only[vi] = {(int)b, rr[a], rr[c]};
                        }
        }
        for (size_t v = 0; v < nv; ++v) {
            if (removed[v] || static_occ[v] != 0) continue;
            if (psd_occ[v] == 0) {
                removed[v] = 1;
                info.orphans.push_back((int)v);
                changed = true;
            } else if (psd_occ[v] == 1 && only[v][1] == only[v][2]) {
                int b = only[v][0], row = only[v][1];
                removed[v] = 1;
                info.elims.push_back({b, row, (int)v});
                auto& rr = info.rows[b];
                rr.erase(std::find(rr.begin(), rr.end(), row));
                changed = true;
                break;  // entry counts are stale; rescan
            }
        }
    }

    info.old_to_new.assign(nv, -1);
    for (size_t v = 0; v < nv; ++v)
        if (!removed[v]) {
            info.old_to_new[v] = (int)info.kept.size();
            info.kept.push_back((int)v);
        }
    return info;
}

inline ConicProblem apply_presolve(const ConicProblem& p, const PresolveInfo& info) {
    ConicProblem q;
    q.n_species = p.n_species;
    q.n_uncertain = p.n_uncertain;
    q.direction = p.direction;
    q.caps = p.caps;
    q.scale = p.scale;
    q.scaled = p.scaled;
    for (int v : info.kept) {
        q.variables.push_back(p.variables[v]);
        q.index[p.variables[v]] = (int)q.variables.size() - 1;
    }
    auto remap = [&](const AffExpr& e) {
        AffExpr r;
        r.constant = e.constant;
        for (const auto& [vi, c] : e.terms)
            if (info.old_to_new[vi] >= 0) r.add(info.old_to_new[vi], c);
        return r;
    };
    for (const auto& [vi, c] : p.objective)
        if (info.old_to_new[vi] >= 0) q.objective.push_back({info.old_to_new[vi], c});
    for (const auto& e : p.equalities) q.equalities.push_back(remap(e));
    q.eq_scale_key = p.eq_scale_key;
    for (const auto& e : p.inequalities) q.inequalities.push_back(remap(e));
    for (size_t b = 0; b < p.psd_blocks.size(); ++b) {
        const auto& rr = info.rows[b];
        if (rr.empty()) continue;
        const PsdBlock& blk = p.psd_blocks[b];
        PsdBlock nb;
        nb.label = blk.label;
        nb.multiplier = blk.multiplier;
        nb.basis.cap_species = blk.basis.cap_species;
        nb.basis.cap_params = blk.basis.cap_params;
        for (int r : rr) nb.basis.monomials.push_back(blk.basis.monomials[r]);
        int m = (int)rr.size();
        nb.entries.resize((size_t)m * (m + 1) / 2);
        for (int a = 0; a < m; ++a)
            for (int c = a; c < m; ++c) nb.entries[nb.tri_index(a, c)] = remap(blk.at(rr[a], rr[c]));
        q.psd_blocks.push_back(std::move(nb));
    }
    return q;
}

/// Completes the reduced primal to the full variable space. Eliminated
/// diagonal slacks are restored, in reverse elimination order, to values that
/// keep their block positive semidefinite (Schur complement plus a margin).
inline std::vector<double> expand_primal(const ConicProblem& p, const PresolveInfo& info,
                                         const std::vector<double>& reduced) {
    std::vector<double> full(p.variables.size(), 0.0);
    for (size_t k = 0; k < info.kept.size(); ++k) full[info.kept[k]] = reduced[k];
    // Active rows per block grow back as eliminations are undone.
    std::vector<std::vector<int>> active = info.rows;
    auto eval = [&](const AffExpr& e) {
        double v = e.constant;
        for (const auto& [vi, c] : e.terms) v += c * full[vi];
        return v;
    };
    for (auto it = info.elims.rbegin(); it != info.elims.rend(); ++it) {
        const PsdBlock& blk = p.psd_blocks[it->block];
        auto& rr = active[it->block];
        int m = (int)rr.size();
        Eigen::MatrixXd M(m, m);
        Eigen::VectorXd cvec(m);
        for (int a = 0; a < m; ++a) {
            cvec[a] = eval(blk.at(it->row, rr[a]));
            for (int c = a; c < m; ++c) M(a, c) = M(c, a) = eval(blk.at(rr[a], rr[c]));
        }
        double target = 1.0;
        if (m > 0) {
            double delta = 1e-12 * std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
            Eigen::MatrixXd Mr = M;
            Mr.diagonal().array() += delta;
            target = cvec.dot(Eigen::LDLT<Eigen::MatrixXd>(Mr).solve(cvec)) +
                     1e-6 * std::max(1.0, M.diagonal().cwiseAbs().maxCoeff()) + 1.0;
        }
        const AffExpr& diag = blk.at(it->row, it->row);
        double rest = diag.constant, coef = 0.0;
        for (const auto& [vi, c] : diag.terms) {
            if (vi == it->var)
                coef = c;
            else
                rest += c * full[vi];
        }
        full[it->var] = (target - rest) / coef;
        rr.insert(std::upper_bound(rr.begin(), rr.end(), it->row), it->row);
    }
    return full;
}

inline StdForm to_std_form(const ConicProblem& p) {
    StdForm sf;
    sf.nvar = (int)p.variables.size();
    sf.f = VectorXd::Zero(sf.nvar);
    double osign = p.direction == Direction::maximize ? -1.0 : 1.0;
    for (const auto& [vi, c] : p.objective) sf.f[vi] += osign * c;

    std::vector<const AffExpr*> eqs;
    for (const auto& e : p.equalities) {
        if (e.terms.empty()) {
            if (std::abs(e.constant) > 0) {
                // trivially infeasible; keep the row so the solver certifies it
            } else {
                continue;  // drop 0 = 0 rows
            }
        }
        eqs.push_back(&e);
    }
    sf.A = MatrixXd::Zero((int)eqs.size(), sf.nvar);
    sf.b = VectorXd::Zero((int)eqs.size());
    for (size_t i = 0; i < eqs.size(); ++i) {
        for (const auto& [vi, c] : eqs[i]->terms) sf.A((int)i, vi) = c;
        sf.b[(int)i] = -eqs[i]->constant;
    }

    sf.hl = VectorXd::Zero((int)p.inequalities.size());
    for (size_t i = 0; i < p.inequalities.size(); ++i) {
        sf.lp_rows.push_back(p.inequalities[i].terms);
        sf.hl[(int)i] = p.inequalities[i].constant;
    }

    for (const auto& blk : p.psd_blocks) {
        SdpBlock sb;
        sb.n = blk.size();
        sb.F0 = MatrixXd::Zero(sb.n, sb.n);
        std::map<int, std::vector<BlockEntry>> per_var;
        for (int i = 0; i < sb.n; ++i)
            for (int j = i; j < sb.n; ++j) {
                const AffExpr& e = blk.at(i, j);
                sb.F0(i, j) = sb.F0(j, i) = e.constant;
                for (const auto& [vi, c] : e.terms) {
                    BlockEntry be{i, j, vi, c};
                    sb.entries.push_back(be);
                    per_var[vi].push_back(be);
                }
            }
        for (auto& [vi, list] : per_var) {
            sb.vars.push_back(vi);
            sb.by_var.push_back(std::move(list));
        }
        sf.blocks.push_back(std::move(sb));
    }
    return sf;
}

}  // namespace ipm

/// Solves a conic moment problem; on success the reported value is in the
/// problem's objective units (maximization handled internally).
inline Solution solve(const ConicProblem& p, const SolverSettings& st = {}) {
    ipm::PresolveInfo info = ipm::presolve_plan(p);
    ConicProblem q = ipm::apply_presolve(p, info);
    ipm::StdForm sf = ipm::to_std_form(q);
    Solution sol = ipm::solve_hsd(sf, st);
    if (!sol.primal.empty()) sol.primal = ipm::expand_primal(p, info, sol.primal);
    if (sol.status == SolveStatus::optimal && p.direction == Direction::maximize)
        sol.value = -sol.value;
    if (sol.status == SolveStatus::dual_infeasible_or_unbounded)
        sol.message += p.direction == Direction::maximize ? " (objective unbounded above)"
                                                          : " (objective unbounded below)";
    return sol;
}

}  // namespace momentbound
