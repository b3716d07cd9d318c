// SPDX-License-Identifier: Apache-2.0
//
// AMP with the row-wise MMSE denoiser, and threshold activity detection.

#pragma once

#include "gfra/denoiser.hpp"
#include "gfra/state_evolution.hpp"
#include "gfra/system_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gfra
{

struct AmpOptions
{
    int max_iter = 50;
    double tol = 1e-6;
    // Rows whose gain falls below this fraction of beta/(beta+tau2) are set to zero.
    double prune = 1e-30;
    // Weight of the new iterate in H and R (1 = undamped).
    double damping = 0.7;
    // Optional per-iteration denoiser variance; the last entry is reused. Empty means empirical.
    std::vector<double> tau2_schedule;
};

struct AmpOutput
{
    CMatrix H_hat;       // N x M
    CMatrix R_final;     // L x M
    CMatrix pseudo_data; // N x M, H_hat + P^H R_final
    double tau2_final = 0.0;
    double tau2_empirical = 0.0;
    int iters = 0;
    bool converged = false;
};

/// Generic AMP loop; prior_log_odds holds the per-row log P(inactive)/P(active) before seeing a.
inline AmpOutput amp_iterate(const CMatrix& Y, const PilotMatrix& pilots, const RVector& prior_log_odds,
                             double beta, double tau2_floor, double tau2_se, const AmpOptions& opt = {})
{
    const CMatrix& P = pilots.P;
    const Eigen::Index L = Y.rows();
    const Eigen::Index M = Y.cols();
    const Eigen::Index N = P.cols();
    if (P.rows() != L || prior_log_odds.size() != N)
        throw std::invalid_argument("amp_iterate: dimension mismatch");

    AmpOutput out;
    CMatrix H = CMatrix::Zero(N, M);
    CMatrix R = Y;
    CMatrix A(N, M);
    CMatrix Onsager(M, M);
    RVector g(N), dg(N);
    std::vector<Eigen::Index> rows_h, rows_j;
    rows_h.reserve(N);
    rows_j.reserve(N);

    double tau2 = R.squaredNorm() / static_cast<double>(L * M);
    for (int t = 0; t < opt.max_iter; ++t)
    {
        double tau2_t = tau2;
        if (!opt.tau2_schedule.empty())
            tau2_t = opt.tau2_schedule[std::min<std::size_t>(static_cast<std::size_t>(t), opt.tau2_schedule.size() - 1)];
        const double tau2_use = std::max(tau2_t, tau2_floor);
        GainParams gp = gain_params(tau2_use, beta, static_cast<int>(M));
        A.noalias() = P.adjoint() * R;
        A += H;

        rows_h.clear();
        rows_j.clear();
        double gsum = 0.0;
        for (Eigen::Index n = 0; n < N; ++n)
        {
            double s = A.row(n).squaredNorm();
            Shrinkage sh = shrink(prior_log_odds[n], s, gp);
            g[n] = sh.g;
            dg[n] = sh.dg;
            gsum += sh.g;
            if (sh.g > opt.prune * gp.c)
                rows_h.push_back(n);
            if (sh.dg * s > opt.prune * gp.c)
                rows_j.push_back(n);
        }

        // Sum of transposed Jacobians: (sum g) I + A^H diag(g') A.
        Onsager.setZero();
        if (!rows_j.empty())
        {
            CMatrix As(static_cast<Eigen::Index>(rows_j.size()), M);
            for (std::size_t i = 0; i < rows_j.size(); ++i)
                As.row(static_cast<Eigen::Index>(i)) = std::sqrt(dg[rows_j[i]]) * A.row(rows_j[i]);
            Onsager.noalias() = As.adjoint() * As;
        }
        Onsager.diagonal().array() += gsum;

        CMatrix H_old;
        if (opt.damping < 1.0)
            H_old = H;
        H.setZero();
        CMatrix Ps(L, static_cast<Eigen::Index>(rows_h.size()));
        CMatrix Hs(static_cast<Eigen::Index>(rows_h.size()), M);
        for (std::size_t i = 0; i < rows_h.size(); ++i)
        {
            Eigen::Index n = rows_h[i];
            H.row(n) = g[n] * A.row(n);
            Ps.col(static_cast<Eigen::Index>(i)) = P.col(n);
            Hs.row(static_cast<Eigen::Index>(i)) = H.row(n);
        }

        CMatrix Rn = Y;
        Rn.noalias() -= Ps * Hs;
        Rn.noalias() += (R * Onsager) / static_cast<double>(L);
        if (opt.damping < 1.0)
        {
            H = opt.damping * H + (1.0 - opt.damping) * H_old;
            Rn = opt.damping * Rn + (1.0 - opt.damping) * R;
        }
        R.swap(Rn);

        double tau2_next = R.squaredNorm() / static_cast<double>(L * M);
        out.iters = t + 1;
        bool done = tau2 == 0.0 ? tau2_next == 0.0 : std::abs(tau2_next - tau2) < opt.tol * tau2;
        tau2 = tau2_next;
        if (done)
        {
            out.converged = true;
            break;
        }
    }

    out.pseudo_data.noalias() = P.adjoint() * R;
    out.pseudo_data += H;
    out.H_hat = std::move(H);
    out.R_final = std::move(R);
    out.tau2_empirical = tau2;
    out.tau2_final = tau2_se;
    return out;
}

inline double amp_tau2_floor(const SystemConfig& cfg)
{
    return std::max({cfg.sigma2 / cfg.pilot_len, 1e-16 * cfg.beta, 1e-300});
}

/// AMP for one block; tau2_se is the state-evolution fixed point for lambda.
inline AmpOutput amp_run(const CMatrix& Y, const PilotMatrix& pilots, double lambda, const SystemConfig& cfg,
                         double tau2_se, const AmpOptions& opt = {})
{
    RVector prior = RVector::Constant(pilots.P.cols(), amp_prior_log_odds(lambda));
    return amp_iterate(Y, pilots, prior, cfg.beta, amp_tau2_floor(cfg), tau2_se, opt);
}

inline AmpOutput amp_run(const CMatrix& Y, const PilotMatrix& pilots, double lambda, const SystemConfig& cfg)
{
    return amp_run(Y, pilots, lambda, cfg, se_fixed_point_amp(cfg, lambda));
}

// ---------------------------------------------------------------------------
// Detection

struct ActivityDecision
{
    std::vector<std::uint8_t> u_hat;
    std::vector<int> detected;
    int missed = -1;       // e, filled by score()
    int false_alarms = -1; // f, filled by score()

    int detected_count() const { return static_cast<int>(detected.size()); }
};

inline void score(ActivityDecision& d, const ActivityVector& truth)
{
    d.missed = 0;
    d.false_alarms = 0;
    for (int n = 0; n < truth.size(); ++n)
    {
        if (truth[n] && !d.u_hat[n])
            ++d.missed;
        if (!truth[n] && d.u_hat[n])
            ++d.false_alarms;
    }
}

/// Threshold l = (M log(1 + beta/tau2) + delta) / (1/tau2 - 1/(beta+tau2)).
inline double detection_threshold(double tau2, double beta, int M, double delta = 0.0)
{
    GainParams gp = gain_params(tau2, beta, M);
    return (gp.log_ratio + delta) / gp.kappa;
}

inline ActivityDecision threshold_rows(const CMatrix& pseudo_data, const RVector& thresholds)
{
    ActivityDecision d;
    const Eigen::Index N = pseudo_data.rows();
    d.u_hat.assign(static_cast<std::size_t>(N), 0);
    for (Eigen::Index n = 0; n < N; ++n)
        if (pseudo_data.row(n).squaredNorm() >= thresholds[n])
        {
            d.u_hat[n] = 1;
            d.detected.push_back(static_cast<int>(n));
        }
    return d;
}

inline ActivityDecision detect_amp(const AmpOutput& out, double beta, int M)
{
    if (!(out.tau2_final > 0.0))
        throw DomainError("detect_amp: tau2_final must be positive");
    double l = detection_threshold(out.tau2_final, beta, M);
    return threshold_rows(out.pseudo_data, RVector::Constant(out.pseudo_data.rows(), l));
}

} // namespace gfra
