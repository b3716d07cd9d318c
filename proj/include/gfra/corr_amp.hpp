// SPDX-License-Identifier: Apache-2.0
//
// Correlated AMP for retransmission blocks: historical information from the
// previous block enters through the per-row prior log-odds.

#pragma once

#include "gfra/amp.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>

namespace gfra
{

struct HiMatrix
{
    CMatrix B; // N x M, rows b_n = h_hat_n + p_n^H R
    double tau2_prev = 0.0;
    double lambda_prev = 0.0;
};

inline HiMatrix build_hi(const AmpOutput& prev, double lambda_prev)
{
    return {prev.pseudo_data, prev.tau2_final, lambda_prev};
}

inline HiMatrix build_hi(const AmpOutput& prev, const PilotMatrix& pilots, double lambda_prev)
{
    CMatrix B = prev.H_hat;
    B.noalias() += pilots.P.adjoint() * prev.R_final;
    return {std::move(B), prev.tau2_final, lambda_prev};
}

inline RVector corr_prior_vector(const HiMatrix& hi, const CaseProbs& probs, double beta, CorrForm form)
{
    const int M = static_cast<int>(hi.B.cols());
    RVector prior(hi.B.rows());
    for (Eigen::Index n = 0; n < hi.B.rows(); ++n)
        prior[n] = corr_prior_log_odds(hi.B.row(n).squaredNorm(), hi.tau2_prev, probs, beta, M, form);
    return prior;
}

inline AmpOutput corr_amp_run(const CMatrix& Y, const PilotMatrix& pilots, const HiMatrix& hi, const CaseProbs& probs,
                              const SystemConfig& cfg, double tau2_se, CorrForm form = CorrForm::bayes,
                              const AmpOptions& opt = {})
{
    if (!(probs.eps3 > 0.0))
        throw std::invalid_argument("corr_amp_run: requires at least one active user (eps3 > 0)");
    RVector prior = corr_prior_vector(hi, probs, cfg.beta, form);
    return amp_iterate(Y, pilots, prior, cfg.beta, amp_tau2_floor(cfg), tau2_se, opt);
}

enum class ThresholdMode
{
    common,   // HI energy replaced by its expectation
    per_user, // HI energy of each row
};

/// Additive log term delta of the correlated threshold; nullopt when the printed form degenerates.
inline std::optional<double> corr_threshold_delta(double s_b, double tau2_prev, const CaseProbs& pr, double beta,
                                                  int M, CorrForm form)
{
    double lphi2 = log_phi2(s_b, tau2_prev, beta, M);
    double inactive = pr.eps1 + pr.eps2;
    if (!(inactive > 0.0))
        return std::nullopt;
    if (form == CorrForm::bayes)
    {
        double lw1 = safe_log(pr.eps1 / inactive);
        double lw2 = safe_log(pr.eps2 / inactive);
        return log_add_exp(lw1 + lphi2, lw2);
    }
    // ln(eps1 Phi2 / (eps1 + eps2 - eps2 Phi2))
    if (!(pr.eps1 > 0.0))
        return std::nullopt;
    double phi2 = std::exp(lphi2);
    double den = pr.eps1 + pr.eps2 - pr.eps2 * phi2;
    if (!(den > 0.0) || !std::isfinite(phi2))
        return std::nullopt;
    return std::log(pr.eps1) + lphi2 - std::log(den);
}

/// Population HI energy used by the common threshold.
inline double common_hi_energy(double tau2_prev, double lambda_prev, double beta, int M, CorrForm form)
{
    double per_coord = beta * lambda_prev + tau2_prev;
    return form == CorrForm::bayes ? M * per_coord : per_coord;
}

struct CorrDetectStats
{
    int fallbacks = 0;
};

inline ActivityDecision detect_corr(const AmpOutput& out, double beta, int M, const CaseProbs& probs,
                                    const HiMatrix& hi, CorrForm form = CorrForm::bayes,
                                    ThresholdMode mode = ThresholdMode::common, CorrDetectStats* stats = nullptr)
{
    if (!(out.tau2_final > 0.0))
        throw DomainError("detect_corr: tau2_final must be positive");
    const Eigen::Index N = out.pseudo_data.rows();
    const double base = detection_threshold(out.tau2_final, beta, M);
    RVector thr(N);
    auto threshold_for = [&](double s_b) {
        auto delta = corr_threshold_delta(s_b, hi.tau2_prev, probs, beta, M, form);
        if (!delta)
        {
            if (stats)
                ++stats->fallbacks;
            return base;
        }
        return detection_threshold(out.tau2_final, beta, M, *delta);
    };
    if (mode == ThresholdMode::common)
        thr.setConstant(threshold_for(common_hi_energy(hi.tau2_prev, hi.lambda_prev, beta, M, form)));
    else
        for (Eigen::Index n = 0; n < N; ++n)
            thr[n] = threshold_for(hi.B.row(n).squaredNorm());
    return threshold_rows(out.pseudo_data, thr);
}

} // namespace gfra
