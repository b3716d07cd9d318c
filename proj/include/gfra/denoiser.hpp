// SPDX-License-Identifier: Apache-2.0
//
// MMSE denoisers for the Bernoulli-Gaussian row prior. Both receivers share
// the form eta(a) = g(||a||^2) a, where only the prior log-odds differ.

#pragma once

#include "gfra/numerics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gfra
{

struct DenoiserEval
{
    Eigen::VectorXcd value;
    Eigen::MatrixXcd jacobian; // d eta / d a (Wirtinger)
};

/// Quantities that depend only on (tau2, beta, M).
struct GainParams
{
    double c = 0.0;         // beta / (beta + tau2)
    double kappa = 0.0;     // 1/tau2 - 1/(beta + tau2)
    double log_ratio = 0.0; // M log(1 + beta/tau2)
};

inline GainParams gain_params(double tau2, double beta, int M)
{
    if (!(tau2 > 0.0))
        throw DomainError("gain_params: tau2 must be positive");
    GainParams gp;
    gp.c = beta / (beta + tau2);
    gp.kappa = beta / (tau2 * (beta + tau2));
    gp.log_ratio = M * std::log1p(beta / tau2);
    return gp;
}

struct Shrinkage
{
    double g = 0.0;  // gain
    double dg = 0.0; // d g / d s
};

/// prior_log_odds = log P(inactive)/P(active) given everything except a.
inline Shrinkage shrink(double prior_log_odds, double s, const GainParams& gp)
{
    double l = prior_log_odds + gp.log_ratio - gp.kappa * s;
    double p = logistic_neg(l);  // posterior activity probability
    double q = logistic_neg(-l); // 1 - p
    return {gp.c * p, gp.c * gp.kappa * p * q};
}

inline double amp_prior_log_odds(double lambda)
{
    if (lambda <= 0.0)
        return std::numeric_limits<double>::infinity();
    if (lambda >= 1.0)
        return -std::numeric_limits<double>::infinity();
    return std::log(1.0 - lambda) - std::log(lambda);
}

inline DenoiserEval evaluate_shrinkage(const Eigen::VectorXcd& a, double prior_log_odds, const GainParams& gp)
{
    Shrinkage sh = shrink(prior_log_odds, a.squaredNorm(), gp);
    DenoiserEval ev;
    ev.value = sh.g * a;
    ev.jacobian = sh.dg * (a * a.adjoint());
    ev.jacobian.diagonal().array() += sh.g;
    return ev;
}

/// AMP denoiser: posterior mean of x given a = x + tau v, x ~ (1-lambda) delta_0 + lambda CN(0, beta I).
inline DenoiserEval mmse_denoiser(const Eigen::VectorXcd& a, double tau2, double lambda, double beta, int M)
{
    if (a.size() != M)
        throw std::invalid_argument("mmse_denoiser: vector length differs from M");
    return evaluate_shrinkage(a, amp_prior_log_odds(lambda), gain_params(tau2, beta, M));
}

// ---------------------------------------------------------------------------
// Correlated denoiser

struct CaseProbs
{
    double eps1 = 1.0; // inactive in both blocks
    double eps2 = 0.0; // active before, inactive now
    double eps3 = 0.0; // active in both blocks
};

inline CaseProbs case_probs(int N, int K_prev, int K_cur)
{
    if (!(0 <= K_cur && K_cur <= K_prev && K_prev <= N && N >= 1))
        throw std::invalid_argument("case_probs: need 0 <= K_cur <= K_prev <= N");
    double e[3] = {static_cast<double>(N - K_prev) / N, static_cast<double>(K_prev - K_cur) / N,
                   static_cast<double>(K_cur) / N};
    // The largest entry absorbs the rounding so that the sum is one.
    int big = 0;
    for (int i = 1; i < 3; ++i)
        if (e[i] > e[big])
            big = i;
    e[big] = 1.0;
    for (int i = 0; i < 3; ++i)
        if (i != big)
            e[big] -= e[i];
    return {e[0], e[1], e[2]};
}

enum class CorrForm
{
    bayes,   // odds Phi1 (eps2 + eps1 Phi2) / eps3
    printed, // odds Phi1 (eps2 + eps1 Phi2) / (eps3 Phi2)
};

inline std::string to_string(CorrForm f)
{
    return f == CorrForm::bayes ? "bayes" : "printed";
}

inline CorrForm corr_form_from_string(const std::string& s)
{
    if (s == "bayes")
        return CorrForm::bayes;
    if (s == "printed")
        return CorrForm::printed;
    throw std::invalid_argument("unknown corr form '" + s + "' (expected bayes or printed)");
}

inline double safe_log(double x)
{
    return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity();
}

/// log Phi2(s_b) = log of CN(0,tau_prev^2) over CN(0,beta+tau_prev^2) density ratio at ||b||^2 = s_b.
inline double log_phi2(double s_b, double tau2_prev, double beta, int M)
{
    GainParams gp = gain_params(tau2_prev, beta, M);
    return gp.log_ratio - gp.kappa * s_b;
}

/// Prior log-odds (inactive vs active) of the correlated model given the HI energy s_b.
inline double corr_prior_log_odds(double s_b, double tau2_prev, const CaseProbs& pr, double beta, int M,
                                  CorrForm form)
{
    if (!(pr.eps3 > 0.0))
        return std::numeric_limits<double>::infinity();
    double lphi2 = log_phi2(s_b, tau2_prev, beta, M);
    double l1 = safe_log(pr.eps1);
    double l2 = safe_log(pr.eps2);
    double l3 = std::log(pr.eps3);
    if (form == CorrForm::bayes)
    {
        if (pr.eps1 == 0.0)
            return l2 - l3;
        return log_add_exp(l2, l1 + lphi2) - l3;
    }
    if (pr.eps2 == 0.0)
        return l1 - l3;
    return log_add_exp(l2 - lphi2, l1) - l3;
}

inline DenoiserEval corr_mmse_denoiser(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b, double tau2_cur,
                                       double tau2_prev, const CaseProbs& probs, double beta, int M,
                                       CorrForm form = CorrForm::bayes)
{
    if (a.size() != M || b.size() != M)
        throw std::invalid_argument("corr_mmse_denoiser: vector length differs from M");
    double prior = corr_prior_log_odds(b.squaredNorm(), tau2_prev, probs, beta, M, form);
    return evaluate_shrinkage(a, prior, gain_params(tau2_cur, beta, M));
}

} // namespace gfra
