// SPDX-License-Identifier: Apache-2.0
//
// Scalar state evolution for both receivers. Expectations are Monte Carlo
// averages over the sufficient statistic ||a||^2 / var ~ Gamma(M, 1), with
// common random numbers reused across iterations.

#pragma once

#include "gfra/config.hpp"
#include "gfra/denoiser.hpp"
#include "gfra/rng.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

namespace gfra
{

class SeSampler
{
  public:
    SeSampler(int M, int samples, std::uint64_t seed) : M_(M)
    {
        RngStream s(seed, splitmix64(static_cast<std::uint64_t>(StreamTag::state_evolution) * 1000003ULL +
                                     static_cast<std::uint64_t>(M)));
        ua_.resize(samples);
        ub_.resize(samples);
        for (int i = 0; i < samples; ++i)
        {
            ua_[i] = s.gamma(M);
            ub_[i] = s.gamma(M);
        }
    }

    explicit SeSampler(const SystemConfig& cfg) : SeSampler(cfg.n_antennas, cfg.se_samples, cfg.master_seed) {}

    int M() const { return M_; }
    int size() const { return static_cast<int>(ua_.size()); }
    const std::vector<double>& unit_a() const { return ua_; }
    const std::vector<double>& unit_b() const { return ub_; }

  private:
    int M_;
    std::vector<double> ua_;
    std::vector<double> ub_;
};

struct SeResult
{
    double tau2 = 0.0;
    int iters = 0;
    bool converged = false;
    std::vector<double> trajectory; // tau_0^2, tau_1^2, ...
};

struct SeOptions
{
    int max_iter = 200;
    double tol = 1e-8;
};

namespace detail
{

template <class MseFn>
SeResult se_iterate(const SystemConfig& cfg, double tau2_0, MseFn&& mse_per_coord, const SeOptions& opt)
{
    const double floor = cfg.sigma2 / cfg.pilot_len;
    const double ratio = static_cast<double>(cfg.n_users) / cfg.pilot_len;
    SeResult r;
    double tau2 = tau2_0;
    r.trajectory.push_back(tau2);
    for (int t = 0; t < opt.max_iter; ++t)
    {
        double next = floor + ratio * mse_per_coord(tau2);
        r.trajectory.push_back(next);
        r.iters = t + 1;
        bool done = std::abs(next - tau2) < opt.tol * tau2;
        tau2 = next;
        if (done)
        {
            r.converged = true;
            break;
        }
    }
    r.tau2 = tau2;
    return r;
}

} // namespace detail

/// Per-coordinate MSE (1/M) E||eta(x + tau v) - x||^2 of the AMP denoiser.
inline double se_mse_amp(double tau2, double lambda, double beta, const SeSampler& smp)
{
    const int M = smp.M();
    if (beta == 0.0 || lambda <= 0.0)
        return 0.0;
    GainParams gp = gain_params(tau2, beta, M);
    const double prior = amp_prior_log_odds(lambda);
    const auto& ua = smp.unit_a();
    double e0 = 0.0;
    double e1 = 0.0;
    for (double u : ua)
    {
        double s0 = tau2 * u;
        double g0 = shrink(prior, s0, gp).g;
        e0 += g0 * g0 * s0;
        double s1 = (beta + tau2) * u;
        double d1 = shrink(prior, s1, gp).g - gp.c;
        e1 += d1 * d1 * s1;
    }
    const double n = static_cast<double>(ua.size());
    double mse = (1.0 - lambda) * e0 / n + lambda * (e1 / n + M * beta * tau2 / (beta + tau2));
    return mse / M;
}

inline SeResult se_run_amp(const SystemConfig& cfg, double lambda, const SeSampler& smp, const SeOptions& opt = {})
{
    double tau2_0 = cfg.sigma2 / cfg.pilot_len + static_cast<double>(cfg.n_users) / cfg.pilot_len * lambda * cfg.beta;
    return detail::se_iterate(
        cfg, tau2_0, [&](double tau2) { return se_mse_amp(tau2, lambda, cfg.beta, smp); }, opt);
}

inline double se_fixed_point_amp(const SystemConfig& cfg, double lambda, const SeSampler& smp)
{
    return se_run_amp(cfg, lambda, smp).tau2;
}

inline double se_fixed_point_amp(const SystemConfig& cfg, double lambda)
{
    return se_fixed_point_amp(cfg, lambda, SeSampler(cfg));
}

/// Per-coordinate MSE of the correlated denoiser, stratified over the three activity cases.
class CorrSeModel
{
  public:
    CorrSeModel(double beta, double tau2_prev, const CaseProbs& probs, const SeSampler& smp, CorrForm form)
        : beta_(beta), probs_(probs), smp_(smp)
    {
        const int M = smp.M();
        const auto& ub = smp.unit_b();
        prior_off_.resize(ub.size());
        prior_on_.resize(ub.size());
        for (std::size_t i = 0; i < ub.size(); ++i)
        {
            prior_off_[i] = corr_prior_log_odds(tau2_prev * ub[i], tau2_prev, probs, beta, M, form);
            prior_on_[i] = corr_prior_log_odds((beta + tau2_prev) * ub[i], tau2_prev, probs, beta, M, form);
        }
    }

    double mse(double tau2) const
    {
        const int M = smp_.M();
        if (beta_ == 0.0 || probs_.eps3 <= 0.0)
            return 0.0;
        GainParams gp = gain_params(tau2, beta_, M);
        const auto& ua = smp_.unit_a();
        double e1 = 0.0;
        double e2 = 0.0;
        double e3 = 0.0;
        for (std::size_t i = 0; i < ua.size(); ++i)
        {
            double s0 = tau2 * ua[i];
            if (probs_.eps1 > 0.0)
            {
                double g = shrink(prior_off_[i], s0, gp).g;
                e1 += g * g * s0;
            }
            if (probs_.eps2 > 0.0)
            {
                double g = shrink(prior_on_[i], s0, gp).g;
                e2 += g * g * s0;
            }
            double s1 = (beta_ + tau2) * ua[i];
            double d = shrink(prior_on_[i], s1, gp).g - gp.c;
            e3 += d * d * s1;
        }
        const double n = static_cast<double>(ua.size());
        double m = probs_.eps1 * e1 / n + probs_.eps2 * e2 / n +
                   probs_.eps3 * (e3 / n + M * beta_ * tau2 / (beta_ + tau2));
        return m / M;
    }

  private:
    double beta_;
    CaseProbs probs_;
    const SeSampler& smp_;
    std::vector<double> prior_off_; // HI drawn from an inactive previous row
    std::vector<double> prior_on_;  // HI drawn from an active previous row
};

inline SeResult se_run_corr(const SystemConfig& cfg, int K_prev, int K_cur, double tau2_prev, const SeSampler& smp,
                            CorrForm form = CorrForm::bayes, const SeOptions& opt = {})
{
    CaseProbs probs = case_probs(cfg.n_users, K_prev, K_cur);
    CorrSeModel model(cfg.beta, tau2_prev, probs, smp, form);
    double lambda_cur = static_cast<double>(K_cur) / cfg.n_users;
    double tau2_0 = cfg.sigma2 / cfg.pilot_len + static_cast<double>(cfg.n_users) / cfg.pilot_len * lambda_cur * cfg.beta;
    return detail::se_iterate(cfg, tau2_0, [&](double tau2) { return model.mse(tau2); }, opt);
}

inline double se_fixed_point_corr(const SystemConfig& cfg, double lambda_prev, double lambda_cur, double tau2_prev,
                                  const SeSampler& smp, CorrForm form = CorrForm::bayes)
{
    int K_prev = static_cast<int>(std::lround(lambda_prev * cfg.n_users));
    int K_cur = static_cast<int>(std::lround(lambda_cur * cfg.n_users));
    return se_run_corr(cfg, K_prev, K_cur, tau2_prev, smp, form).tau2;
}

/// Thread-safe memo of fixed points keyed by (K_prev, K_cur, tau2_prev bits).
class SeCache
{
  public:
    SeCache(const SystemConfig& cfg, CorrForm form = CorrForm::bayes) : cfg_(cfg), form_(form), smp_(cfg) {}

    const SystemConfig& config() const { return cfg_; }
    CorrForm form() const { return form_; }
    const SeSampler& sampler() const { return smp_; }

    double amp(int K)
    {
        if (K <= 0)
            return cfg_.sigma2 / cfg_.pilot_len;
        Key key{-1, K, 0};
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = memo_.find(key);
            if (it != memo_.end())
                return it->second;
        }
        double v = se_fixed_point_amp(cfg_, static_cast<double>(K) / cfg_.n_users, smp_);
        std::lock_guard<std::mutex> lock(mu_);
        return memo_.emplace(key, v).first->second;
    }

    double corr(int K_prev, int K_cur, double tau2_prev)
    {
        if (K_cur <= 0)
            return cfg_.sigma2 / cfg_.pilot_len;
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(tau2_prev));
        std::memcpy(&bits, &tau2_prev, sizeof(bits));
        Key key{K_prev, K_cur, bits};
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = memo_.find(key);
            if (it != memo_.end())
                return it->second;
        }
        double v = se_run_corr(cfg_, K_prev, K_cur, tau2_prev, smp_, form_).tau2;
        std::lock_guard<std::mutex> lock(mu_);
        return memo_.emplace(key, v).first->second;
    }

  private:
    using Key = std::tuple<int, int, std::uint64_t>;
    SystemConfig cfg_;
    CorrForm form_;
    SeSampler smp_;
    std::mutex mu_;
    std::map<Key, double> memo_;
};

} // namespace gfra
