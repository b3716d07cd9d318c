// SPDX-License-Identifier: Apache-2.0
//
// Closed-form performance model: detection error probabilities, the post-ZF
// SNR law, average block error rate and the recursive frame error rate.

#pragma once

#include "gfra/link_layer.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace gfra
{

struct DetectionProbs
{
    double p_md = 0.0;
    double p_fa = 0.0;
};

/// P_M = P(M, l/(beta+tau2)), P_F = Q(M, l/tau2) for a common threshold l.
inline DetectionProbs detection_probs_at(double threshold, double tau2, double beta, int M)
{
    if (threshold <= 0.0)
        return {0.0, 1.0};
    return {reg_gamma_lower(M, threshold / (beta + tau2)), reg_gamma_upper(M, threshold / tau2)};
}

inline DetectionProbs detection_probs_amp(double tau2, double beta, int M)
{
    return detection_probs_at(detection_threshold(tau2, beta, M), tau2, beta, M);
}

inline DetectionProbs detection_probs_corr(double tau2, double tau2_prev, const CaseProbs& probs,
                                           double lambda_prev, double beta, int M, CorrForm form = CorrForm::bayes,
                                           bool* fallback = nullptr)
{
    double s_b = common_hi_energy(tau2_prev, lambda_prev, beta, M, form);
    auto delta = corr_threshold_delta(s_b, tau2_prev, probs, beta, M, form);
    if (fallback)
        *fallback = !delta.has_value();
    return detection_probs_at(detection_threshold(tau2, beta, M, delta.value_or(0.0)), tau2, beta, M);
}

/// Per-user threshold variant: the threshold depends on each row's HI energy, so the
/// error probabilities are averaged over the HI law of each activity case.
inline DetectionProbs detection_probs_corr_per_user(double tau2, double tau2_prev, const CaseProbs& probs,
                                                    double beta, int M, const SeSampler& smp,
                                                    CorrForm form = CorrForm::bayes)
{
    const double base = detection_threshold(tau2, beta, M);
    auto thr = [&](double s_b) {
        auto delta = corr_threshold_delta(s_b, tau2_prev, probs, beta, M, form);
        return delta ? detection_threshold(tau2, beta, M, *delta) : base;
    };
    double pm = 0.0, pf1 = 0.0, pf2 = 0.0;
    for (double u : smp.unit_b())
    {
        DetectionProbs on = detection_probs_at(thr((beta + tau2_prev) * u), tau2, beta, M);
        pm += on.p_md;
        pf2 += on.p_fa;
        if (probs.eps1 > 0.0)
            pf1 += detection_probs_at(thr(tau2_prev * u), tau2, beta, M).p_fa;
    }
    const double n = static_cast<double>(smp.size());
    const double inactive = probs.eps1 + probs.eps2;
    DetectionProbs dp;
    dp.p_md = pm / n;
    dp.p_fa = inactive > 0.0 ? (probs.eps1 * pf1 / n + probs.eps2 * pf2 / n) / inactive : 0.0;
    return dp;
}

// ---------------------------------------------------------------------------
// SNR law and average BLER

/// Post-ZF SNR ~ Gamma(shape theta2, scale theta1).
struct SnrLaw
{
    double theta1 = 0.0;
    int theta2 = 1;

    double mean() const { return theta1 * theta2; }
    double cdf(double x) const { return x <= 0.0 ? 0.0 : reg_gamma_lower(theta2, x / theta1); }
    double log_pdf(double x) const
    {
        return (theta2 - 1) * std::log(x) - x / theta1 - std::lgamma(static_cast<double>(theta2)) -
               theta2 * std::log(theta1);
    }
};

/// Law for K true actives, e misses and f false alarms; nullopt when |K_hat| > M.
inline std::optional<SnrLaw> snr_law(int K, int e, int f, int M, double tau2, double beta, double sigma2)
{
    int k_hat = K - e + f;
    if (k_hat > M)
        return std::nullopt;
    double den = (K - e) * beta * tau2 + (e * beta + sigma2) * (beta + tau2);
    return SnrLaw{beta * beta / den, M - k_hat + 1};
}

/// Constants of the linearized BLER: r = 2^{c/d} - 1, chi, and the ramp [v, mu] with mu - v = 1/(chi sqrt(d)).
struct BlerConstants
{
    double r = 0.0;
    double chi = 0.0;
    double v = 0.0;
    double mu = 0.0;
};

inline BlerConstants bler_constants(int c, int d)
{
    BlerConstants k;
    double rate = static_cast<double>(c) / d;
    k.r = std::exp2(rate) - 1.0;
    k.chi = std::sqrt(1.0 / (2.0 * std::numbers::pi * (std::exp2(2.0 * rate) - 1.0)));
    double half = 0.5 / (k.chi * std::sqrt(static_cast<double>(d)));
    k.v = k.r - half;
    k.mu = k.r + half;
    return k;
}

enum class BlerMethod
{
    integral,
    closed_form,
};

inline std::string to_string(BlerMethod m)
{
    return m == BlerMethod::integral ? "integral" : "closed_form";
}

namespace detail
{

// Smallest x above r where the normal-approximation BLER drops below tiny.
inline double bler_negligible_above(int c, int d, double tiny = 1e-15)
{
    double lo = bler_constants(c, d).r;
    double hi = std::max(2.0 * lo, 1.0);
    while (block_error_prob(hi, c, d) > tiny)
        hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i)
    {
        double mid = 0.5 * (lo + hi);
        (block_error_prob(mid, c, d) > tiny ? lo : hi) = mid;
    }
    return hi;
}

inline double bler_integral(const SnrLaw& law, int c, int d, double abs_tol)
{
    using boost::math::quadrature::gauss_kronrod;
    const BlerConstants k = bler_constants(c, d);
    const double x_top = bler_negligible_above(c, d);
    const double mode = std::max(0.0, (law.theta2 - 1) * law.theta1);
    const double sd = std::sqrt(static_cast<double>(law.theta2)) * law.theta1;
    std::vector<double> pts = {0.0,
                               k.v,
                               k.r,
                               k.mu,
                               mode - 10.0 * sd,
                               mode - 3.0 * sd,
                               mode,
                               mode + 3.0 * sd,
                               mode + 10.0 * sd,
                               x_top};
    std::vector<double> cuts;
    for (double p : pts)
        if (p >= 0.0 && p <= x_top)
            cuts.push_back(p);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto integrand = [&](double x) {
        if (x <= 0.0)
            return law.theta2 == 1 ? block_error_prob(0.0, c, d) / law.theta1 : 0.0;
        return block_error_prob(x, c, d) * std::exp(law.log_pdf(x));
    };
    // Each piece is at most 1, so a relative tolerance of abs_tol / 100 per piece meets abs_tol overall.
    const double rel_tol = std::clamp(abs_tol / 100.0, 1e-11, 1e-3);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        total += gauss_kronrod<double, 61>::integrate(integrand, cuts[i], cuts[i + 1], 20, rel_tol);
    // Above x_top the BLER is below 1e-15 and contributes nothing measurable.
    return std::clamp(total, 0.0, 1.0);
}

} // namespace detail

/// Average BLER over the SNR law.
inline double avg_bler_cond(const SnrLaw& law, int c, int d, BlerMethod method, double abs_tol = 1e-8)
{
    if (method == BlerMethod::closed_form)
        return law.cdf(bler_constants(c, d).r);
    return detail::bler_integral(law, c, d, abs_tol);
}

struct AvgBler
{
    double p_e = 0.0;           // P_M + (1 - P_M) eps_bar
    double eps_bar = 0.0;       // (e,f)-averaged BLER of a detected user
    double retained_mass = 0.0; // binomial weight kept after truncation
};

inline AvgBler avg_bler(const SystemConfig& cfg, int K, double tau2, const DetectionProbs& dp, BlerMethod method)
{
    const int N = cfg.n_users;
    const int M = cfg.n_antennas;
    const int d = cfg.data_len();
    const double tol = cfg.binom_tail_tol;
    std::vector<std::pair<int, double>> we, wf;
    for (int e = 0; e <= K; ++e)
    {
        double w = std::exp(log_binom_pmf(K, e, dp.p_md));
        if (w >= tol)
            we.emplace_back(e, w);
    }
    for (int f = 0; f <= N - K; ++f)
    {
        double w = std::exp(log_binom_pmf(N - K, f, dp.p_fa));
        if (w >= tol)
            wf.emplace_back(f, w);
    }
    AvgBler out;
    std::map<std::pair<int, int>, double> cell;
    for (auto [e, w1] : we)
        for (auto [f, w2] : wf)
        {
            double w = w1 * w2;
            if (w < tol)
                continue;
            out.retained_mass += w;
            double eps = 1.0;
            if (auto law = snr_law(K, e, f, M, tau2, cfg.beta, cfg.sigma2))
            {
                auto key = std::make_pair(e, f);
                auto it = cell.find(key);
                if (it == cell.end())
                    it = cell.emplace(key, avg_bler_cond(*law, cfg.payload_bits, d, method)).first;
                eps = it->second;
            }
            out.eps_bar += w * eps;
        }
    if (out.retained_mass > 0.0)
        out.eps_bar /= out.retained_mass;
    out.p_e = dp.p_md + (1.0 - dp.p_md) * out.eps_bar;
    return out;
}

// ---------------------------------------------------------------------------
// Per-block bundle and frame error rate

struct PerfPoint
{
    int K_prev = 0;
    int K = 0;
    double tau2 = 0.0;
    DetectionProbs detection;
    double delta_v = 0.0;
    AvgBler bler;
};

class PerformanceModel
{
  public:
    PerformanceModel(const SystemConfig& cfg, SeCache& se, BlerMethod method,
                     ThresholdMode threshold = ThresholdMode::common)
        : cfg_(cfg), se_(se), method_(method), threshold_(threshold)
    {
    }

    const SystemConfig& config() const { return cfg_; }

    PerfPoint first_block(int K)
    {
        PerfPoint p;
        p.K = K;
        p.tau2 = se_.amp(K);
        p.detection = detection_probs_amp(p.tau2, cfg_.beta, cfg_.n_antennas);
        finish(p);
        return p;
    }

    PerfPoint retransmission(int K_prev, int K, double tau2_prev)
    {
        PerfPoint p;
        p.K_prev = K_prev;
        p.K = K;
        p.tau2 = se_.corr(K_prev, K, tau2_prev);
        CaseProbs probs = case_probs(cfg_.n_users, K_prev, K);
        if (threshold_ == ThresholdMode::common)
            p.detection = detection_probs_corr(p.tau2, tau2_prev, probs, static_cast<double>(K_prev) / cfg_.n_users,
                                               cfg_.beta, cfg_.n_antennas, se_.form());
        else
            p.detection = detection_probs_corr_per_user(p.tau2, tau2_prev, probs, cfg_.beta, cfg_.n_antennas,
                                                        se_.sampler(), se_.form());
        finish(p);
        return p;
    }

    PerfPoint block(Receiver rx, int j, int K_prev, int K, double tau2_prev)
    {
        if (j == 1 || rx == Receiver::amp)
            return first_block(K);
        return retransmission(K_prev, K, tau2_prev);
    }

    /// Probability that a tagged user fails all J attempts, starting with K active users.
    double fer(Receiver rx, int K, int J)
    {
        if (K <= 0)
            return 0.0;
        return phi(rx, 1, J, 0, K, 0.0);
    }

  private:
    void finish(PerfPoint& p)
    {
        p.delta_v = channel_error_var(p.tau2, cfg_.beta, true);
        p.bler = avg_bler(cfg_, p.K, p.tau2, p.detection, method_);
    }

    using Key = std::tuple<int, int, int, int, int, std::uint64_t>;

    double phi(Receiver rx, int j, int J, int K_prev, int K, double tau2_prev)
    {
        std::uint64_t bits = 0;
        if (rx == Receiver::corr_amp && j > 1)
            std::memcpy(&bits, &tau2_prev, sizeof(bits));
        Key key{static_cast<int>(rx), J, j, rx == Receiver::corr_amp ? K_prev : 0, K, bits};
        auto it = memo_.find(key);
        if (it != memo_.end())
            return it->second;

        PerfPoint pt = block(rx, j, K_prev, K, tau2_prev);
        const double pe = pt.bler.p_e;
        double value = pe;
        if (j < J)
        {
            value = 0.0;
            for (int k2 = 1; k2 <= K; ++k2)
            {
                // Tagged user fails and k2 - 1 of the other K - 1 users fail with it.
                double w = pe * std::exp(log_binom_pmf(K - 1, k2 - 1, pe));
                if (w < cfg_.binom_tail_tol * 1e-3)
                    continue;
                value += w * phi(rx, j + 1, J, K, k2, pt.tau2);
            }
        }
        memo_.emplace(key, value);
        return value;
    }

    SystemConfig cfg_;
    SeCache& se_;
    BlerMethod method_;
    ThresholdMode threshold_;
    std::map<Key, double> memo_;
};

} // namespace gfra
