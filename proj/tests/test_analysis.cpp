// SPDX-License-Identifier: Apache-2.0
//
// Closed-form detection errors, SNR law, average BLER and the FER recursion.

#include "gfra/analysis.hpp"

#include <catch_amalgamated.hpp>

using namespace gfra;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("detection errors at beta = tau2")
{
    // Threshold 2 M ln2 tau2 gives P_M = P(M, M ln2) and P_F = Q(M, 2 M ln2).
    for (double tau2 : {1e-12, 0.3, 4.0})
    {
        DetectionProbs dp = detection_probs_amp(tau2, tau2, 100);
        CHECK_THAT(dp.p_md, WithinRel(0.00031311917314236176324, 1e-10));
        CHECK_THAT(dp.p_fa, WithinRel(0.00024455088698446063591, 1e-10));
    }
}

TEST_CASE("detection error limits")
{
    DetectionProbs lo = detection_probs_amp(1e-6, 1.0, 60);
    CHECK(lo.p_md < 1e-100);
    CHECK(lo.p_fa < 1e-100);
    DetectionProbs hi = detection_probs_amp(1e3, 1.0, 60);
    CHECK(hi.p_md > 0.3);
    CHECK(hi.p_fa > 0.3);
    DetectionProbs z = detection_probs_at(0.0, 1.0, 1.0, 10);
    CHECK(z.p_md == 0.0);
    CHECK(z.p_fa == 1.0);

    // With eps2 = 0 the correlated threshold adds delta = log Phi2.
    const double tau2 = 0.2, tau2p = 0.3, beta = 1.0;
    const int M = 10;
    CaseProbs p{0.9, 0.0, 0.1};
    double sb = common_hi_energy(tau2p, 0.1, beta, M, CorrForm::bayes);
    double l = detection_threshold(tau2, beta, M, log_phi2(sb, tau2p, beta, M));
    DetectionProbs a = detection_probs_corr(tau2, tau2p, p, 0.1, beta, M);
    DetectionProbs b = detection_probs_at(l, tau2, beta, M);
    CHECK_THAT(a.p_md, WithinRel(b.p_md, 1e-13));
    CHECK_THAT(a.p_fa, WithinRel(b.p_fa, 1e-13));
}

TEST_CASE("estimation error variance of detected users")
{
    CHECK_THAT(channel_error_var(1.0, 3.0, true), WithinRel(0.75, 1e-15));
    CHECK_THAT(channel_error_var(1e-3, 1.0, true), WithinRel(1e-3 / 1.001, 1e-15));
}

TEST_CASE("SNR law parameters")
{
    const double tau2 = 0.1, beta = 1.0, sigma2 = 0.5;
    auto law = snr_law(10, 2, 3, 20, tau2, beta, sigma2);
    REQUIRE(law);
    CHECK(law->theta2 == 20 - 11 + 1);
    CHECK_THAT(law->theta1, WithinRel(1.0 / (8 * 0.1 + (2 + 0.5) * 1.1), 1e-15));
    CHECK_THAT(law->mean(), WithinRel(law->theta1 * law->theta2, 1e-15));
    CHECK(snr_law(10, 0, 10, 20, tau2, beta, sigma2)->theta2 == 1);
    CHECK_FALSE(snr_law(10, 0, 11, 20, tau2, beta, sigma2).has_value());
    CHECK(law->cdf(0.0) == 0.0);
    CHECK_THAT(std::exp(law->log_pdf(0.7)),
               WithinRel(std::pow(0.7, 9) * std::exp(-0.7 / law->theta1) / (362880.0 * std::pow(law->theta1, 10)), 1e-12));
}

TEST_CASE("linearized BLER constants")
{
    for (auto [c, d] : {std::pair{50, 150}, std::pair{50, 110}, std::pair{100, 150}})
    {
        BlerConstants k = bler_constants(c, d);
        CHECK_THAT(k.r, WithinRel(std::exp2(double(c) / d) - 1.0, 1e-15));
        CHECK_THAT(k.mu - k.v, WithinRel(1.0 / (k.chi * std::sqrt(double(d))), 1e-12));
        CHECK_THAT(0.5 * (k.mu + k.v), WithinRel(k.r, 1e-14));
    }
}

TEST_CASE("average BLER over the gamma law")
{
    struct Ref
    {
        double theta1;
        int theta2;
        double integral, closed;
    };
    for (Ref r : {Ref{0.2, 5, 0.012952641216881531768, 0.010650236305085417015},
                  Ref{0.05, 21, 3.0377849188788850673e-6, 1.5229198957081445042e-7},
                  Ref{0.3, 1, 0.57973789154187537925, 0.57953897857713971204}})
    {
        SnrLaw law{r.theta1, r.theta2};
        CHECK_THAT(avg_bler_cond(law, 50, 150, BlerMethod::integral, 1e-10), WithinRel(r.integral, 1e-7));
        CHECK_THAT(avg_bler_cond(law, 50, 150, BlerMethod::closed_form), WithinRel(r.closed, 1e-12));
    }
}

TEST_CASE("average block error includes detection misses")
{
    SystemConfig c;
    c.n_users = 100;
    c.n_antennas = 20;
    c.pilot_len = 20;
    c.block_len = 120;
    c.beta = 1.0;
    c.sigma2 = 1.0;
    DetectionProbs none{0.0, 0.0};
    AvgBler a = avg_bler(c, 10, 0.2, none, BlerMethod::closed_form);
    auto law = snr_law(10, 0, 0, 20, 0.2, 1.0, 1.0);
    CHECK_THAT(a.p_e, WithinRel(law->cdf(bler_constants(50, 100).r), 1e-13));
    CHECK(a.retained_mass == 1.0);
    DetectionProbs some{0.1, 0.001};
    AvgBler b = avg_bler(c, 10, 0.2, some, BlerMethod::closed_form);
    CHECK(b.p_e >= 0.1);
    CHECK_THAT(b.retained_mass, WithinAbs(1.0, 1e-9));
}

TEST_CASE("FER recursion against an explicit sum")
{
    SystemConfig c;
    c.n_users = 100;
    c.n_active = 10;
    c.n_antennas = 20;
    c.pilot_len = 20;
    c.block_len = 120;
    c.beta = 1.0;
    c.sigma2 = 4.0;
    c.se_samples = 5000;
    SeCache se(c);
    PerformanceModel pm(c, se, BlerMethod::closed_form);
    const int K = c.n_active;
    PerfPoint b1 = pm.first_block(K);
    REQUIRE(b1.bler.p_e > 1e-3);
    CHECK_THAT(pm.fer(Receiver::amp, K, 1), WithinRel(b1.bler.p_e, 1e-14));
    CHECK_THAT(pm.fer(Receiver::corr_amp, K, 1), WithinRel(b1.bler.p_e, 1e-14));

    const double pe = b1.bler.p_e;
    double amp2 = 0.0, corr2 = 0.0;
    for (int k2 = 1; k2 <= K; ++k2)
    {
        double w = pe * std::exp(log_binom_pmf(K - 1, k2 - 1, pe));
        amp2 += w * pm.first_block(k2).bler.p_e;
        corr2 += w * pm.retransmission(K, k2, b1.tau2).bler.p_e;
    }
    CHECK_THAT(pm.fer(Receiver::amp, K, 2), WithinRel(amp2, 1e-9));
    CHECK_THAT(pm.fer(Receiver::corr_amp, K, 2), WithinRel(corr2, 1e-9));
    CHECK(pm.fer(Receiver::amp, K, 2) < pm.fer(Receiver::amp, K, 1));
    CHECK(pm.fer(Receiver::amp, 0, 2) == 0.0);
}
