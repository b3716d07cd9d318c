// SPDX-License-Identifier: Apache-2.0
//
// AMP on small instances: empirical MSE tracks state evolution, detection
// thresholds and scoring.

#include "gfra/amp.hpp"

#include <catch_amalgamated.hpp>

using namespace gfra;
using Catch::Matchers::WithinRel;

namespace
{
SystemConfig cfg()
{
    SystemConfig c;
    c.n_users = 400;
    c.n_active = 30;
    c.n_antennas = 16;
    c.pilot_len = 100;
    c.block_len = 250;
    c.beta = 1.0;
    c.sigma2 = 1.0;
    c.se_samples = 20000;
    return c;
}
} // namespace

TEST_CASE("empirical MSE of AMP tracks state evolution")
{
    SystemConfig c = cfg();
    RngStream s(21, 1);
    const double lambda = c.lambda();
    const double tau2 = se_fixed_point_amp(c, lambda);
    SeSampler smp(c);
    const double se_mse = se_mse_amp(tau2, lambda, c.beta, smp);
    double err = 0.0;
    const int reps = 20;
    for (int r = 0; r < reps; ++r)
    {
        PilotMatrix p = generate_pilots(c, s);
        auto a = ActivityVector::random(c.n_users, c.n_active, s);
        EffectiveChannel ch = sample_block_channels(c, a, s);
        CMatrix Y = received_pilot(c, p, ch, s);
        AmpOutput out = amp_run(Y, p, lambda, c, tau2);
        CHECK(out.iters >= 1);
        err += (out.H_hat - ch.H).squaredNorm() / (double(c.n_users) * c.n_antennas);
    }
    CHECK_THAT(err / reps, WithinRel(se_mse, 0.15));
}

TEST_CASE("threshold formula and detection")
{
    const double tau2 = 0.2, beta = 1.0;
    const int M = 12;
    double l = detection_threshold(tau2, beta, M);
    // At the threshold the active and inactive likelihoods are equal.
    double lr = -M * std::log(beta + tau2) - l / (beta + tau2) + M * std::log(tau2) + l / tau2;
    CHECK(std::abs(lr) < 1e-12);
    CHECK(detection_threshold(tau2, beta, M, 1.0) > l);

    CMatrix X = CMatrix::Zero(4, M);
    X.row(1).setConstant(std::sqrt(l / M) * 1.01);
    X.row(2).setConstant(std::sqrt(l / M) * 0.99);
    AmpOutput out;
    out.pseudo_data = X;
    out.tau2_final = tau2;
    ActivityDecision d = detect_amp(out, beta, M);
    CHECK(d.detected == std::vector<int>{1});
    ActivityVector truth(4);
    truth.set(2, true);
    score(d, truth);
    CHECK(d.missed == 1);
    CHECK(d.false_alarms == 1);
    out.tau2_final = 0.0;
    CHECK_THROWS_AS(detect_amp(out, beta, M), DomainError);
}

TEST_CASE("noise-free AMP recovers the support")
{
    SystemConfig c = cfg();
    c.sigma2 = 1e-6;
    c.n_active = 10;
    RngStream s(22, 1);
    PilotMatrix p = generate_pilots(c, s);
    auto a = ActivityVector::random(c.n_users, c.n_active, s);
    EffectiveChannel ch = sample_block_channels(c, a, s);
    CMatrix Y = received_pilot(c, p, ch, s);
    AmpOutput out = amp_run(Y, p, c.lambda(), c);
    ActivityDecision d = detect_amp(out, c.beta, c.n_antennas);
    score(d, a);
    CHECK(d.missed == 0);
    CHECK(d.false_alarms == 0);
    CHECK((out.H_hat - ch.H).norm() < 1e-2 * ch.H.norm());
}
