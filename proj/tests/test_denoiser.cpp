// SPDX-License-Identifier: Apache-2.0
//
// Denoisers against direct posterior-mean evaluation, Jacobians against
// finite differences, and reductions between the two priors.

#include "gfra/denoiser.hpp"
#include "gfra/rng.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace gfra;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{

// log CN(0, v I_M) density at a vector with squared norm s.
double log_cn(double s, double v, int M)
{
    return -M * std::log(std::numbers::pi * v) - s / v;
}

Eigen::VectorXcd amp_posterior_mean(const Eigen::VectorXcd& a, double tau2, double lambda, double beta, int M)
{
    double s = a.squaredNorm();
    double l1 = std::log(lambda) + log_cn(s, beta + tau2, M);
    double l0 = std::log1p(-lambda) + log_cn(s, tau2, M);
    double p = 1.0 / (1.0 + std::exp(l0 - l1));
    return p * beta / (beta + tau2) * a;
}

Eigen::VectorXcd corr_posterior_mean(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b, double tau2,
                                     double tau2_prev, const CaseProbs& pr, double beta, int M)
{
    double sa = a.squaredNorm(), sb = b.squaredNorm();
    double f0a = log_cn(sa, tau2, M), f1a = log_cn(sa, beta + tau2, M);
    double f0b = log_cn(sb, tau2_prev, M), f1b = log_cn(sb, beta + tau2_prev, M);
    double w1 = std::log(pr.eps1) + f0b + f0a;
    double w2 = std::log(pr.eps2) + f1b + f0a;
    double w3 = std::log(pr.eps3) + f1b + f1a;
    double mx = std::max({w1, w2, w3});
    double p3 = std::exp(w3 - mx) / (std::exp(w1 - mx) + std::exp(w2 - mx) + std::exp(w3 - mx));
    return p3 * beta / (beta + tau2) * a;
}

template <class F>
Eigen::MatrixXcd fd_jacobian(F&& eta, const Eigen::VectorXcd& a, double h)
{
    const Eigen::Index M = a.size();
    const std::complex<double> I(0.0, 1.0);
    Eigen::MatrixXcd J(M, M);
    for (Eigen::Index j = 0; j < M; ++j)
    {
        Eigen::VectorXcd e = Eigen::VectorXcd::Zero(M);
        e[j] = h;
        Eigen::VectorXcd dx = (eta(a + e) - eta(a - e)) / (2.0 * h);
        Eigen::VectorXcd dy = (eta(a + I * e) - eta(a - I * e)) / (2.0 * h);
        J.col(j) = 0.5 * (dx - I * dy);
    }
    return J;
}

} // namespace

TEST_CASE("AMP denoiser equals the Bernoulli-Gaussian posterior mean")
{
    RngStream s(11, 1);
    const int M = 8;
    const double beta = 1.0, tau2 = 0.3, lambda = 0.1;
    for (int i = 0; i < 200; ++i)
    {
        Eigen::VectorXcd a = sample_complex_gaussian(s, M, (i % 2 ? beta : 0.0) + tau2);
        auto ev = mmse_denoiser(a, tau2, lambda, beta, M);
        Eigen::VectorXcd ref = amp_posterior_mean(a, tau2, lambda, beta, M);
        CHECK((ev.value - ref).norm() <= 1e-12 * std::max(ref.norm(), 1e-300) + 1e-300);
    }
    Eigen::VectorXcd a = Eigen::VectorXcd::Constant(M, 1.0);
    CHECK(mmse_denoiser(a, tau2, 0.0, beta, M).value.isZero(0.0));
    CHECK((mmse_denoiser(a, tau2, 1.0, beta, M).value - beta / (beta + tau2) * a).norm() < 1e-15);
    CHECK_THROWS_AS(mmse_denoiser(a, tau2, lambda, beta, M + 1), std::invalid_argument);
    CHECK_THROWS_AS(mmse_denoiser(a, 0.0, lambda, beta, M), DomainError);
}

TEST_CASE("correlated denoiser equals the three-case posterior mean")
{
    RngStream s(12, 1);
    const int M = 8;
    const double beta = 1.0, tau2 = 0.25, tau2_prev = 0.4;
    CaseProbs pr = case_probs(400, 40, 20);
    for (int i = 0; i < 300; ++i)
    {
        int c = i % 3;
        Eigen::VectorXcd b = sample_complex_gaussian(s, M, (c == 0 ? 0.0 : beta) + tau2_prev);
        Eigen::VectorXcd a = sample_complex_gaussian(s, M, (c == 2 ? beta : 0.0) + tau2);
        auto ev = corr_mmse_denoiser(a, b, tau2, tau2_prev, pr, beta, M, CorrForm::bayes);
        Eigen::VectorXcd ref = corr_posterior_mean(a, b, tau2, tau2_prev, pr, beta, M);
        CHECK((ev.value - ref).norm() <= 1e-11 * ref.norm() + 1e-300);
    }
}

TEST_CASE("Jacobians agree with finite differences")
{
    RngStream s(13, 1);
    const int M = 6;
    const double beta = 1.0, tau2 = 0.2, tau2_prev = 0.3;
    CaseProbs pr = case_probs(200, 30, 12);
    for (int i = 0; i < 20; ++i)
    {
        // Norms near the activity transition exercise the shrinkage slope.
        Eigen::VectorXcd a = sample_complex_gaussian(s, M, tau2 + 0.3 * beta);
        Eigen::VectorXcd b = sample_complex_gaussian(s, M, tau2_prev + 0.5 * beta);
        auto amp = [&](const Eigen::VectorXcd& x) { return mmse_denoiser(x, tau2, 0.1, beta, M).value; };
        auto corr = [&](const Eigen::VectorXcd& x) {
            return corr_mmse_denoiser(x, b, tau2, tau2_prev, pr, beta, M).value;
        };
        Eigen::MatrixXcd ja = mmse_denoiser(a, tau2, 0.1, beta, M).jacobian;
        Eigen::MatrixXcd jc = corr_mmse_denoiser(a, b, tau2, tau2_prev, pr, beta, M).jacobian;
        CHECK((ja - fd_jacobian(amp, a, 1e-6)).norm() <= 1e-6 * ja.norm());
        CHECK((jc - fd_jacobian(corr, a, 1e-6)).norm() <= 1e-6 * jc.norm());
    }
}

TEST_CASE("case probabilities")
{
    CaseProbs p = case_probs(400, 40, 20);
    CHECK_THAT(p.eps1, WithinRel(0.9, 1e-15));
    CHECK_THAT(p.eps2, WithinRel(0.05, 1e-15));
    CHECK_THAT(p.eps3, WithinRel(0.05, 1e-15));
    CHECK(p.eps1 + p.eps2 + p.eps3 == 1.0);
    for (int Kp = 0; Kp <= 37; Kp += 3)
        for (int K = 0; K <= Kp; K += 2)
        {
            CaseProbs q = case_probs(37, Kp, K);
            CHECK_THAT(q.eps1 + q.eps2 + q.eps3, WithinAbs(1.0, 4e-16));
        }
    CHECK_THROWS_AS(case_probs(10, 3, 4), std::invalid_argument);
    CHECK_THROWS_AS(case_probs(10, 11, 4), std::invalid_argument);
}

TEST_CASE("correlated prior reductions")
{
    const int M = 10;
    const double beta = 1.0, tau2 = 0.2, tau2_prev = 0.3;
    RngStream s(14, 1);
    for (int i = 0; i < 100; ++i)
    {
        Eigen::VectorXcd a = sample_complex_gaussian(s, M, tau2 + (i % 2) * beta);
        Eigen::VectorXcd b = sample_complex_gaussian(s, M, tau2_prev + beta);

        // eps2 = 0 with the printed form: the HI cancels and the prior is eps3 / (eps1 + eps3).
        CaseProbs p0{0.9, 0.0, 0.1};
        auto c = corr_mmse_denoiser(a, b, tau2, tau2_prev, p0, beta, M, CorrForm::printed);
        auto d = mmse_denoiser(a, tau2, 0.1, beta, M);
        CHECK((c.value - d.value).norm() <= 1e-15 * d.value.norm());

        // eps1 = 0: the HI carries no information and the prior is eps3.
        CaseProbs p1{0.0, 0.6, 0.4};
        auto e = corr_mmse_denoiser(a, b, tau2, tau2_prev, p1, beta, M, CorrForm::bayes);
        auto f = mmse_denoiser(a, tau2, 0.4, beta, M);
        CHECK((e.value - f.value).norm() <= 1e-14 * f.value.norm());
    }
    CHECK(std::isinf(corr_prior_log_odds(1.0, tau2_prev, CaseProbs{1.0, 0.0, 0.0}, beta, M, CorrForm::bayes)));
    CHECK(corr_form_from_string("printed") == CorrForm::printed);
    CHECK_THROWS_AS(corr_form_from_string("other"), std::invalid_argument);
}
