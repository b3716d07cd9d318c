// SPDX-License-Identifier: Apache-2.0
//
// Special functions used across the library: regularized incomplete gamma,
// Gaussian tail and its inverse, binomial log-weights.

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gfra
{

class DomainError : public std::domain_error
{
  public:
    using std::domain_error::domain_error;
};

namespace detail
{

// Series for P(a,x), valid for x < a + 1.
inline double gamma_p_series(double a, double x)
{
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < 100000; ++n)
    {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-17)
            break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a,x), valid for x >= a + 1.
inline double gamma_q_cf(double a, double x)
{
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 100000; ++i)
    {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny)
            d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-17)
            break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline void check_gamma_args(double shape, double x)
{
    if (!(shape > 0.0) || std::isnan(x) || x < 0.0)
        throw DomainError("incomplete gamma: need shape > 0 and x >= 0 (shape=" + std::to_string(shape) +
                          ", x=" + std::to_string(x) + ")");
}

} // namespace detail

/// Regularized lower incomplete gamma P(shape, x).
inline double reg_gamma_lower(double shape, double x)
{
    detail::check_gamma_args(shape, x);
    if (x == 0.0)
        return 0.0;
    if (std::isinf(x))
        return 1.0;
    if (x < shape + 1.0)
        return detail::gamma_p_series(shape, x);
    return 1.0 - detail::gamma_q_cf(shape, x);
}

/// Regularized upper incomplete gamma Q(shape, x) = 1 - P(shape, x).
inline double reg_gamma_upper(double shape, double x)
{
    detail::check_gamma_args(shape, x);
    if (x == 0.0)
        return 1.0;
    if (std::isinf(x))
        return 0.0;
    if (x < shape + 1.0)
        return 1.0 - detail::gamma_p_series(shape, x);
    return detail::gamma_q_cf(shape, x);
}

/// Gaussian tail Q(x) = P(Z > x).
inline double q_func(double x)
{
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

namespace detail
{

// Acklam's rational approximation of the standard normal quantile.
inline double norm_ppf_rational(double p)
{
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    if (p < p_low)
    {
        double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low)
    {
        double q = std::sqrt(-2.0 * std::log1p(-p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double q = p - 0.5;
    double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

} // namespace detail

/// Inverse Gaussian tail: q_func(q_inv(p)) = p.
inline double q_inv(double p)
{
    if (!(p > 0.0 && p < 1.0))
        throw DomainError("q_inv: p must lie in (0,1), got " + std::to_string(p));
    // Work on the smaller tail so that 1-p is never formed for tiny tails.
    bool upper = p > 0.5;
    double t = upper ? 1.0 - p : p; // exact for p in [0.5,1)
    double x = -detail::norm_ppf_rational(t);
    // Halley step on Q(x) - t.
    for (int i = 0; i < 2; ++i)
    {
        double e = q_func(x) - t;
        double u = -e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x = x - u / (1.0 + 0.5 * x * u);
    }
    return upper ? -x : x;
}

/// log of the binomial pmf C(n,k) p^k (1-p)^(n-k).
inline double log_binom_pmf(int n, int k, double p)
{
    if (k < 0 || k > n)
        return -std::numeric_limits<double>::infinity();
    double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    double lp = k == 0 ? 0.0 : (p <= 0.0 ? -std::numeric_limits<double>::infinity() : k * std::log(p));
    double lq = n - k == 0 ? 0.0 : (p >= 1.0 ? -std::numeric_limits<double>::infinity() : (n - k) * std::log1p(-p));
    return lc + lp + lq;
}

/// Numerically stable logistic 1/(1+exp(l)).
inline double logistic_neg(double l)
{
    if (l > 0.0)
    {
        double e = std::exp(-l);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(l));
}

/// log(exp(x) + exp(y)).
inline double log_add_exp(double x, double y)
{
    if (x == -std::numeric_limits<double>::infinity())
        return y;
    if (y == -std::numeric_limits<double>::infinity())
        return x;
    double m = std::max(x, y);
    return m + std::log1p(std::exp(-std::abs(x - y)));
}

inline double dbm_to_linear(double dbm)
{
    return std::pow(10.0, dbm / 10.0);
}

inline double linear_to_dbm(double mw)
{
    return 10.0 * std::log10(mw);
}

} // namespace gfra
