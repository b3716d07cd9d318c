// SPDX-License-Identifier: Apache-2.0
//
// Reproducible random streams indexed by (master_seed, stream_id).

#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <random>

namespace gfra
{

inline constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Well-known substream tags so that unrelated consumers never share a stream.
enum class StreamTag : std::uint64_t
{
    pilots = 1,
    trial = 2,
    state_evolution = 3,
    test = 4,
};

class RngStream
{
  public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
        : master_seed_(master_seed), stream_id_(stream_id)
    {
        std::uint64_t s = splitmix64(master_seed ^ 0x6a09e667f3bcc908ULL);
        s = splitmix64(s ^ stream_id);
        std::array<std::uint32_t, 8> words{};
        for (std::size_t i = 0; i < words.size(); i += 2)
        {
            s = splitmix64(s);
            words[i] = static_cast<std::uint32_t>(s);
            words[i + 1] = static_cast<std::uint32_t>(s >> 32);
        }
        std::seed_seq seq(words.begin(), words.end());
        engine_.seed(seq);
    }

    /// Child stream; the derivation depends only on (master_seed, stream_id, child).
    RngStream substream(std::uint64_t child) const
    {
        return RngStream(master_seed_, splitmix64(stream_id_ * 0x100000001b3ULL ^ splitmix64(child)));
    }

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_id() const { return stream_id_; }
    std::mt19937_64& engine() { return engine_; }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    /// CN(0, variance): real and imaginary parts each N(0, variance/2).
    std::complex<double> complex_normal(double variance)
    {
        double s = std::sqrt(0.5 * variance);
        double re = normal();
        double im = normal();
        return {s * re, s * im};
    }

    double gamma(double shape)
    {
        std::gamma_distribution<double> g(shape, 1.0);
        return g(engine_);
    }

  private:
    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline Eigen::VectorXcd sample_complex_gaussian(RngStream& stream, Eigen::Index n, double variance)
{
    Eigen::VectorXcd v(n);
    if (variance == 0.0)
    {
        v.setZero();
        return v;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = stream.complex_normal(variance);
    return v;
}

inline Eigen::MatrixXcd sample_complex_gaussian(RngStream& stream, Eigen::Index rows, Eigen::Index cols,
                                                double variance)
{
    Eigen::MatrixXcd m(rows, cols);
    if (variance == 0.0)
    {
        m.setZero();
        return m;
    }
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            m(i, j) = stream.complex_normal(variance);
    return m;
}

} // namespace gfra
