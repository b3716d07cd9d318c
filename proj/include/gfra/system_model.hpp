// SPDX-License-Identifier: Apache-2.0
//
// Pilots, activity patterns, block-fading channels and the normalized pilot
// observation Y = P H + N / sqrt(L).

#pragma once

#include "gfra/config.hpp"
#include "gfra/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gfra
{

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

struct PilotMatrix
{
    CMatrix P; // L x N, column n is p_n
};

class ActivityVector
{
  public:
    ActivityVector() = default;
    explicit ActivityVector(int n_users) : u_(static_cast<std::size_t>(n_users), 0) {}

    /// K users drawn uniformly without replacement.
    static ActivityVector random(int n_users, int n_active, RngStream& stream)
    {
        ActivityVector a(n_users);
        std::vector<int> idx(static_cast<std::size_t>(n_users));
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < n_active; ++i)
        {
            std::uniform_int_distribution<int> pick(i, n_users - 1);
            std::swap(idx[i], idx[pick(stream.engine())]);
            a.u_[idx[i]] = 1;
        }
        return a;
    }

    int size() const { return static_cast<int>(u_.size()); }
    bool operator[](int n) const { return u_[n] != 0; }
    void set(int n, bool active) { u_[n] = active ? 1 : 0; }

    int active_count() const { return static_cast<int>(std::count(u_.begin(), u_.end(), 1)); }

    std::vector<int> active_indices() const
    {
        std::vector<int> out;
        for (int n = 0; n < size(); ++n)
            if (u_[n])
                out.push_back(n);
        return out;
    }

    bool is_subset_of(const ActivityVector& other) const
    {
        if (other.size() != size())
            return false;
        for (int n = 0; n < size(); ++n)
            if (u_[n] && !other.u_[n])
                return false;
        return true;
    }

  private:
    std::vector<std::uint8_t> u_;
};

struct EffectiveChannel
{
    CMatrix H; // N x M, zero rows for inactive users
};

inline PilotMatrix generate_pilots(const SystemConfig& cfg, RngStream& stream)
{
    if (cfg.pilot_len < 1 || cfg.n_users < 1)
        throw std::invalid_argument("generate_pilots: need L, N >= 1");
    return {sample_complex_gaussian(stream, cfg.pilot_len, cfg.n_users, 1.0 / cfg.pilot_len)};
}

inline EffectiveChannel sample_block_channels(const SystemConfig& cfg, const ActivityVector& activity,
                                              RngStream& stream)
{
    EffectiveChannel ch{CMatrix::Zero(cfg.n_users, cfg.n_antennas)};
    for (int n = 0; n < cfg.n_users; ++n)
        if (activity[n])
            for (int m = 0; m < cfg.n_antennas; ++m)
                ch.H(n, m) = stream.complex_normal(cfg.beta);
    return ch;
}

/// Y_p / sqrt(L) = P H + N_p / sqrt(L), noise entries CN(0, sigma2/L).
inline CMatrix received_pilot(const SystemConfig& cfg, const PilotMatrix& pilots, const EffectiveChannel& ch,
                              RngStream& stream)
{
    if (pilots.P.rows() != cfg.pilot_len || pilots.P.cols() != ch.H.rows() || ch.H.cols() != cfg.n_antennas)
        throw std::invalid_argument("received_pilot: dimension mismatch");
    CMatrix Y = sample_complex_gaussian(stream, cfg.pilot_len, cfg.n_antennas, cfg.sigma2 / cfg.pilot_len);
    for (Eigen::Index n = 0; n < ch.H.rows(); ++n)
        if (!ch.H.row(n).isZero(0.0))
            Y.noalias() += pilots.P.col(n) * ch.H.row(n);
    return Y;
}

} // namespace gfra
