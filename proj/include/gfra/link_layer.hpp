// SPDX-License-Identifier: Apache-2.0
//
// ZF data detection, post-ZF SNR, normal-approximation block errors and the
// stop-and-wait ARQ frame simulation.

#pragma once

#include "gfra/corr_amp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfra
{

class SingularMatrix : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kSnrCap = 1e12;

namespace detail
{

// Thin QR of the column-normalized matrix; throws on numerical rank deficiency.
struct NormalizedQr
{
    Eigen::HouseholderQR<CMatrix> qr;
    RVector col_norms;
};

inline NormalizedQr normalized_qr(const CMatrix& H)
{
    if (H.cols() == 0 || H.cols() > H.rows())
        throw SingularMatrix("ZF needs 1 <= columns <= rows");
    NormalizedQr out;
    out.col_norms = H.colwise().norm().transpose();
    CMatrix Hn = H;
    for (Eigen::Index j = 0; j < H.cols(); ++j)
    {
        if (!(out.col_norms[j] > 0.0) || !std::isfinite(out.col_norms[j]))
            throw SingularMatrix("ZF: zero or non-finite column");
        Hn.col(j) /= out.col_norms[j];
    }
    out.qr.compute(Hn);
    const auto& R = out.qr.matrixQR();
    const double tol = 1e-13 * static_cast<double>(H.rows());
    for (Eigen::Index j = 0; j < H.cols(); ++j)
        if (!(std::abs(R(j, j)) > tol))
            throw SingularMatrix("ZF: rank-deficient channel estimate matrix");
    return out;
}

} // namespace detail

/// W = H (H^H H)^{-1}, computed from a QR factorization.
inline CMatrix zf_equalizer(const CMatrix& H_hat)
{
    auto nq = detail::normalized_qr(H_hat);
    const Eigen::Index k = H_hat.cols();
    auto Rt = nq.qr.matrixQR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
    CMatrix Q = nq.qr.householderQ() * CMatrix::Identity(H_hat.rows(), k);
    // Hn = Q R, W_n = Q R^{-H}; undo the column scaling: W = W_n diag(1/norms).
    CMatrix RinvH = CMatrix::Identity(k, k);
    Rt.adjoint().solveInPlace(RinvH); // R^{-H}
    CMatrix W = Q * RinvH;
    for (Eigen::Index j = 0; j < k; ++j)
        W.col(j) /= nq.col_norms[j];
    return W;
}

/// Diagonal of (H^H H)^{-1}.
inline RVector inverse_gram_diagonal(const CMatrix& H_hat)
{
    auto nq = detail::normalized_qr(H_hat);
    const Eigen::Index k = H_hat.cols();
    CMatrix Rinv = CMatrix::Identity(k, k);
    nq.qr.matrixQR().topLeftCorner(k, k).template triangularView<Eigen::Upper>().solveInPlace(Rinv);
    RVector d = Rinv.rowwise().squaredNorm();
    for (Eigen::Index j = 0; j < k; ++j)
        d[j] /= nq.col_norms[j] * nq.col_norms[j];
    return d;
}

/// Estimation error variance of a detected (beta tau2/(beta+tau2)) or missed (beta) user.
inline double channel_error_var(double tau2, double beta, bool detected)
{
    if (!detected)
        return beta;
    if (tau2 <= 0.0)
        return 0.0;
    return beta * tau2 / (beta + tau2);
}

/// Interference-plus-noise power seen by each detected user after ZF.
inline double post_snr_denominator(int K_true, int e, double tau2, double beta, double sigma2)
{
    return (K_true - e) * channel_error_var(tau2, beta, true) + e * beta + sigma2;
}

inline double snr_from_inverse_gram(double inv_gram_kk, double denominator)
{
    double v = 1.0 / (inv_gram_kk * denominator);
    if (!std::isfinite(v) || v > kSnrCap)
        return kSnrCap;
    return v;
}

/// Post-ZF SNR of column k of the detected-user estimate matrix.
inline double post_snr(const CMatrix& H_hat_detected, int k, int K_true, int e, double tau2, double beta,
                       double sigma2)
{
    if (k < 0 || k >= H_hat_detected.cols())
        throw std::invalid_argument("post_snr: column index out of range");
    if (e >= K_true)
        throw std::invalid_argument("post_snr: a detected true-active user requires e < K");
    RVector d = inverse_gram_diagonal(H_hat_detected);
    return snr_from_inverse_gram(d[k], post_snr_denominator(K_true, e, tau2, beta, sigma2));
}

/// Normal approximation: Q((C(snr) - c/d) / sqrt(V(snr)/d)).
inline double block_error_prob(double snr, int c, int d)
{
    if (d < 1)
        throw std::invalid_argument("block_error_prob: d must be >= 1");
    if (!(snr > 0.0))
        return 1.0;
    const double log2e = std::numbers::log2e;
    double C = std::log1p(snr) * log2e;
    double V = snr * (snr + 2.0) / (2.0 * (snr + 1.0) * (snr + 1.0)) * log2e * log2e;
    double R = static_cast<double>(c) / d;
    return q_func((C - R) / std::sqrt(V / d));
}

// ---------------------------------------------------------------------------
// Frame simulation

enum class Receiver
{
    amp,
    corr_amp,
};

inline std::string to_string(Receiver r)
{
    return r == Receiver::amp ? "amp" : "corr_amp";
}

struct ReceiverOptions
{
    CorrForm form = CorrForm::bayes;
    ThresholdMode threshold = ThresholdMode::common;
    AmpOptions amp;
    bool record_snr = false;
};

struct BlockRecord
{
    int K = 0;              // true active users in the block
    int missed = 0;         // e
    int false_alarms = 0;   // f
    int detected = 0;       // |K_hat|
    int successes = 0;
    bool zf_failed = false; // |K_hat| > M or singular Gram matrix
    double tau2 = 0.0;      // state-evolution fixed point used for detection
    double mse_sum = 0.0;   // per-antenna squared error summed over correctly detected actives
    int mse_count = 0;
    std::vector<double> snr; // post-ZF SNR per correctly detected active user (if recorded)
};

struct FrameOutcome
{
    static constexpr int kFail = 0;
    std::vector<int> success_block; // per initially active user: 1..J, or kFail
    std::vector<BlockRecord> blocks;

    int n_active() const { return static_cast<int>(success_block.size()); }
    int failures() const
    {
        int f = 0;
        for (int b : success_block)
            f += b == kFail;
        return f;
    }
    double fer_sample() const { return n_active() == 0 ? 0.0 : static_cast<double>(failures()) / n_active(); }
};

/// One block's pilot phase (AMP or correlated AMP) and detection.
struct BlockDetection
{
    AmpOutput out;
    ActivityDecision decision;
    double tau2 = 0.0;
};

inline BlockDetection detect_block(const SystemConfig& cfg, const PilotMatrix& pilots, const CMatrix& Y, int K_cur,
                                   const BlockDetection* prev, int K_prev, Receiver rx, SeCache& se,
                                   const ReceiverOptions& opt)
{
    const int N = cfg.n_users;
    const int M = cfg.n_antennas;
    BlockDetection bd;
    if (prev == nullptr || rx == Receiver::amp)
    {
        bd.tau2 = se.amp(K_cur);
        bd.out = amp_run(Y, pilots, static_cast<double>(K_cur) / N, cfg, bd.tau2, opt.amp);
        bd.decision = detect_amp(bd.out, cfg.beta, M);
    }
    else
    {
        CaseProbs probs = case_probs(N, K_prev, K_cur);
        HiMatrix hi = build_hi(prev->out, static_cast<double>(K_prev) / N);
        bd.tau2 = se.corr(K_prev, K_cur, prev->tau2);
        bd.out = corr_amp_run(Y, pilots, hi, probs, cfg, bd.tau2, opt.form, opt.amp);
        bd.decision = detect_corr(bd.out, cfg.beta, M, probs, hi, opt.form, opt.threshold);
    }
    return bd;
}

inline void record_estimation(BlockRecord& rec, const BlockDetection& bd, const ActivityVector& truth,
                              const EffectiveChannel& ch)
{
    for (int n : truth.active_indices())
        if (bd.decision.u_hat[n])
        {
            rec.mse_sum += (bd.out.H_hat.row(n) - ch.H.row(n)).squaredNorm() / static_cast<double>(ch.H.cols());
            ++rec.mse_count;
        }
}

/// Data phase: per true-active user, true on success.
inline std::vector<std::pair<int, bool>> data_phase(const SystemConfig& cfg, const BlockDetection& bd,
                                                    const ActivityVector& truth, RngStream& stream, BlockRecord& rec,
                                                    bool record_snr)
{
    std::vector<std::pair<int, bool>> result;
    const auto& det = bd.decision.detected;
    const int K = truth.active_count();
    const int e = bd.decision.missed;
    bool feasible = static_cast<int>(det.size()) <= cfg.n_antennas && !det.empty();
    RVector inv_diag;
    if (feasible)
    {
        CMatrix Hd(cfg.n_antennas, static_cast<Eigen::Index>(det.size()));
        for (std::size_t i = 0; i < det.size(); ++i)
            Hd.col(static_cast<Eigen::Index>(i)) = bd.out.H_hat.row(det[i]).transpose();
        try
        {
            inv_diag = inverse_gram_diagonal(Hd);
        }
        catch (const SingularMatrix&)
        {
            feasible = false;
        }
    }
    rec.zf_failed = !det.empty() && !feasible;
    const double denom = post_snr_denominator(K, e, bd.tau2, cfg.beta, cfg.sigma2);
    std::size_t col = 0;
    for (int n : truth.active_indices())
    {
        while (col < det.size() && det[col] < n)
            ++col;
        bool detected = col < det.size() && det[col] == n;
        bool ok = false;
        if (detected && feasible)
        {
            double snr = snr_from_inverse_gram(inv_diag[static_cast<Eigen::Index>(col)], denom);
            if (record_snr)
                rec.snr.push_back(snr);
            double eps = block_error_prob(snr, cfg.payload_bits, cfg.data_len());
            ok = stream.uniform() >= eps;
        }
        result.emplace_back(n, ok);
    }
    return result;
}

inline FrameOutcome simulate_frame(const SystemConfig& cfg, const PilotMatrix& pilots, RngStream& stream,
                                   Receiver rx, SeCache& se, const ReceiverOptions& opt = {})
{
    FrameOutcome fo;
    ActivityVector active = ActivityVector::random(cfg.n_users, cfg.n_active, stream);
    std::vector<int> users = active.active_indices();
    std::vector<int> slot(static_cast<std::size_t>(cfg.n_users), -1);
    for (std::size_t i = 0; i < users.size(); ++i)
        slot[users[i]] = static_cast<int>(i);
    fo.success_block.assign(users.size(), FrameOutcome::kFail);

    std::optional<BlockDetection> prev;
    int K_prev = 0;
    for (int j = 1; j <= cfg.n_blocks; ++j)
    {
        const int K = active.active_count();
        if (K == 0)
            break;
        EffectiveChannel ch = sample_block_channels(cfg, active, stream);
        CMatrix Y = received_pilot(cfg, pilots, ch, stream);
        BlockDetection bd = detect_block(cfg, pilots, Y, K, prev ? &*prev : nullptr, K_prev, rx, se, opt);
        score(bd.decision, active);

        BlockRecord rec;
        rec.K = K;
        rec.missed = bd.decision.missed;
        rec.false_alarms = bd.decision.false_alarms;
        rec.detected = bd.decision.detected_count();
        rec.tau2 = bd.tau2;
        record_estimation(rec, bd, active, ch);
        auto outcome = data_phase(cfg, bd, active, stream, rec, opt.record_snr);
        for (auto [n, ok] : outcome)
            if (ok)
            {
                fo.success_block[slot[n]] = j;
                active.set(n, false);
                ++rec.successes;
            }
        fo.blocks.push_back(std::move(rec));
        K_prev = K;
        prev = std::move(bd);
    }
    return fo;
}

// ---------------------------------------------------------------------------
// Two-block detection experiment: block 1 with K users, then a random subset
// of K2 users retransmits and both receivers process the same block-2 signal.

struct DetectionStats
{
    int K = 0;
    int n_inactive = 0;
    int missed = 0;
    int false_alarms = 0;
    double mse_sum = 0.0;
    int mse_count = 0;
};

struct BlockPairOutcome
{
    DetectionStats block1;
    DetectionStats block2_amp;
    DetectionStats block2_corr;
};

inline DetectionStats detection_stats(const BlockDetection& bd, const ActivityVector& truth, const EffectiveChannel& ch)
{
    DetectionStats s;
    s.K = truth.active_count();
    s.n_inactive = truth.size() - s.K;
    ActivityDecision d = bd.decision;
    score(d, truth);
    s.missed = d.missed;
    s.false_alarms = d.false_alarms;
    BlockRecord rec;
    record_estimation(rec, bd, truth, ch);
    s.mse_sum = rec.mse_sum;
    s.mse_count = rec.mse_count;
    return s;
}

inline BlockPairOutcome simulate_block_pair(const SystemConfig& cfg, const PilotMatrix& pilots, int K2,
                                            RngStream& stream, SeCache& se, const ReceiverOptions& opt = {})
{
    const int K = cfg.n_active;
    if (K2 < 1 || K2 > K)
        throw std::invalid_argument("simulate_block_pair: need 1 <= K2 <= K");
    BlockPairOutcome o;
    ActivityVector u1 = ActivityVector::random(cfg.n_users, K, stream);
    EffectiveChannel ch1 = sample_block_channels(cfg, u1, stream);
    CMatrix Y1 = received_pilot(cfg, pilots, ch1, stream);
    BlockDetection b1 = detect_block(cfg, pilots, Y1, K, nullptr, 0, Receiver::amp, se, opt);
    o.block1 = detection_stats(b1, u1, ch1);

    std::vector<int> act = u1.active_indices();
    ActivityVector u2(cfg.n_users);
    for (int i = 0; i < K2; ++i)
    {
        std::uniform_int_distribution<int> pick(i, K - 1);
        std::swap(act[i], act[pick(stream.engine())]);
        u2.set(act[i], true);
    }
    EffectiveChannel ch2 = sample_block_channels(cfg, u2, stream);
    CMatrix Y2 = received_pilot(cfg, pilots, ch2, stream);
    BlockDetection ba = detect_block(cfg, pilots, Y2, K2, &b1, K, Receiver::amp, se, opt);
    BlockDetection bc = detect_block(cfg, pilots, Y2, K2, &b1, K, Receiver::corr_amp, se, opt);
    o.block2_amp = detection_stats(ba, u2, ch2);
    o.block2_corr = detection_stats(bc, u2, ch2);
    return o;
}

} // namespace gfra
