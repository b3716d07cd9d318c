// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: presets, parameter sweeps, parallel Monte Carlo,
// analytic evaluation, CSV rows and the run manifest.

#pragma once

#include "gfra/analysis.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef GFRA_VERSION
#define GFRA_VERSION "0.0.0"
#endif

namespace gfra
{

inline constexpr const char* kVersion = GFRA_VERSION;

// ---------------------------------------------------------------------------
// Parallel loop with results written by index

inline void parallel_for(int n, int threads, const std::function<void(int)>& fn)
{
    threads = std::max(1, std::min(threads, n));
    if (threads == 1)
    {
        for (int i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++)
            {
                try
                {
                    fn(i);
                }
                catch (...)
                {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err)
                        err = std::current_exception();
                }
            }
        });
    for (auto& t : pool)
        t.join();
    if (err)
        std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Monte Carlo aggregation

struct McEstimate
{
    std::optional<double> mean; // nullopt when no trial produced the metric
    double se = 0.0;
    int n = 0;
};

/// Rate metric: mean of per-trial rates, SE = sqrt(p (1 - p) / trials).
inline McEstimate mc_rate(const std::vector<double>& per_trial)
{
    McEstimate e;
    e.n = static_cast<int>(per_trial.size());
    if (per_trial.empty())
        return e;
    double s = 0.0;
    for (double v : per_trial)
        s += v;
    double p = s / e.n;
    e.mean = p;
    e.se = std::sqrt(std::max(0.0, p * (1.0 - p)) / e.n);
    return e;
}

/// Continuous metric: mean over trials where it exists, SE = sd / sqrt(n).
inline McEstimate mc_mean(const std::vector<std::optional<double>>& per_trial)
{
    McEstimate e;
    double s = 0.0;
    for (const auto& v : per_trial)
        if (v)
        {
            s += *v;
            ++e.n;
        }
    if (e.n == 0)
        return e;
    double m = s / e.n;
    double ss = 0.0;
    for (const auto& v : per_trial)
        if (v)
            ss += (*v - m) * (*v - m);
    e.mean = m;
    e.se = e.n > 1 ? std::sqrt(ss / (e.n - 1) / e.n) : 0.0;
    return e;
}

// ---------------------------------------------------------------------------
// Experiment description

enum class ExperimentKind
{
    detection, // two-block detection and channel estimation (P_MD, P_FA, MSE)
    fer,       // frame error rate over J blocks
};

inline std::string to_string(ExperimentKind k)
{
    return k == ExperimentKind::detection ? "detection" : "fer";
}

struct SweepAxis
{
    std::string name;
    std::vector<double> values;
};

struct Experiment
{
    std::string name = "custom";
    std::string preset = "custom";
    std::string scale = "desk";
    ExperimentKind kind = ExperimentKind::fer;
    SystemConfig base;
    std::vector<SweepAxis> axes;
    std::vector<Receiver> receivers = {Receiver::amp, Receiver::corr_amp};
    int trials = 0;
    int threads = 1;
    double retained_fraction = 0.5;
    std::optional<double> snr_db; // overrides beta as sigma2 * 10^(snr/10) when set
    ReceiverOptions rx;
    std::vector<BlerMethod> bler_methods = {BlerMethod::integral, BlerMethod::closed_form};
    std::vector<std::string> metrics; // empty means every metric of the kind
    std::string config_text;
};

// Axes in loop order, outermost first.
inline const std::vector<std::string>& sweepable_axes()
{
    static const std::vector<std::string> axes = {"n_users",    "n_antennas", "pilot_len",         "block_len",
                                                  "payload_bits", "n_blocks", "sigma2_dbm",        "beta_dbm",
                                                  "snr_db",     "retained_fraction", "n_active"};
    return axes;
}

namespace detail
{


// Preset defaults as key=value text, applied before the user file.
inline std::string preset_defaults(const std::string& preset, const std::string& scale)
{
    const bool full = scale == "full";
    std::string sys = full ? "n_users=2000\nn_antennas=100\npilot_len=100\nblock_len=250\n"
                            : "n_users=400\nn_antennas=60\npilot_len=60\nblock_len=210\n";
    sys += "payload_bits=50\nsigma2_dbm=-109\nbeta_dbm=-109\n";
    if (preset == "fig4" || preset == "fig5")
        return sys + "experiment=detection\nn_blocks=2\nretained_fraction=0.5\n" +
               (full ? "sweep_n_active=40,55,70,85,100\ntrials=1000\n" : "sweep_n_active=20,30,40,50\ntrials=2000\n") +
               (preset == "fig4" ? "metrics=p_md,p_fa\n" : "metrics=mse_per_antenna\n");
    if (preset == "fig6")
        return sys + "experiment=fer\nn_blocks=2\nsweep_beta_dbm=-109,-106\n" +
               (full ? "sweep_n_active=88,92,96,100\ntrials=1000\n" : "sweep_n_active=54,56,58,60\ntrials=500\n");
    if (preset == "fig7")
        return sys + "experiment=fer\ntrials=0\nsweep_n_blocks=1,2,3\nsweep_snr_db=-17,-16,-15,-14,-13,-12\n" +
               "bler_method=closed_form\n" + (full ? "n_active=80\n" : "n_active=40\n");
    return sys;
}

inline Receiver receiver_from_string(const std::string& s)
{
    if (s == "amp")
        return Receiver::amp;
    if (s == "corr_amp")
        return Receiver::corr_amp;
    throw std::invalid_argument("unknown receiver '" + s + "'");
}

inline BlerMethod bler_method_from_string(const std::string& s)
{
    if (s == "integral")
        return BlerMethod::integral;
    if (s == "closed_form")
        return BlerMethod::closed_form;
    throw std::invalid_argument("unknown bler method '" + s + "'");
}

inline ThresholdMode threshold_mode_from_string(const std::string& s)
{
    if (s == "common")
        return ThresholdMode::common;
    if (s == "per_user")
        return ThresholdMode::per_user;
    throw std::invalid_argument("unknown threshold mode '" + s + "'");
}

} // namespace detail

/// Build an Experiment from a key=value file; preset defaults are overlaid by the file.
inline Experiment parse_experiment(const KeyValueFile& user)
{
    const std::string preset = user.get<std::string>("preset").value_or("custom");
    const std::string scale = user.get<std::string>("scale").value_or("desk");
    if (preset != "custom" && preset != "fig4" && preset != "fig5" && preset != "fig6" && preset != "fig7")
        throw user.error("preset", "expected one of fig4, fig5, fig6, fig7, custom");
    if (scale != "desk" && scale != "full")
        throw user.error("scale", "expected desk or full");

    KeyValueFile defaults = KeyValueFile::from_string(detail::preset_defaults(preset, scale));
    auto pick = [&](const std::string& key) -> const KeyValueFile& { return user.has(key) ? user : defaults; };
    auto wrap = [&](const std::string& key, auto&& fn) {
        try
        {
            return fn();
        }
        catch (const ConfigError&)
        {
            throw;
        }
        catch (const std::exception& ex)
        {
            throw pick(key).error(key, ex.what());
        }
    };

    Experiment ex;
    ex.preset = preset;
    ex.scale = scale;
    ex.name = user.get<std::string>("name").value_or(preset);
    ex.config_text = user.text();
    ex.base = apply_system_fields(apply_system_fields(SystemConfig{}, defaults), user);

    std::string kind = pick("experiment").get<std::string>("experiment").value_or("");
    if (kind == "detection")
        ex.kind = ExperimentKind::detection;
    else if (kind == "fer")
        ex.kind = ExperimentKind::fer;
    else
        throw pick("experiment").error("experiment", "expected detection or fer");

    for (const auto& axis : sweepable_axes())
    {
        const std::string key = "sweep_" + axis;
        if (auto v = pick(key).get_list<double>(key))
            ex.axes.push_back({axis, *v});
    }
    if (preset == "custom" && ex.axes.empty())
        throw ConfigError(user.source() + ": custom experiments need at least one sweep_<field> axis");
    ex.snr_db = pick("snr_db").get<double>("snr_db");
    auto has_axis = [&](const char* n) {
        return std::any_of(ex.axes.begin(), ex.axes.end(), [&](const SweepAxis& a) { return a.name == n; });
    };
    if ((ex.snr_db || has_axis("snr_db")) && (user.has("beta_dbm") || has_axis("beta_dbm")))
        throw ConfigError(user.source() + ": snr_db and beta_dbm are mutually exclusive");

    if (auto r = pick("receivers").get_list<std::string>("receivers"))
    {
        ex.receivers.clear();
        for (const auto& s : *r)
        {
            if (s == "both")
            {
                ex.receivers = {Receiver::amp, Receiver::corr_amp};
                break;
            }
            ex.receivers.push_back(wrap("receivers", [&] { return detail::receiver_from_string(s); }));
        }
    }
    ex.trials = pick("trials").get<int>("trials").value_or(0);
    if (ex.trials < 0)
        throw pick("trials").error("trials", "must be >= 0");
    ex.threads = user.get<int>("threads").value_or(1);
    ex.retained_fraction = pick("retained_fraction").get<double>("retained_fraction").value_or(0.5);
    if (!(ex.retained_fraction > 0.0 && ex.retained_fraction <= 1.0))
        throw pick("retained_fraction").error("retained_fraction", "must be in (0, 1]");
    if (auto s = user.get<std::string>("corr_form"))
        ex.rx.form = wrap("corr_form", [&] { return corr_form_from_string(*s); });
    if (auto s = user.get<std::string>("threshold_mode"))
        ex.rx.threshold = wrap("threshold_mode", [&] { return detail::threshold_mode_from_string(*s); });
    if (auto v = user.get<double>("amp_damping"))
        ex.rx.amp.damping = *v;
    if (auto v = user.get<int>("amp_max_iter"))
        ex.rx.amp.max_iter = *v;
    if (auto v = user.get<double>("amp_tol"))
        ex.rx.amp.tol = *v;
    if (!(ex.rx.amp.damping > 0.0 && ex.rx.amp.damping <= 1.0))
        throw user.error("amp_damping", "must be in (0, 1]");
    if (auto m = pick("bler_method").get_list<std::string>("bler_method"))
    {
        ex.bler_methods.clear();
        for (const auto& s : *m)
            ex.bler_methods.push_back(wrap("bler_method", [&] { return detail::bler_method_from_string(s); }));
    }
    if (auto m = pick("metrics").get_list<std::string>("metrics"))
        ex.metrics = *m;

    for (const auto& k : user.unused_keys())
        throw user.error(k, "unknown key");
    return ex;
}

// ---------------------------------------------------------------------------
// Sweep points

struct SweepPoint
{
    int index = 0;
    SystemConfig cfg;
    double retained_fraction = 0.5;
    double beta_dbm = 0.0;
    double sigma2_dbm = 0.0;

    int k2() const
    {
        return std::clamp(static_cast<int>(std::lround(retained_fraction * cfg.n_active)), 1, cfg.n_active);
    }
    double snr_db() const { return beta_dbm - sigma2_dbm; }
};

inline std::vector<SweepPoint> expand_sweep(const Experiment& ex)
{
    std::vector<SweepPoint> pts;
    SweepPoint p0;
    p0.cfg = ex.base;
    p0.retained_fraction = ex.retained_fraction;
    p0.beta_dbm = linear_to_dbm(ex.base.beta);
    p0.sigma2_dbm = linear_to_dbm(ex.base.sigma2);
    std::optional<double> snr = ex.snr_db;
    std::function<void(std::size_t, SweepPoint, std::optional<double>)> rec = [&](std::size_t a, SweepPoint p,
                                                                                  std::optional<double> s) {
        if (a == ex.axes.size())
        {
            if (s)
            {
                p.beta_dbm = p.sigma2_dbm + *s;
                p.cfg.beta = dbm_to_linear(p.beta_dbm);
            }
            p.cfg.validate();
            p.index = static_cast<int>(pts.size());
            pts.push_back(p);
            return;
        }
        const auto& ax = ex.axes[a];
        for (double v : ax.values)
        {
            SweepPoint q = p;
            std::optional<double> sq = s;
            auto as_int = [&](double x) {
                if (x != std::round(x))
                    throw ConfigError("sweep_" + ax.name + ": expected integer values");
                return static_cast<int>(x);
            };
            if (ax.name == "n_users")
                q.cfg.n_users = as_int(v);
            else if (ax.name == "n_antennas")
                q.cfg.n_antennas = as_int(v);
            else if (ax.name == "pilot_len")
                q.cfg.pilot_len = as_int(v);
            else if (ax.name == "block_len")
                q.cfg.block_len = as_int(v);
            else if (ax.name == "payload_bits")
                q.cfg.payload_bits = as_int(v);
            else if (ax.name == "n_blocks")
                q.cfg.n_blocks = as_int(v);
            else if (ax.name == "n_active")
                q.cfg.n_active = as_int(v);
            else if (ax.name == "sigma2_dbm")
            {
                q.sigma2_dbm = v;
                q.cfg.sigma2 = dbm_to_linear(v);
            }
            else if (ax.name == "beta_dbm")
            {
                q.beta_dbm = v;
                q.cfg.beta = dbm_to_linear(v);
            }
            else if (ax.name == "snr_db")
                sq = v;
            else if (ax.name == "retained_fraction")
                q.retained_fraction = v;
            rec(a + 1, q, sq);
        }
    };
    rec(0, p0, snr);
    return pts;
}

// ---------------------------------------------------------------------------
// Result rows

struct CsvRow
{
    std::string experiment;
    std::string receiver;
    std::string source; // mc, analytic_integral, analytic_closed
    std::string metric;
    int block = 0;      // 0 means the whole frame
    std::optional<int> k2; // retained users in block 2 of the detection experiment
    SweepPoint point;
    std::optional<double> value;
    std::optional<double> mc_stderr;
    std::uint64_t seed = 0;
    int trials = 0;
    std::string status = "ok";
};

inline const char* csv_header()
{
    return "experiment,receiver,source,metric,block,n_users,n_active,k2,n_antennas,pilot_len,block_len,"
           "payload_bits,n_blocks,beta_dbm,sigma2_dbm,snr_db,value,mc_stderr,seed,trials,status";
}

inline std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(std::ostream& os, const std::vector<CsvRow>& rows)
{
    os << csv_header() << '\n';
    for (const auto& r : rows)
    {
        const auto& c = r.point.cfg;
        os << r.experiment << ',' << r.receiver << ',' << r.source << ',' << r.metric << ',' << r.block << ','
           << c.n_users << ',' << c.n_active << ',' << (r.k2 ? std::to_string(*r.k2) : "") << ','
           << c.n_antennas << ',' << c.pilot_len << ',' << c.block_len << ',' << c.payload_bits << ','
           << c.n_blocks << ',' << fmt_double(r.point.beta_dbm) << ',' << fmt_double(r.point.sigma2_dbm) << ','
           << fmt_double(r.point.snr_db()) << ',' << (r.value ? fmt_double(*r.value) : "") << ','
           << (r.mc_stderr ? fmt_double(*r.mc_stderr) : "") << ',' << r.seed << ',';
        if (r.source == "mc")
            os << r.trials;
        else
            os << "analytic";
        os << ',' << r.status << '\n';
    }
}

// ---------------------------------------------------------------------------
// Running

struct RunOptions
{
    bool monte_carlo = true;
    bool analytic = true;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> threads;
};

namespace detail
{

inline bool wants(const Experiment& ex, const std::string& metric)
{
    return ex.metrics.empty() || std::find(ex.metrics.begin(), ex.metrics.end(), metric) != ex.metrics.end();
}

inline bool has_receiver(const Experiment& ex, Receiver r)
{
    return std::find(ex.receivers.begin(), ex.receivers.end(), r) != ex.receivers.end();
}

inline RngStream trial_stream(std::uint64_t seed, int point, int trial)
{
    return RngStream(seed, static_cast<std::uint64_t>(StreamTag::trial))
        .substream(static_cast<std::uint64_t>(point))
        .substream(static_cast<std::uint64_t>(trial));
}

inline PilotMatrix point_pilots(const SystemConfig& cfg, std::uint64_t seed, int point)
{
    RngStream s = RngStream(seed, static_cast<std::uint64_t>(StreamTag::pilots)).substream(static_cast<std::uint64_t>(point));
    return generate_pilots(cfg, s);
}

struct RowSink
{
    const Experiment& ex;
    const SweepPoint& pt;
    std::uint64_t seed;
    int trials;
    std::vector<CsvRow>& rows;

    void add(const std::string& receiver, const std::string& source, const std::string& metric, int block,
             std::optional<double> value, std::optional<double> se = std::nullopt)
    {
        if (!wants(ex, metric))
            return;
        CsvRow r;
        r.experiment = ex.name;
        r.receiver = receiver;
        r.source = source;
        r.metric = metric;
        r.block = block;
        r.point = pt;
        if (ex.kind == ExperimentKind::detection)
            r.k2 = pt.k2();
        r.value = value;
        r.mc_stderr = se;
        r.seed = seed;
        r.trials = source == "mc" ? trials : 0;
        r.status = value ? "ok" : "missing";
        rows.push_back(std::move(r));
    }

    void add_mc(const std::string& receiver, const std::string& metric, int block, const McEstimate& e)
    {
        add(receiver, "mc", metric, block, e.mean, e.mean ? std::optional<double>(e.se) : std::nullopt);
    }

    void fail(const std::string& receiver, const std::string& source, const std::string& metric, int block,
              const std::string& what)
    {
        if (!wants(ex, metric))
            return;
        add(receiver, source, metric, block, std::nullopt);
        rows.back().status = "failed: " + what;
    }
};

inline void mc_detection(const Experiment& ex, const SweepPoint& pt, std::uint64_t seed, int trials, int threads,
                         RowSink& sink)
{
    const SystemConfig& cfg = pt.cfg;
    SeCache se(cfg, ex.rx.form);
    PilotMatrix pilots = point_pilots(cfg, seed, pt.index);
    std::vector<BlockPairOutcome> out(static_cast<std::size_t>(trials));
    const int k2 = pt.k2();
    parallel_for(trials, threads, [&](int t) {
        RngStream s = trial_stream(seed, pt.index, t);
        out[static_cast<std::size_t>(t)] = simulate_block_pair(cfg, pilots, k2, s, se, ex.rx);
    });

    auto emit = [&](const std::string& rx, int block, auto member) {
        std::vector<double> md, fa;
        std::vector<std::optional<double>> mse;
        for (const auto& o : out)
        {
            const DetectionStats& d = o.*member;
            md.push_back(static_cast<double>(d.missed) / d.K);
            fa.push_back(d.n_inactive > 0 ? static_cast<double>(d.false_alarms) / d.n_inactive : 0.0);
            mse.push_back(d.mse_count > 0 ? std::optional<double>(d.mse_sum / d.mse_count) : std::nullopt);
        }
        sink.add_mc(rx, "p_md", block, mc_rate(md));
        sink.add_mc(rx, "p_fa", block, mc_rate(fa));
        sink.add_mc(rx, "mse_per_antenna", block, mc_mean(mse));
    };
    emit("amp", 1, &BlockPairOutcome::block1);
    if (has_receiver(ex, Receiver::amp))
        emit("amp", 2, &BlockPairOutcome::block2_amp);
    if (has_receiver(ex, Receiver::corr_amp))
        emit("corr_amp", 2, &BlockPairOutcome::block2_corr);
}

inline void analytic_detection(const Experiment& ex, const SweepPoint& pt, RowSink& sink)
{
    const SystemConfig& cfg = pt.cfg;
    SeCache se(cfg, ex.rx.form);
    PerformanceModel pm(cfg, se, BlerMethod::closed_form, ex.rx.threshold);
    const int K = cfg.n_active;
    const int k2 = pt.k2();
    auto emit = [&](const std::string& rx, int block, const PerfPoint& p) {
        sink.add(rx, "analytic_closed", "p_md", block, p.detection.p_md);
        sink.add(rx, "analytic_closed", "p_fa", block, p.detection.p_fa);
        sink.add(rx, "analytic_closed", "mse_per_antenna", block, p.delta_v);
    };
    PerfPoint b1 = pm.first_block(K);
    emit("amp", 1, b1);
    if (has_receiver(ex, Receiver::amp))
        emit("amp", 2, pm.first_block(k2));
    if (has_receiver(ex, Receiver::corr_amp))
        emit("corr_amp", 2, pm.retransmission(K, k2, b1.tau2));
}

inline void mc_fer(const Experiment& ex, const SweepPoint& pt, std::uint64_t seed, int trials, int threads,
                   RowSink& sink)
{
    const SystemConfig& cfg = pt.cfg;
    SeCache se(cfg, ex.rx.form);
    PilotMatrix pilots = point_pilots(cfg, seed, pt.index);
    const std::size_t R = ex.receivers.size();
    std::vector<double> fer(static_cast<std::size_t>(trials) * R);
    parallel_for(trials, threads, [&](int t) {
        for (std::size_t r = 0; r < R; ++r)
        {
            RngStream s = trial_stream(seed, pt.index, t);
            fer[static_cast<std::size_t>(t) * R + r] = simulate_frame(cfg, pilots, s, ex.receivers[r], se, ex.rx).fer_sample();
        }
    });
    for (std::size_t r = 0; r < R; ++r)
    {
        std::vector<double> v(static_cast<std::size_t>(trials));
        for (int t = 0; t < trials; ++t)
            v[static_cast<std::size_t>(t)] = fer[static_cast<std::size_t>(t) * R + r];
        sink.add_mc(to_string(ex.receivers[r]), "fer", 0, mc_rate(v));
    }
    if (R == 2 && ex.receivers[0] != ex.receivers[1])
    {
        // Paired per-trial difference FER_amp - FER_corr on common random numbers.
        std::size_t ia = ex.receivers[0] == Receiver::amp ? 0 : 1;
        std::vector<std::optional<double>> d(static_cast<std::size_t>(trials));
        for (int t = 0; t < trials; ++t)
            d[static_cast<std::size_t>(t)] =
                fer[static_cast<std::size_t>(t) * R + ia] - fer[static_cast<std::size_t>(t) * R + (1 - ia)];
        sink.add_mc("corr_amp", "fer_gain_vs_amp", 0, mc_mean(d));
    }
}

inline void analytic_fer(const Experiment& ex, const SweepPoint& pt, RowSink& sink)
{
    const SystemConfig& cfg = pt.cfg;
    SeCache se(cfg, ex.rx.form);
    for (BlerMethod m : ex.bler_methods)
    {
        PerformanceModel pm(cfg, se, m, ex.rx.threshold);
        const std::string src = m == BlerMethod::integral ? "analytic_integral" : "analytic_closed";
        for (Receiver r : ex.receivers)
            sink.add(to_string(r), src, "fer", 0, pm.fer(r, cfg.n_active, cfg.n_blocks));
    }
}

} // namespace detail

struct RunResult
{
    std::vector<CsvRow> rows;
    std::uint64_t seed = 0;
    int trials = 0;
    int threads = 1;
};

inline RunResult run_experiment(const Experiment& ex, const RunOptions& opt = {})
{
    RunResult res;
    res.seed = opt.seed.value_or(ex.base.master_seed);
    res.trials = opt.trials.value_or(ex.trials);
    res.threads = std::max(1, opt.threads.value_or(ex.threads));
    if (res.trials < 0)
        throw std::invalid_argument("trials must be >= 0");
    std::vector<SweepPoint> pts = expand_sweep(ex);
    for (auto& p : pts)
        p.cfg.master_seed = res.seed;

    const bool mc = opt.monte_carlo && res.trials > 0;
    std::vector<std::vector<CsvRow>> mc_rows(pts.size()), an_rows(pts.size());
    if (opt.analytic)
        parallel_for(static_cast<int>(pts.size()), res.threads, [&](int i) {
            const SweepPoint& pt = pts[static_cast<std::size_t>(i)];
            detail::RowSink sink{ex, pt, res.seed, 0, an_rows[static_cast<std::size_t>(i)]};
            try
            {
                if (ex.kind == ExperimentKind::detection)
                    detail::analytic_detection(ex, pt, sink);
                else
                    detail::analytic_fer(ex, pt, sink);
            }
            catch (const std::exception& e)
            {
                sink.fail("all", "analytic", ex.kind == ExperimentKind::fer ? "fer" : "p_md", 0, e.what());
            }
        });
    if (mc)
        for (const auto& pt : pts)
        {
            detail::RowSink sink{ex, pt, res.seed, res.trials, mc_rows[static_cast<std::size_t>(pt.index)]};
            try
            {
                if (ex.kind == ExperimentKind::detection)
                    detail::mc_detection(ex, pt, res.seed, res.trials, res.threads, sink);
                else
                    detail::mc_fer(ex, pt, res.seed, res.trials, res.threads, sink);
            }
            catch (const std::exception& e)
            {
                sink.fail("all", "mc", ex.kind == ExperimentKind::fer ? "fer" : "p_md", 0, e.what());
            }
        }
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        res.rows.insert(res.rows.end(), mc_rows[i].begin(), mc_rows[i].end());
        res.rows.insert(res.rows.end(), an_rows[i].begin(), an_rows[i].end());
    }
    return res;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline nlohmann::json make_manifest(const Experiment& ex, const RunResult& res, const std::string& command,
                                    const std::string& config_path, const std::vector<std::string>& outputs)
{
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    nlohmann::json j;
    j["software"] = "gfra";
    j["version"] = kVersion;
    j["command"] = command;
    j["config_path"] = config_path;
    j["config_hash"] = "fnv1a64:" + hex64(fnv1a64(ex.config_text));
    j["experiment"] = ex.name;
    j["preset"] = ex.preset;
    j["scale"] = ex.scale;
    j["kind"] = to_string(ex.kind);
    j["seed"] = res.seed;
    j["trials"] = res.trials;
    j["threads"] = res.threads;
    j["corr_form"] = to_string(ex.rx.form);
    j["threshold_mode"] = ex.rx.threshold == ThresholdMode::common ? "common" : "per_user";
    j["amp_damping"] = ex.rx.amp.damping;
    j["rows"] = res.rows.size();
    j["outputs"] = outputs;
    j["created_utc"] = stamp;
    return j;
}

} // namespace gfra
