// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: simulate, analyze, sweep and selftest.

#include "gfra/gfra.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace
{

struct Flags
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> threads;
    std::string out_dir = ".";
};

int run_command(const std::string& command, const Flags& f, bool mc, bool analytic)
{
    gfra::KeyValueFile kv = gfra::KeyValueFile::load(f.config);
    gfra::Experiment ex = gfra::parse_experiment(kv);
    gfra::RunOptions opt;
    opt.monte_carlo = mc;
    opt.analytic = analytic;
    opt.seed = f.seed;
    opt.trials = f.trials;
    opt.threads = f.threads;
    if (mc && !analytic && opt.trials.value_or(ex.trials) == 0)
    {
        std::cerr << "gfra: experiment '" << ex.name << "' has trials=0; nothing to simulate\n";
        return 2;
    }

    gfra::RunResult res = gfra::run_experiment(ex, opt);

    fs::create_directories(f.out_dir);
    const std::string stem = ex.name + (command == "sweep" ? "" : "_" + command);
    const fs::path csv = fs::path(f.out_dir) / (stem + ".csv");
    const fs::path manifest = fs::path(f.out_dir) / (stem + ".manifest.json");
    {
        std::ofstream os(csv);
        gfra::write_csv(os, res.rows);
        if (!os)
            throw std::runtime_error("cannot write " + csv.string());
    }
    {
        std::ofstream os(manifest);
        os << gfra::make_manifest(ex, res, command, f.config, {csv.filename().string()}).dump(2) << '\n';
        if (!os)
            throw std::runtime_error("cannot write " + manifest.string());
    }

    int failed = 0;
    for (const auto& r : res.rows)
        failed += r.status.rfind("failed", 0) == 0;
    std::cout << csv.string() << " (" << res.rows.size() << " rows, seed " << res.seed << ", trials " << res.trials
              << ")\n";
    if (failed)
    {
        std::cerr << "gfra: " << failed << " rows failed\n";
        return 3;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// selftest

struct Check
{
    int failed = 0;
    void operator()(const std::string& name, bool ok, const std::string& detail = "")
    {
        std::cout << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : "  " + detail) << '\n';
        failed += !ok;
    }
};

std::string num(double v)
{
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

int selftest()
{
    using namespace gfra;
    Check check;

    double p = reg_gamma_lower(3.5, 2.0);
    check("reg_gamma_lower(3.5, 2)", std::abs(p - 0.22022259152428407907) < 1e-13, num(p));
    double q = reg_gamma_upper(100.0, 100.0);
    check("reg_gamma_upper(100, 100)", std::abs(q - 0.48670120172085133514) < 1e-12, num(q));
    check("q_inv(q_func(3))", std::abs(q_inv(q_func(3.0)) - 3.0) < 1e-10);
    const double r3 = std::exp2(1.0 / 3.0) - 1.0;
    check("block_error_prob at capacity = rate", std::abs(block_error_prob(r3, 50, 150) - 0.5) < 1e-12);

    // Printed correlated denoiser with eps2 = 0 collapses to the AMP denoiser.
    RngStream s(7, static_cast<std::uint64_t>(StreamTag::test));
    const int M = 8;
    const double beta = 1.0;
    CaseProbs probs{0.9, 0.0, 0.1};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i)
    {
        double tau2 = 0.05 + s.uniform();
        Eigen::VectorXcd a = sample_complex_gaussian(s, M, tau2 + beta * (i % 2));
        Eigen::VectorXcd b = sample_complex_gaussian(s, M, 1.0);
        auto ca = corr_mmse_denoiser(a, b, tau2, 0.3, probs, beta, M, CorrForm::printed);
        auto aa = mmse_denoiser(a, tau2, probs.eps3 / (probs.eps1 + probs.eps3), beta, M);
        worst = std::max(worst, (ca.value - aa.value).norm() / std::max(1e-300, aa.value.norm()));
    }
    check("corr denoiser reduces to AMP (eps2 = 0)", worst <= 1e-14, "max rel diff " + num(worst));

    // Thread count does not change results.
    KeyValueFile kv = KeyValueFile::from_string("experiment=fer\nn_users=60\nn_active=6\nn_antennas=12\npilot_len=12\n"
                                                "block_len=80\npayload_bits=20\nn_blocks=2\nse_samples=2000\n"
                                                "beta_dbm=-115\nsweep_n_active=4,6\ntrials=6\n");
    Experiment ex = parse_experiment(kv);
    RunOptions one, two;
    one.threads = 1;
    two.threads = 2;
    std::ostringstream c1, c2;
    write_csv(c1, run_experiment(ex, one).rows);
    write_csv(c2, run_experiment(ex, two).rows);
    check("CSV identical for 1 and 2 threads", c1.str() == c2.str());

    std::cout << (check.failed ? "selftest FAILED\n" : "selftest passed\n");
    return check.failed ? 1 : 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Grant-free massive random access with retransmission: AMP and correlated AMP receivers"};
    app.set_version_flag("--version", std::string(gfra::kVersion));
    app.require_subcommand(1);

    Flags flags;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", flags.config, "Experiment config (key=value)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", flags.seed, "Master seed (overrides master_seed)");
        sub->add_option("--trials", flags.trials, "Monte Carlo trials per sweep point")->check(CLI::NonNegativeNumber);
        sub->add_option("--threads", flags.threads, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out-dir", flags.out_dir, "Output directory for CSV and manifest");
    };
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo rows only");
    auto* analyze = app.add_subcommand("analyze", "Analytic rows only");
    auto* sweep = app.add_subcommand("sweep", "Monte Carlo and analytic rows");
    auto* self = app.add_subcommand("selftest", "Quick internal consistency checks");
    for (auto* sub : {simulate, analyze, sweep})
        add_common(sub);

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (self->parsed())
            return selftest();
        if (simulate->parsed())
            return run_command("simulate", flags, true, false);
        if (analyze->parsed())
            return run_command("analyze", flags, false, true);
        return run_command("sweep", flags, true, true);
    }
    catch (const gfra::ConfigError& e)
    {
        std::cerr << "gfra: config error: " << e.what() << '\n';
        return 2;
    }
    catch (const std::exception& e)
    {
        std::cerr << "gfra: " << e.what() << '\n';
        return 1;
    }
}
