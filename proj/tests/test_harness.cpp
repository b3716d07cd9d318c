// SPDX-License-Identifier: Apache-2.0
//
// Experiment parsing, sweep expansion, Monte Carlo aggregation, CSV output
// and run determinism.

#include "gfra/harness.hpp"

#include <catch_amalgamated.hpp>

#include <set>

using namespace gfra;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{
const char* kTiny = "experiment=fer\nn_users=60\nn_active=6\nn_antennas=12\npilot_len=12\n"
                    "block_len=80\npayload_bits=20\nn_blocks=2\nse_samples=2000\n"
                    "beta_dbm=-115\nsweep_n_active=4,6\ntrials=6\n";

Experiment parse(const std::string& text)
{
    return parse_experiment(KeyValueFile::from_string(text));
}
} // namespace

TEST_CASE("presets expand to their sweeps")
{
    Experiment f4 = parse("preset=fig4\n");
    CHECK(f4.kind == ExperimentKind::detection);
    CHECK(f4.trials == 2000);
    auto p4 = expand_sweep(f4);
    REQUIRE(p4.size() == 4);
    CHECK(p4[2].cfg.n_active == 40);
    CHECK(p4[2].k2() == 20);
    CHECK(p4[0].cfg.n_users == 400);

    Experiment f6 = parse("preset=fig6\nscale=full\ntrials=3\n");
    CHECK(f6.trials == 3);
    auto p6 = expand_sweep(f6);
    REQUIRE(p6.size() == 8);
    CHECK(p6[0].cfg.n_users == 2000);
    CHECK(p6[0].beta_dbm == -109.0);
    CHECK(p6[4].beta_dbm == -106.0);
    CHECK(p6[5].cfg.n_active == 92);

    Experiment f7 = parse("preset=fig7\n");
    auto p7 = expand_sweep(f7);
    REQUIRE(p7.size() == 18);
    CHECK(p7[0].cfg.n_blocks == 1);
    CHECK_THAT(p7[0].snr_db(), WithinAbs(-17.0, 1e-12));
    CHECK_THAT(p7[17].cfg.beta, WithinRel(dbm_to_linear(-121.0), 1e-12));
    CHECK(f7.bler_methods == std::vector<BlerMethod>{BlerMethod::closed_form});
}

TEST_CASE("experiment config errors")
{
    CHECK_THROWS_WITH(parse("preset=fig9\n"), ContainsSubstring("field 'preset'"));
    CHECK_THROWS_WITH(parse("preset=fig4\nscale=huge\n"), ContainsSubstring("field 'scale'"));
    CHECK_THROWS_WITH(parse("experiment=fer\n"), ContainsSubstring("sweep_"));
    CHECK_THROWS_WITH(parse("experiment=both\nsweep_n_active=1\n"), ContainsSubstring("field 'experiment'"));
    CHECK_THROWS_WITH(parse("preset=fig4\ncolour=red\n"), ContainsSubstring("field 'colour': unknown key"));
    CHECK_THROWS_WITH(parse("preset=fig6\nsnr_db=3\n"), ContainsSubstring("mutually exclusive"));
    CHECK_THROWS_WITH(parse("preset=fig7\nbeta_dbm=-100\n"), ContainsSubstring("mutually exclusive"));
    CHECK_THROWS_WITH(parse("preset=fig4\nreceivers=amp,zf\n"), ContainsSubstring("field 'receivers'"));
    CHECK_THROWS_WITH(parse("preset=fig4\ncorr_form=other\n"), ContainsSubstring("field 'corr_form'"));
    CHECK_THROWS_WITH(parse("preset=fig4\namp_damping=0\n"), ContainsSubstring("field 'amp_damping'"));
    CHECK_THROWS_WITH(parse("preset=fig4\ntrials=-1\n"), ContainsSubstring("field 'trials'"));
    CHECK_THROWS_AS(expand_sweep(parse("preset=fig4\nsweep_n_active=20.5\n")), ConfigError);
    CHECK_THROWS_AS(expand_sweep(parse("preset=fig4\nsweep_n_active=70\n")), ConfigError);
}

TEST_CASE("options overlay the preset")
{
    Experiment e = parse("preset=fig4\nname=mine\nreceivers=corr_amp\ncorr_form=printed\nthreshold_mode=per_user\n"
                         "amp_damping=0.5\nsweep_n_active=10\nn_users=200\n");
    CHECK(e.name == "mine");
    CHECK(e.receivers == std::vector<Receiver>{Receiver::corr_amp});
    CHECK(e.rx.form == CorrForm::printed);
    CHECK(e.rx.threshold == ThresholdMode::per_user);
    CHECK(e.rx.amp.damping == 0.5);
    auto pts = expand_sweep(e);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].cfg.n_users == 200);
    CHECK(pts[0].cfg.n_active == 10);
}

TEST_CASE("Monte Carlo aggregation")
{
    McEstimate r = mc_rate({0.0, 1.0, 1.0, 0.0});
    CHECK(*r.mean == 0.5);
    CHECK_THAT(r.se, WithinRel(0.25, 1e-15));
    CHECK_FALSE(mc_rate({}).mean);

    McEstimate m = mc_mean({1.0, std::nullopt, 3.0});
    CHECK(m.n == 2);
    CHECK(*m.mean == 2.0);
    CHECK_THAT(m.se, WithinRel(1.0, 1e-15));
    CHECK_FALSE(mc_mean({std::nullopt}).mean);

    // Bernoulli(0.1): the estimate lands within 4 standard errors and the SE is the binomial one.
    RngStream s(51, static_cast<std::uint64_t>(StreamTag::test));
    std::vector<double> x(10000);
    for (auto& v : x)
        v = s.uniform() < 0.1 ? 1.0 : 0.0;
    McEstimate b = mc_rate(x);
    CHECK(std::abs(*b.mean - 0.1) <= 4.0 * std::sqrt(0.09 / 1e4));
    CHECK_THAT(b.se, WithinRel(std::sqrt(*b.mean * (1.0 - *b.mean) / 1e4), 1e-12));
}

TEST_CASE("parallel loop covers every index and rethrows")
{
    std::vector<int> hit(100, 0);
    parallel_for(100, 4, [&](int i) { hit[static_cast<std::size_t>(i)] += 1; });
    CHECK(std::count(hit.begin(), hit.end(), 1) == 100);
    CHECK_THROWS_AS(parallel_for(10, 3, [](int i) {
                        if (i == 7)
                            throw std::runtime_error("x");
                    }),
                    std::runtime_error);
}

TEST_CASE("CSV rows, missing values and thread determinism")
{
    Experiment ex = parse(kTiny);
    RunOptions one, three;
    one.threads = 1;
    three.threads = 3;
    RunResult a = run_experiment(ex, one);
    RunResult b = run_experiment(ex, three);
    std::ostringstream ca, cb;
    write_csv(ca, a.rows);
    write_csv(cb, b.rows);
    CHECK(ca.str() == cb.str());
    CHECK(ca.str().rfind(std::string(csv_header()) + "\n", 0) == 0);

    int mc = 0, integral = 0, closed = 0;
    for (const auto& r : a.rows)
    {
        mc += r.source == "mc";
        integral += r.source == "analytic_integral";
        closed += r.source == "analytic_closed";
        CHECK(r.status == "ok");
    }
    // Per point: fer for two receivers plus the paired gain; analytic fer per receiver and method.
    CHECK(mc == 2 * 3);
    CHECK(integral == 2 * 2);
    CHECK(closed == 2 * 2);

    RunOptions other = one;
    other.seed = 2;
    std::ostringstream cc;
    write_csv(cc, run_experiment(ex, other).rows);
    CHECK(cc.str() != ca.str());

    CsvRow miss;
    miss.experiment = "x";
    miss.source = "mc";
    miss.metric = "mse_per_antenna";
    miss.status = "missing";
    std::ostringstream cm;
    write_csv(cm, {miss});
    std::string line = cm.str().substr(cm.str().find('\n') + 1);
    CHECK_THAT(line, ContainsSubstring(",,,0,0,missing"));
}

TEST_CASE("detection experiment rows")
{
    Experiment ex = parse("experiment=detection\nn_users=60\nn_antennas=12\npilot_len=12\nblock_len=80\n"
                          "se_samples=2000\nsweep_n_active=6\ntrials=4\nmetrics=p_md,mse_per_antenna\n");
    RunResult r = run_experiment(ex);
    std::set<std::string> metrics;
    for (const auto& row : r.rows)
    {
        metrics.insert(row.metric);
        REQUIRE(row.k2);
        CHECK(*row.k2 == 3);
    }
    CHECK(metrics == std::set<std::string>{"p_md", "mse_per_antenna"});
    CHECK(r.rows.size() == 2 * 3 * 2);
}

TEST_CASE("manifest records provenance of the run")
{
    Experiment ex = parse(kTiny);
    RunOptions opt;
    opt.analytic = false;
    opt.trials = 2;
    opt.seed = 77;
    RunResult r = run_experiment(ex, opt);
    nlohmann::json j = make_manifest(ex, r, "simulate", "tiny.cfg", {"custom_simulate.csv"});
    CHECK(j["seed"] == 77);
    CHECK(j["trials"] == 2);
    CHECK(j["version"] == kVersion);
    CHECK(j["config_hash"] == "fnv1a64:" + hex64(fnv1a64(kTiny)));
    CHECK(j["rows"] == r.rows.size());
    CHECK(j["outputs"][0] == "custom_simulate.csv");
    CHECK(hex64(0xcbf29ce484222325ULL) == "cbf29ce484222325");
}
