#include <catch_amalgamated.hpp>

#include <json.hpp>

#include <string>
#include <vector>

#include "mvmr/cli.hpp"
#include "mvmr/core_stats.hpp"
#include "mvmr/summary_data.hpp"
#include "test_support.hpp"

using namespace mvmr;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "mvmr");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    return run_cli(static_cast<int>(args.size()), argv.data());
}

std::vector<std::string> analyze_args(const GwasPaths& p) {
    return {"analyze", "--exposures", p.exposures.string(), "--outcome", p.outcome.string(), "--ld", p.ld.string(),
            "--exposure-cor", p.exposure_cor.string(), "--nx", "5000", "--ny", "5000", "--draws", "20000"};
}

std::vector<std::string> with(std::vector<std::string> base, const std::vector<std::string>& extra) {
    base.insert(base.end(), extra.begin(), extra.end());
    return base;
}

}  // namespace

TEST_CASE("analyze writes a complete report for the packaged fixture") {
    const auto dir = testing::scratch_dir("cli_analyze");
    const auto fixture = testing::strong_fixture();
    const auto out = dir / "report.json";
    const auto sets = dir / "sets.csv";
    REQUIRE(run(with(analyze_args(fixture), {"--grid", "-2:2:0.04,-2:2:0.04", "--out", out.string(), "--sets-out",
                                             sets.string(), "--threads", "2"})) == 0);

    const auto r = nlohmann::json::parse(testing::read_file(out));
    CHECK(r["schema_version"] == 1);
    CHECK(r["inputs"]["J"] == 8);
    CHECK(r["inputs"]["K"] == 2);
    CHECK(r["inputs"]["exposure_names"] == nlohmann::json({"x1", "x2"}));
    CHECK(r["grid"]["evaluations"] == 10201);
    CHECK(r["grid"]["auto"] == false);

    // Conditional F recomputed through the library from the same files.
    const auto s = build_multivariable_summary(harmonize_variants(load_gwas_tables(fixture, 5000, 5000)));
    const auto cf = conditional_f_report(s);
    CHECK(r["conditional_f"]["min_f"].get<double>() == Catch::Approx(cf.min_f).epsilon(1e-12));
    CHECK(cf.min_f == Catch::Approx(72.6).margin(0.05));
    const auto gmm = gmm_estimate(s);
    CHECK(r["estimates"]["gmm"]["theta"][0].get<double>() == Catch::Approx(gmm.theta(0)).epsilon(1e-12));

    std::vector<std::string> methods;
    for (const auto& set : r["sets"]) {
        methods.push_back(set["method"]);
        CHECK(set["area"].get<int>() > 0);
        CHECK(set["projected_intervals"].size() == 2);
    }
    CHECK(methods == std::vector<std::string>{"wald", "ar", "kleibergen", "lc_robust", "kleibergen_oh"});
    CHECK(r["distortion_cutoff"]["determined"] == true);
    CHECK(r["distortion_cutoff"]["gamma_hat"].get<double>() == Catch::Approx(0.05));

    const std::string csv = testing::read_file(sets);
    CHECK(csv.rfind("theta_1,theta_2,member_wald,member_ar,member_kleibergen,member_lc_robust,member_kleibergen_oh\n",
                    0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 10202);

    // The report is a faithful serialization: re-dumping the parsed tree reproduces it.
    const auto ordered = nlohmann::ordered_json::parse(testing::read_file(out));
    CHECK(ordered.dump(2) + "\n" == testing::read_file(out));
}

TEST_CASE("analyze output does not depend on the thread count") {
    const auto dir = testing::scratch_dir("cli_threads");
    const auto base = analyze_args(testing::strong_fixture());
    REQUIRE(run(with(base, {"--threads", "1", "--out", (dir / "a.json").string()})) == 0);
    REQUIRE(run(with(base, {"--threads", "4", "--out", (dir / "b.json").string()})) == 0);
    CHECK(testing::read_file(dir / "a.json") == testing::read_file(dir / "b.json"));
}

TEST_CASE("analyze default grid and method selection") {
    const auto dir = testing::scratch_dir("cli_default");
    const auto out = dir / "r.json";
    REQUIRE(run(with(analyze_args(testing::strong_fixture()), {"--methods", "ar,koh", "--out", out.string()})) == 0);
    const auto r = nlohmann::json::parse(testing::read_file(out));
    CHECK(r["grid"]["auto"] == true);
    CHECK(r["grid"]["evaluations"] == 101 * 101);
    REQUIRE(r["sets"].size() == 2);
    CHECK(r["sets"][1]["method"] == "kleibergen_oh");
}

TEST_CASE("exit codes") {
    const auto dir = testing::scratch_dir("cli_errors");
    const auto fixture = testing::strong_fixture();
    const auto base = analyze_args(fixture);
    const auto out = (dir / "r.json").string();

    CHECK(run({"--help"}) == 0);
    CHECK(run({}) == 2);
    CHECK(run({"analyze"}) == 2);
    CHECK(run(with(base, {"--alpha", "1.5", "--out", out})) == 2);
    CHECK(run(with(base, {"--methods", "ar,nonsense", "--out", out})) == 2);
    CHECK(run(with(base, {"--grid", "0:1", "--out", out})) == 2);
    CHECK(run(with(base, {"--gamma-min", "0.0001", "--out", out})) == 2);
    CHECK(run({"analyze", "--exposures", "missing.tsv", "--outcome", "y", "--ld", "z", "--exposure-cor", "w", "--nx",
               "10", "--ny", "10"}) == 2);

    // A singular LD matrix is a numerical failure.
    auto broken = fixture;
    broken.ld = dir / "singular_ld.tsv";
    std::string ld = "rs1001\trs1008\trs1015\trs1022\trs1029\trs1036\trs1043\trs1050\n";
    for (int i = 0; i < 8; ++i) ld += "1\t1\t1\t1\t1\t1\t1\t1\n";
    testing::write_file(broken.ld, ld);
    CHECK(run(with(analyze_args(broken), {"--out", out})) == 3);

    CHECK(run({"simulate", "--design", "bogus"}) == 2);
    CHECK(run({"simulate", "--xi", "2", "--reps", "1", "--no-grid"}) == 2);
}

TEST_CASE("simulate output is byte identical across thread counts") {
    const auto dir = testing::scratch_dir("cli_simulate");
    const std::vector<std::string> base{"simulate", "--design", "baseline", "--mu", "5,10", "--xi", "1",
                                        "--reps", "6", "--seed", "11", "--nx", "2000", "--ny", "2000",
                                        "--draws", "20000"};
    auto files = [&](const std::string& tag, const std::string& threads) {
        const auto metrics = dir / (tag + ".csv");
        const auto reps = dir / (tag + "_reps.csv");
        REQUIRE(run(with(base, {"--threads", threads, "--out", metrics.string(), "--per-replicate", reps.string()})) ==
                0);
        return testing::read_file(metrics) + testing::read_file(reps);
    };
    const std::string one = files("one", "1");
    CHECK(one == files("three", "3"));
    CHECK(one.rfind("design,mu,xi,method", 0) == 0);
}

TEST_CASE("simulate screening and selection designs run") {
    const auto dir = testing::scratch_dir("cli_designs");
    const auto scr = dir / "screen.csv";
    CHECK(run({"simulate", "--design", "screening", "--mu", "6", "--reps", "8", "--nx", "2000", "--ny", "2000",
               "--draws", "20000", "--out", scr.string()}) == 0);
    CHECK(testing::read_file(scr).find("coverage_screened") != std::string::npos);

    const auto sel = dir / "select.csv";
    CHECK(run({"simulate", "--design", "selection", "--tau", "0,1", "--reps", "4", "--nx", "2000", "--ny", "2000",
               "--draws", "20000", "--out", sel.string()}) == 0);
    const std::string text = testing::read_file(sel);
    for (const char* policy : {"core", "full", "post_condf", "post_gamma"}) CHECK(text.find(policy) != std::string::npos);
}
