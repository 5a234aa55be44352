#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hsconv/cli.hpp"

using namespace hsconv;
using Catch::Matchers::ContainsSubstring;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "hsconv");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("hsconv_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("analyze prints the closed form and the defaults in use") {
    const auto r = run({"analyze"});
    CHECK(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("1000.00"));
    CHECK_THAT(r.out, ContainsSubstring("rds_on=7.500 mOhm"));
    CHECK_THAT(r.out, ContainsSubstring("step_per_period=2000"));
    CHECK_THAT(r.out, ContainsSubstring(kFlagTableGain));
}

TEST_CASE("bad input exits with the validation code") {
    CHECK(run({"analyze", "--duty", "1.2"}).code == cli::validation);
    CHECK(run({"analyze", "--mode", "loose"}).code == cli::validation);
    CHECK(run({"simulate", "--duty", "0.4"}).code == cli::validation);
    CHECK(run({"frobnicate"}).code == cli::validation);
    CHECK(run({"analyze", "--esr", "-1"}).code == cli::validation);
    CHECK(run({"compare", "--d", "1.0"}).code == cli::validation);
}

TEST_CASE("simulate without a steady state exits with the non-convergence code") {
    const auto r = run({"simulate", "--max-periods", "1", "--no-md"});
    CHECK(r.code == cli::nonconvergence);
    CHECK_THAT(r.err, ContainsSubstring("no periodic steady state"));
}

TEST_CASE("compare emits markdown or CSV") {
    const auto md = run({"compare", "--n", "1.5", "--d", "0.4"});
    CHECK(md.code == 0);
    CHECK_THAT(md.out, ContainsSubstring("common input voltage"));
    const auto csv = run({"compare", "--csv"});
    CHECK(csv.code == 0);
    CHECK(parse_compare_csv(csv.out).size() == 5);
}

TEST_CASE("design reports infeasible targets without failing") {
    const auto r = run({"design", "--vin", "30", "--vout", "100", "--candidates", "1", "2"});
    CHECK(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("no feasible design"));
    const auto ok = run({"design", "--candidates", "1", "1.5", "2", "3", "--score", "loss"});
    CHECK(ok.code == 0);
    CHECK_THAT(ok.out, ContainsSubstring("| 1 |"));
}

TEST_CASE("audit prints both formula modes") {
    const auto r = run({"audit"});
    CHECK(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("22.222 %"));
}

TEST_CASE("config files overlay presets and reject unknown keys") {
    const auto dir = scratch("cfg");
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "good.json") << R"({"preset": "prototype", "design": {"duty": 0.7}, "emit": {"svg": false}})";
        std::ofstream(dir / "bad.json") << R"({"design": {"duty": 0.7}, "colour": "red"})";
    }
    const auto good = run({"analyze", "--config", (dir / "good.json").string()});
    CHECK(good.code == 0);
    CHECK_THAT(good.out, ContainsSubstring("duty=0.7000"));
    CHECK_THAT(good.out, ContainsSubstring("cap=1.000 uF"));
    const auto bad = run({"analyze", "--config", (dir / "bad.json").string()});
    CHECK(bad.code == cli::validation);
    CHECK_THAT(bad.err, ContainsSubstring("colour"));
    // explicit flags win over the file
    const auto over = run({"analyze", "--config", (dir / "good.json").string(), "--duty", "0.75"});
    CHECK_THAT(over.out, ContainsSubstring("duty=0.7500"));
}

TEST_CASE("simulate a netlist file and write artifacts") {
    const auto dir = scratch("net");
    const auto r = run({"simulate", "--netlist", HSCONV_EXAMPLES_DIR "/boost.net", "--steps-per-period", "200", "--out",
                        dir.string()});
    CHECK(r.code == 0);
    CHECK(std::filesystem::exists(dir / "waves.csv"));
    CHECK(std::filesystem::exists(dir / "report.md"));
    CHECK_THAT(r.out, ContainsSubstring("v(out)"));

    const auto fixed = run({"simulate", "--netlist", HSCONV_EXAMPLES_DIR "/boost.net", "--t-end", "1e-4", "--dt", "1e-7",
                            "--no-csv", "--no-md"});
    CHECK(fixed.code == 0);
    CHECK(run({"simulate", "--netlist", "/nonexistent.net"}).code == cli::validation);
}

TEST_CASE("sweep with unconverged points exits with the partial code") {
    const auto dir = scratch("sweep");
    const auto r = run({"sweep", "--loads", "2000", "--max-periods", "2", "--out", dir.string()});
    CHECK(r.code == cli::partial_sweep);
    CHECK(std::filesystem::exists(dir / "efficiency.csv"));
    CHECK_THAT(r.out, ContainsSubstring("cap=1.000 uF"));  // sweep defaults to the prototype preset
}
