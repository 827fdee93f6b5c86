#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "piston/config.hpp"
#include "piston/io.hpp"

using namespace piston;
using nlohmann::json;

namespace {

const char* kStadium = PISTON_CONFIG_DIR "/stadium2d.json";
const char* kBox3d = PISTON_CONFIG_DIR "/box3d.json";
const char* kEquilibrium = PISTON_CONFIG_DIR "/equilibrium2d.json";

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& cmdline) {
    const std::string full = std::string(PISTON_CLI_PATH) + " " + cmdline + " >/dev/null 2>&1";
    const int rc = std::system(full.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("config files parse into validated structures") {
    const json cfg = load_config_file(kStadium);
    CHECK(config_dimension(cfg) == 2);
    const auto c = build_container<2>(cfg);
    CHECK(c.side_measure(1, 0.5) == doctest::Approx(M_PI / 8 + 0.5).epsilon(1e-14));
    const auto exp = build_experiment<2>(cfg);
    CHECK(exp.eps_grid.size() == 3);
    CHECK(exp.samples == 100);
    CHECK(exp.C1 == 1.0);

    const json cfg3 = load_config_file(kBox3d);
    CHECK(config_dimension(cfg3) == 3);
    const auto c3 = build_container<3>(cfg3);
    const double R = 0.5, h = 0.1;
    const double cap_volume = M_PI * h * h * (3 * R - h) / 3.0;
    CHECK(c3.side_measure(1, 0.5) == doctest::Approx(cap_volume + 0.5).epsilon(1e-12));

    const auto bp = parse_billiard(cfg);
    CHECK(bp.side == 1);
    CHECK(bp.flux_orbits == 32);
}

TEST_CASE("config validation errors carry field paths") {
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_config_file("/nonexistent/nope.json"), ConfigError);
    }
    SUBCASE("malformed JSON") {
        const char* path = "/tmp/piston_bad.json";
        write_text_file(path, "{ not json ");
        CHECK_THROWS_AS(load_config_file(path), ConfigError);
    }
    SUBCASE("wrong tube length") {
        json cfg = load_config_file(kStadium);
        cfg["geometry"]["tube"]["length"] = 2.0;
        CHECK_THROWS_WITH_AS(build_container<2>(cfg),
                             doctest::Contains("geometry.tube.length"), ConfigError);
    }
    SUBCASE("disk cross-sections are rejected with an explanation") {
        json cfg = load_config_file(kBox3d);
        cfg["geometry"]["tube"]["cross_section"] = 1.0;
        CHECK_THROWS_WITH_AS(build_container<3>(cfg), doctest::Contains("rectangular"),
                             ConfigError);
    }
    SUBCASE("eps grid must decrease") {
        json cfg = load_config_file(kStadium);
        cfg["experiment"]["eps_grid"] = {0.1, 0.2};
        CHECK_THROWS_AS(build_experiment<2>(cfg), ConfigError);
    }
    SUBCASE("sample count floor") {
        json cfg = load_config_file(kStadium);
        cfg["experiment"]["samples"] = 3;
        CHECK_THROWS_AS(build_experiment<2>(cfg), ConfigError);
    }
    SUBCASE("initial state must sit inside V") {
        json cfg = load_config_file(kStadium);
        cfg["initial"]["Q"] = 0.95;
        CHECK_THROWS_AS(build_experiment<2>(cfg), ConfigError);
    }
    SUBCASE("unknown piece kind names the path") {
        json cfg = load_config_file(kStadium);
        cfg["geometry"]["left_cap"][0]["kind"] = "spline";
        CHECK_THROWS_WITH_AS(build_container<2>(cfg), doctest::Contains("left_cap"),
                             ConfigError);
    }
}

TEST_CASE("config hash is canonical") {
    const json a = json::parse(R"({"b": 1, "a": [1, 2.5], "c": {"y": true, "x": null}})");
    const json b = json::parse(R"({"c": {"x": null, "y": true}, "a": [1, 2.5], "b": 1})");
    CHECK(config_hash(a) == config_hash(b));  // key order does not matter
    json c = a;
    c["b"] = 2;
    CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("CLI exit codes") {
    CHECK(run_cli("average /nonexistent/nope.json --out /tmp/piston_cli_x") == 2);
    write_text_file("/tmp/piston_broken.json", "{ nope");
    CHECK(run_cli("average /tmp/piston_broken.json --out /tmp/piston_cli_x") == 2);
    CHECK(run_cli(std::string("average ") + kEquilibrium + " --out /tmp/piston_cli_eq") == 0);
}

TEST_CASE("CLI reruns are byte-identical") {
    const std::string base = "/tmp/piston_det";
    REQUIRE(run_cli(std::string("simulate ") + kStadium + " --dump-events --out " + base + "_a") ==
            0);
    REQUIRE(run_cli(std::string("simulate ") + kStadium + " --dump-events --out " + base + "_b") ==
            0);
    CHECK(slurp(base + "_a/trajectory.csv") == slurp(base + "_b/trajectory.csv"));
    CHECK(slurp(base + "_a/events.csv") == slurp(base + "_b/events.csv"));
    CHECK(slurp(base + "_a/summary.json") == slurp(base + "_b/summary.json"));
}

TEST_CASE("CLI average: the Q column oscillates with the analytic period") {
    const std::string out = "/tmp/piston_period";
    // extend the horizon past one full period
    json cfg = load_config_file(kStadium);
    cfg["run"]["T"] = 3.0;
    const std::string tmp_cfg = "/tmp/piston_period_cfg.json";
    write_text_file(tmp_cfg, cfg.dump(2));
    REQUIRE(run_cli("average " + tmp_cfg + " --out " + out) == 0);
    // recover the period from the W column's sign changes
    std::ifstream in(out + "/averaged.csv");
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> tau, w;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::atof(cell.c_str()));
        tau.push_back(row[0]);
        w.push_back(row[2]);
    }
    const json summary = json::parse(slurp(out + "/summary.json"));
    const double period = summary.at("period").get<double>();
    // W starts at 0, rises, and crosses zero again at each half period
    std::vector<double> zeros;
    for (std::size_t i = 1; i < w.size(); ++i) {
        if ((w[i - 1] > 0 && w[i] <= 0) || (w[i - 1] < 0 && w[i] >= 0)) {
            const double f = w[i - 1] / (w[i - 1] - w[i]);
            zeros.push_back(tau[i - 1] + f * (tau[i] - tau[i - 1]));
        }
    }
    REQUIRE(zeros.size() >= 2);
    CHECK(std::fabs(2 * (zeros[1] - zeros[0]) - period) <= 2e-3);  // one grid step
}

TEST_CASE("CLI flag overrides reach the run") {
    const std::string out = "/tmp/piston_flags";
    REQUIRE(run_cli(std::string("simulate ") + kStadium + " --eps 0.1 --seed 555 --horizon 0.25 --out " +
                    out) == 0);
    const json summary = json::parse(slurp(out + "/summary.json"));
    CHECK(summary.at("eps").get<double>() == 0.1);
    CHECK(summary.at("seed").get<std::uint64_t>() == 555);
    CHECK(summary.at("T").get<double>() == 0.25);
}

TEST_CASE("converge reports are identical across worker counts") {
    const std::string a = "/tmp/piston_jobs1", b = "/tmp/piston_jobs2";
    REQUIRE(run_cli(std::string("converge ") + kStadium + " --jobs 1 --out " + a) == 0);
    REQUIRE(run_cli(std::string("converge ") + kStadium + " --jobs 2 --out " + b) == 0);
    CHECK(slurp(a + "/report.json") == slurp(b + "/report.json"));
    CHECK(slurp(a + "/samples.csv") == slurp(b + "/samples.csv"));
}
