// End-to-end checks of the fairjudge binary: exit codes, fixture scoring,
// config-file layering. Everything runs through std::system against the
// built CLI.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fairjudge/records.hpp"

using fairjudge::json;

namespace {

const std::filesystem::path kWorkdir =
    std::filesystem::temp_directory_path() / "fj_cli_tests";

int run_cli(const std::string& args) {
    std::string cmd = std::string(FAIRJUDGE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

struct WorkdirSetup {
    WorkdirSetup() {
        std::filesystem::remove_all(kWorkdir);
        std::filesystem::create_directories(kWorkdir);
    }
};

WorkdirSetup setup;

}  // namespace

TEST_CASE("score-rewards reproduces the committed oracle fixture", "[cli]") {
    auto fixture = std::filesystem::path(FAIRJUDGE_DATA_DIR) / "reward_fixture.jsonl";
    auto expected = std::filesystem::path(FAIRJUDGE_DATA_DIR) / "reward_fixture_expected.jsonl";
    auto out = kWorkdir / "scored.jsonl";
    REQUIRE(run_cli("--seed 1 score-rewards --input " + fixture.string() + " --output " +
                    out.string()) == 0);
    auto got = read_jsonl(out);
    auto want = read_jsonl(expected);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].at("reward") == want[i].at("reward"));
        CHECK(got[i].at("parse_ok") == want[i].at("parse_ok"));
    }
}

TEST_CASE("eval on identical pred/gold files yields agreement 1.0", "[cli]") {
    auto preds = kWorkdir / "identical.jsonl";
    {
        std::ofstream f(preds);
        f << R"({"pred":"A_win","gold":"A_win"})" << '\n'
          << R"({"pred":"tie","gold":"tie"})" << '\n'
          << R"({"pred":"B_win","gold":"B_win"})" << '\n';
    }
    auto out = kWorkdir / "eval.json";
    REQUIRE(run_cli("--seed 1 eval --input " + preds.string() + " --output " + out.string()) == 0);
    std::ifstream in(out);
    json rep;
    in >> rep;
    CHECK(rep.at("agreement").get<double>() == 1.0);
    CHECK(rep.at("f1").at("macro_f1").get<double>() == 1.0);
}

TEST_CASE("CLI exit codes", "[cli]") {
    SECTION("no arguments prints help and exits nonzero") {
        CHECK(run_cli("") != 0);
    }
    SECTION("unknown subcommand is a usage error") {
        CHECK(run_cli("frobnicate") != 0);
    }
    SECTION("missing input file exits with the I/O code") {
        CHECK(run_cli("--seed 1 tag --input /nonexistent.jsonl --output " +
                      (kWorkdir / "x.jsonl").string()) == 3);
    }
}

TEST_CASE("config file supplies defaults and flags override", "[cli]") {
    auto records = kWorkdir / "records.jsonl";
    {
        std::vector<fairjudge::SourceRecord> recs;
        for (int i = 0; i < 40; ++i)
            recs.push_back({"question " + std::to_string(i % 5), "answer one " + std::to_string(i),
                            "answer two " + std::to_string(i), 3 + (i % 7), 3});
        fairjudge::save_records(records, recs);
    }
    auto config = kWorkdir / "config.json";
    {
        std::ofstream f(config);
        f << R"({"seed": 5, "k": 2, "n": 10})" << '\n';
    }
    auto tagged = kWorkdir / "tagged.jsonl";
    auto sampled = kWorkdir / "sampled.jsonl";
    REQUIRE(run_cli("--config " + config.string() + " tag --input " + records.string() +
                    " --output " + tagged.string()) == 0);
    REQUIRE(run_cli("--config " + config.string() + " sample --input " + tagged.string() +
                    " --output " + sampled.string()) == 0);
    CHECK(read_jsonl(sampled).size() == 10);  // n from config

    REQUIRE(run_cli("--config " + config.string() + " sample --input " + tagged.string() +
                    " --output " + sampled.string() + " --n 7") == 0);
    CHECK(read_jsonl(sampled).size() == 7);  // flag wins over config

    // The manifest records the resolved configuration.
    std::ifstream mf(sampled.string() + ".manifest.json");
    json manifest;
    mf >> manifest;
    CHECK(manifest.at("config").at("n").get<int>() == 7);
    CHECK(manifest.at("config").at("seed").get<int>() == 5);
    CHECK(manifest.at("inputs").size() == 1);
}
