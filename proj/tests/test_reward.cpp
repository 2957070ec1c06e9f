#include <catch2/catch_amalgamated.hpp>

#include "fairjudge/reward.hpp"
#include "fairjudge/rng.hpp"
#include "reward_oracle.hpp"

#include <sstream>

using namespace fairjudge;

TEST_CASE("consistent_predicate", "[reward]") {
    CHECK(consistent_predicate(JudgmentLabel::AWin, 8, 5));
    CHECK(consistent_predicate(JudgmentLabel::Tie, 4, 4));
    CHECK_FALSE(consistent_predicate(JudgmentLabel::BWin, 8, 5));

    SECTION("brute force over the full grid") {
        for (int g1 = 1; g1 <= 10; ++g1) {
            for (int g2 = 1; g2 <= 10; ++g2) {
                CHECK(consistent_predicate(JudgmentLabel::AWin, g1, g2) == (g1 > g2));
                CHECK(consistent_predicate(JudgmentLabel::BWin, g1, g2) == (g2 > g1));
                CHECK(consistent_predicate(JudgmentLabel::Tie, g1, g2) == (g1 == g2));
            }
        }
    }
}

TEST_CASE("consistency_reward per task type", "[reward]") {
    SECTION("pp examples") {
        auto r = consistency_reward("### Judgement\nA_win", TaskType::PairwisePreference, 8, 5);
        CHECK(r.value == 2.0);
        CHECK(r.parse_ok);
        r = consistency_reward("gibberish \xC2\xA7\xC2\xA7", TaskType::PairwisePreference, 8, 5);
        CHECK(r.value == 0.0);
        CHECK_FALSE(r.parse_ok);
    }

    SECTION("sp_point linear decay") {
        CHECK(consistency_reward("7", TaskType::ScalarPoint, 7).value == 2.0);
        CHECK(consistency_reward("5", TaskType::ScalarPoint, 7).value == 0.0);
        CHECK(consistency_reward("6", TaskType::ScalarPoint, 7).value == 1.0);
        // Table of all (g1, v) pairs against the decay formula.
        for (int g1 = 1; g1 <= 10; ++g1) {
            for (int v = -5; v <= 15; ++v) {
                double expected = std::max(0.0, 2.0 - std::abs(g1 - v));
                CHECK(consistency_reward(std::to_string(v), TaskType::ScalarPoint, g1).value ==
                      expected);
            }
        }
        auto fail = consistency_reward("no digits", TaskType::ScalarPoint, 7);
        CHECK(fail.value == 0.0);
        CHECK_FALSE(fail.parse_ok);
    }

    SECTION("sp_pair exact match trims whitespace") {
        CHECK(consistency_reward("A_win\n", TaskType::ExactPair, std::string("A_win")).value ==
              2.0);
        CHECK(consistency_reward("A_win", TaskType::ExactPair, std::string("B_win")).value == 0.0);
        CHECK(consistency_reward("a_win", TaskType::ExactPair, std::string("A_win")).value == 0.0);
    }

    SECTION("usage errors are distinct from zero rewards") {
        CHECK_THROWS_AS(consistency_reward("x", TaskType::PairwisePreference, 8), // missing g2
                        std::invalid_argument);
        CHECK_THROWS_AS(consistency_reward("x", TaskType::PairwisePreference, std::string("y"), 5),
                        std::invalid_argument);
        CHECK_THROWS_AS(consistency_reward("x", TaskType::ExactPair, 3), std::invalid_argument);
    }
}

TEST_CASE("reward is bounded in [0,2] on arbitrary input", "[reward]") {
    Rng rng(99);
    const TaskType types[] = {TaskType::PairwisePreference, TaskType::ScalarPoint,
                              TaskType::ExactPair};
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        std::size_t len = rng.next_below(120);
        for (std::size_t k = 0; k < len; ++k) s.push_back(static_cast<char>(rng.next_below(256)));
        TaskType t = types[rng.next_below(3)];
        GroundTruth g1 =
            t == TaskType::ExactPair ? GroundTruth(std::string("tie")) : GroundTruth(rng.next_int(1, 10));
        auto r = consistency_reward(s, t, g1, rng.next_int(1, 10));
        CHECK(r.value >= 0.0);
        CHECK(r.value <= 2.0);
        if (!r.parse_ok) CHECK(r.value == 0.0);
    }
}

TEST_CASE("pp reward is antisymmetric-consistent", "[reward]") {
    for (int g1 = 1; g1 <= 10; ++g1) {
        for (int g2 = 1; g2 <= 10; ++g2) {
            for (JudgmentLabel lab :
                 {JudgmentLabel::AWin, JudgmentLabel::BWin, JudgmentLabel::Tie}) {
                double direct =
                    consistency_reward(render_judgment(lab), TaskType::PairwisePreference, g1, g2)
                        .value;
                double mirrored = consistency_reward(render_judgment(swap_label(lab)),
                                                     TaskType::PairwisePreference, g2, g1)
                                      .value;
                CHECK(direct == mirrored);
            }
        }
    }
}

TEST_CASE("reward matches the brute-force oracle on structured inputs", "[reward]") {
    Rng rng(424242);
    const char* labels[] = {"A_win", "B_win", "tie"};
    for (int i = 0; i < 400; ++i) {
        // Structured random completion: shuffled headers, tokens, noise.
        std::string c;
        int blocks = rng.next_int(1, 4);
        for (int b = 0; b < blocks; ++b) {
            switch (rng.next_below(5)) {
                case 0: c += "### Judgement\n"; break;
                case 1: c += "Reasoning: because\n"; break;
                case 2: c += std::string(labels[rng.next_below(3)]) + "\n"; break;
                case 3: c += std::to_string(rng.next_int(-3, 14)) + "\n"; break;
                default: c += "noise text here\n"; break;
            }
        }
        int g1 = rng.next_int(1, 10);
        int g2 = rng.next_int(1, 10);

        auto lib_pp = consistency_reward(c, TaskType::PairwisePreference, g1, g2);
        auto ora_pp = reward_oracle::pp_reward(c, g1, g2, false, true);
        CHECK(lib_pp.value == ora_pp.reward);
        CHECK(lib_pp.parse_ok == ora_pp.parse_ok);

        auto lib_sp = consistency_reward(c, TaskType::ScalarPoint, g1);
        auto ora_sp = reward_oracle::sp_point_reward(c, g1, false);
        CHECK(lib_sp.value == ora_sp.reward);
        CHECK(lib_sp.parse_ok == ora_sp.parse_ok);

        std::string ref = labels[rng.next_below(3)];
        auto lib_ex = consistency_reward(c, TaskType::ExactPair, ref);
        auto ora_ex = reward_oracle::sp_pair_reward(c, ref);
        CHECK(lib_ex.value == ora_ex.reward);
    }
}

TEST_CASE("batch JSONL scoring adds reward and parse_ok", "[reward]") {
    std::istringstream in(
        R"({"completion":"### Judgement\nA_win","task_type":"pp","g1":8,"g2":5})"
        "\n"
        R"({"completion":"6","task_type":"sp_point","g1":7})"
        "\n"
        R"({"completion":"tie","task_type":"sp_pair","g1":"tie"})"
        "\n");
    std::ostringstream out;
    CHECK(score_rewards_jsonl(in, out) == 3);
    std::istringstream parse(out.str());
    std::string line;
    std::vector<double> rewards;
    while (std::getline(parse, line)) rewards.push_back(json::parse(line).at("reward").get<double>());
    CHECK(rewards == std::vector<double>{2.0, 1.0, 2.0});
}
