#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fairjudge/pipeline.hpp"
#include "fairjudge/reward.hpp"
#include "fairjudge/rng.hpp"

using namespace fairjudge;
using Catch::Matchers::WithinAbs;

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
}

}  // namespace

TEST_CASE("embed_text", "[pipeline]") {
    auto a = embed_text("How do neural networks learn from data?");
    auto b = embed_text("How do neural networks learn from data?");
    CHECK(a.values == b.values);
    CHECK_FALSE(a.degenerate);
    CHECK_THAT(cosine(a.values, a.values), WithinAbs(1.0, 1e-12));

    auto empty = embed_text("");
    CHECK(empty.degenerate);
    for (double v : empty.values) CHECK(v == 0.0);

    auto unrelated = embed_text("Bake the cake at 180 degrees for forty minutes.");
    CHECK(cosine(a.values, unrelated.values) < 0.999);
}

TEST_CASE("embedding sidecar", "[pipeline]") {
    auto path = std::filesystem::temp_directory_path() / "fj_sidecar.jsonl";
    {
        std::ofstream out(path);
        out << "[1.0, 0.0]\n[0.0, 1.0]\n";
    }
    auto vectors = load_embedding_sidecar(path, 2);
    CHECK(vectors.size() == 2);
    CHECK_THROWS_AS(load_embedding_sidecar(path, 3), std::runtime_error);
    {
        std::ofstream out(path);
        out << "[1.0, 0.0]\n[0.5]\n";
    }
    CHECK_THROWS_AS(load_embedding_sidecar(path, 2), std::runtime_error);
}

TEST_CASE("kmeans", "[pipeline]") {
    SECTION("k=1 yields the mean centroid") {
        std::vector<std::vector<double>> pts{{0, 0}, {2, 0}, {0, 2}, {2, 2}};
        auto res = kmeans(pts, 1, 0);
        for (int a : res.assignments) CHECK(a == 0);
        CHECK_THAT(res.centroids[0][0], WithinAbs(1.0, 1e-12));
        CHECK_THAT(res.centroids[0][1], WithinAbs(1.0, 1e-12));
    }

    SECTION("two well-separated clouds split exactly") {
        Rng rng(3);
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 40; ++i)
            pts.push_back({rng.next_double() - 0.5, rng.next_double() - 0.5});
        for (int i = 0; i < 40; ++i)
            pts.push_back({100.0 + rng.next_double() - 0.5, 100.0 + rng.next_double() - 0.5});
        auto res = kmeans(pts, 2, 7);
        for (int i = 1; i < 40; ++i) CHECK(res.assignments[i] == res.assignments[0]);
        for (int i = 41; i < 80; ++i) CHECK(res.assignments[i] == res.assignments[40]);
        CHECK(res.assignments[0] != res.assignments[40]);
    }

    SECTION("k=n gives zero inertia") {
        std::vector<std::vector<double>> pts{{0, 0}, {5, 0}, {0, 5}};
        auto res = kmeans(pts, 3, 11);
        CHECK_THAT(res.inertia, WithinAbs(0.0, 1e-18));
    }

    SECTION("k greater than n is a usage error") {
        std::vector<std::vector<double>> pts{{0, 0}};
        CHECK_THROWS_AS(kmeans(pts, 2, 0), std::invalid_argument);
    }

    SECTION("inertia is non-increasing across Lloyd iterations") {
        Rng rng(55);
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 120; ++i)
            pts.push_back({rng.next_double() * 10, rng.next_double() * 10, rng.next_double() * 10});
        double prev = std::numeric_limits<double>::infinity();
        for (int iters = 1; iters <= 8; ++iters) {
            auto res = kmeans(pts, 5, 99, iters);
            CHECK(res.inertia <= prev + 1e-9);
            prev = res.inertia;
        }
    }

    SECTION("fixed seed reproduces assignments") {
        Rng rng(66);
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 50; ++i) pts.push_back({rng.next_double(), rng.next_double()});
        auto r1 = kmeans(pts, 4, 123);
        auto r2 = kmeans(pts, 4, 123);
        CHECK(r1.assignments == r2.assignments);
        CHECK(r1.inertia == r2.inertia);
    }
}

TEST_CASE("stratified_sample", "[pipeline]") {
    SECTION("single stratum draws uniformly") {
        std::vector<TagLabels> tags(20, TagLabels{Winner::AWin, Difficulty::Easy, 0});
        auto sel = stratified_sample(tags, 5, 1);
        CHECK(sel.size() == 5);
    }

    SECTION("both_bad never selected") {
        Rng rng(12);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<TagLabels> tags;
            for (int i = 0; i < 60; ++i) {
                TagLabels t;
                t.cluster_id = rng.next_int(0, 2);
                t.difficulty = static_cast<Difficulty>(rng.next_below(3));
                t.winner = static_cast<Winner>(rng.next_below(4));  // includes BothBad
                tags.push_back(t);
            }
            bool any_good = false;
            for (const auto& t : tags) any_good = any_good || t.winner != Winner::BothBad;
            if (!any_good) continue;
            auto sel = stratified_sample(tags, 30, trial);
            for (std::size_t idx : sel) CHECK(tags[idx].winner != Winner::BothBad);
        }
    }

    SECTION("largest-remainder apportionment with caps") {
        // Strata sized {10, 10, 1}; N=6 -> base quotas {2,2,1} plus one top-up.
        std::vector<TagLabels> tags;
        for (int i = 0; i < 10; ++i) tags.push_back({Winner::AWin, Difficulty::Easy, 0});
        for (int i = 0; i < 10; ++i) tags.push_back({Winner::BWin, Difficulty::Easy, 0});
        tags.push_back({Winner::Tie, Difficulty::Hard, 0});
        SampleReport rep;
        auto sel = stratified_sample(tags, 6, 9, &rep);
        CHECK(sel.size() == 6);
        std::vector<std::size_t> quotas;
        for (const auto& [key, stat] : rep.strata) {
            quotas.push_back(stat.quota);
            CHECK(stat.quota <= stat.available);
        }
        std::sort(quotas.begin(), quotas.end());
        CHECK(quotas == std::vector<std::size_t>{1, 2, 3});
    }

    SECTION("deterministic under seed") {
        std::vector<TagLabels> tags;
        Rng rng(77);
        for (int i = 0; i < 200; ++i)
            tags.push_back({static_cast<Winner>(rng.next_below(3)),
                            static_cast<Difficulty>(rng.next_below(3)),
                            static_cast<int>(rng.next_below(4))});
        CHECK(stratified_sample(tags, 50, 42) == stratified_sample(tags, 50, 42));
        CHECK(stratified_sample(tags, 50, 42) != stratified_sample(tags, 50, 43));
    }

    SECTION("all both_bad is an error") {
        std::vector<TagLabels> tags(5, TagLabels{Winner::BothBad, Difficulty::Hard, 0});
        CHECK_THROWS_AS(stratified_sample(tags, 3, 0), std::invalid_argument);
    }
}

TEST_CASE("make_dpo_pairs", "[pipeline]") {
    EvaluationInstance inst;
    inst.id = "t1";
    inst.task = "compare answers";
    inst.answer_a = "Concise and correct explanation.";
    inst.answer_b = "Rambling, partially wrong answer that goes on.";
    inst.mode = Mode::Pairwise;
    inst.gold = JudgmentLabel::AWin;
    const std::set<Perturbation> all_kinds{Perturbation::OrderSwap, Perturbation::LengthPad,
                                           Perturbation::FormatChange};

    SECTION("order swap flips content and position labels") {
        auto res = make_dpo_pairs(inst, {Perturbation::OrderSwap}, 5);
        REQUIRE(res.pairs.size() == 1);
        const auto& pair = res.pairs[0];
        CHECK(pair.input.answer_a == inst.answer_b);
        CHECK(pair.input.answer_b == inst.answer_a);
        CHECK(*extract_judgment(pair.chosen).label == JudgmentLabel::BWin);
        CHECK(*extract_judgment(pair.rejected).label == JudgmentLabel::AWin);
        CHECK(*pair.input.gold_label() == JudgmentLabel::BWin);
    }

    SECTION("length pad keeps semantics and the gold label") {
        auto res = make_dpo_pairs(inst, {Perturbation::LengthPad}, 5);
        REQUIRE(res.pairs.size() == 1);
        const auto& pair = res.pairs[0];
        CHECK(pair.input.answer_b.size() > inst.answer_b.size());
        CHECK(pair.input.answer_b.substr(0, inst.answer_b.size()) == inst.answer_b);
        CHECK(*extract_judgment(pair.chosen).label == JudgmentLabel::AWin);
        CHECK(*extract_judgment(pair.rejected).label == JudgmentLabel::BWin);
    }

    SECTION("every pair has distinct completions and a gold-consistent chosen") {
        Rng rng(31);
        for (int trial = 0; trial < 40; ++trial) {
            EvaluationInstance x = inst;
            x.id = "t" + std::to_string(trial);
            x.gold = static_cast<JudgmentLabel>(rng.next_below(3));
            auto res = make_dpo_pairs(x, all_kinds, trial);
            for (const auto& pair : res.pairs) {
                CHECK(pair.chosen != pair.rejected);
                auto chosen = extract_judgment(pair.chosen);
                REQUIRE(chosen.ok());
                CHECK(*chosen.label == *pair.input.gold_label());
            }
        }
    }

    SECTION("tie gold skips order swap with a report") {
        EvaluationInstance tie = inst;
        tie.gold = JudgmentLabel::Tie;
        auto res = make_dpo_pairs(tie, all_kinds, 5);
        CHECK(res.pairs.size() == 2);
        CHECK(res.skipped.size() == 1);
    }

    SECTION("empty kinds yields empty list") {
        CHECK(make_dpo_pairs(inst, {}, 5).pairs.empty());
    }

    SECTION("pointwise instance is a usage error") {
        EvaluationInstance pw = inst;
        pw.mode = Mode::Pointwise;
        pw.gold = PointGold{5, std::nullopt};
        CHECK_THROWS_AS(make_dpo_pairs(pw, all_kinds, 5), std::invalid_argument);
    }

    SECTION("pair JSON round trip") {
        auto res = make_dpo_pairs(inst, all_kinds, 5);
        for (const auto& pair : res.pairs) {
            PreferencePair back = preference_pair_from_json(preference_pair_to_json(pair));
            CHECK(back.chosen == pair.chosen);
            CHECK(back.rejected == pair.rejected);
            CHECK(back.perturbation == pair.perturbation);
            CHECK(back.input.answer_a == pair.input.answer_a);
        }
    }
}

TEST_CASE("make_crossmode_pair", "[pipeline]") {
    SourceRecord rec{"why is the sky blue?", "Rayleigh scattering.", "Magic.", 8, 5};

    SECTION("scores map to pointwise golds and the derived pairwise label") {
        auto pair = make_crossmode_pair(rec, "cm-0");
        REQUIRE(pair.has_value());
        CHECK(pair->pointwise_a.gold_scores()->score_a == 8);
        CHECK(pair->pointwise_b.gold_scores()->score_a == 5);
        CHECK(*pair->pairwise.gold_label() == JudgmentLabel::AWin);
        CHECK(pair->pointwise_a.answer_a == rec.answer_a);
        CHECK(pair->pointwise_b.answer_a == rec.answer_b);
        CHECK(pair->pairwise.answer_a == rec.answer_a);
        CHECK(pair->pairwise.answer_b == rec.answer_b);
    }

    SECTION("equal scores give a tie") {
        rec.score_a = rec.score_b = 4;
        auto pair = make_crossmode_pair(rec, "cm-1");
        REQUIRE(pair.has_value());
        CHECK(*pair->pairwise.gold_label() == JudgmentLabel::Tie);
    }

    SECTION("both_bad records are skipped") {
        rec.score_a = 2;
        rec.score_b = 1;
        CHECK_FALSE(make_crossmode_pair(rec, "cm-2").has_value());
    }

    SECTION("gold triple always satisfies the consistency predicate") {
        for (int a = 1; a <= 10; ++a) {
            for (int b = 1; b <= 10; ++b) {
                rec.score_a = a;
                rec.score_b = b;
                auto pair = make_crossmode_pair(rec, "cm-x");
                if (!pair) continue;
                CHECK(consistent_predicate(*pair->pairwise.gold_label(),
                                           pair->pointwise_a.gold_scores()->score_a,
                                           pair->pointwise_b.gold_scores()->score_a));
            }
        }
    }
}
