#include <gtest/gtest.h>

#include <random>
#include <set>

#include "ragalign/composer.hpp"
#include "ragalign/errors.hpp"
#include "support.hpp"

using namespace ragalign;
using testing_support::TempDir;

namespace {

ScoredCompletion sc(const std::string& ref, int acc, int llm, double rouge = 0.0, double bert = 0.0) {
    return {ref, make_metrics(acc, llm, rouge, bert)};
}

std::set<std::pair<std::string, std::string>> edges(const std::vector<FeedbackPair>& pairs) {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& p : pairs) out.insert({p.chosen, p.rejected});
    return out;
}

std::vector<ScoredCompletion> random_set(std::mt19937_64& rng, std::size_t n) {
    std::bernoulli_distribution bit(0.5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<ScoredCompletion> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(sc("g" + std::to_string(i), bit(rng), bit(rng), unit(rng), unit(rng)));
    return out;
}

}  // namespace

TEST(IsChosen, InclusionSum) {
    EXPECT_TRUE(is_chosen(make_metrics(1, 0, 0, 0)));
    EXPECT_FALSE(is_chosen(make_metrics(0, 0, 1, 1)));
    EXPECT_TRUE(is_chosen(make_metrics(1, 1, 0, 0)));
    MetricVector unset;
    unset.acc = 1;
    EXPECT_THROW(is_chosen(unset), ComposerError);
}

TEST(Rule1, Examples) {
    auto one = compose_pairs_rule1("x", {sc("i", 1, 1), sc("j", 0, 0)});
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].chosen, "i");
    EXPECT_EQ(one[0].rejected, "j");
    EXPECT_EQ(one[0].rule, Rule::R1);
    EXPECT_EQ(one[0].inclusion_gap, 2);

    EXPECT_TRUE(compose_pairs_rule1("x", {sc("i", 1, 0), sc("j", 0, 1)}).empty());
    EXPECT_TRUE(compose_pairs_rule1("x", {sc("a", 0, 0), sc("b", 0, 0), sc("c", 0, 0)}).empty());
}

TEST(Rule1, ChosenVersusWeakerChosen) {
    auto pairs = compose_pairs_rule1("x", {sc("i", 1, 1), sc("j", 1, 0)});
    ASSERT_EQ(pairs.size(), 1u);
    EXPECT_EQ(pairs[0].chosen, "i");
}

TEST(Rule2, Examples) {
    ComposerConfig cfg;
    auto tie = compose_pairs_rule2("x", {sc("i", 1, 1, 0.8, 0.9), sc("j", 1, 1, 0.6, 0.7)}, cfg);
    ASSERT_EQ(tie.size(), 1u);
    EXPECT_EQ(tie[0].chosen, "i");
    EXPECT_EQ(tie[0].inclusion_gap, 0);
    ASSERT_TRUE(tie[0].similarity_gap);
    EXPECT_NEAR(*tie[0].similarity_gap, 0.4, 1e-12);

    EXPECT_TRUE(compose_pairs_rule2("x", {sc("i", 1, 1, 0.8, 0.7), sc("j", 1, 1, 0.6, 0.7)}, cfg).empty());

    auto inclusion = compose_pairs_rule2("x", {sc("i", 1, 1, 0.1, 0.1), sc("j", 1, 0, 0.9, 0.9)}, cfg);
    ASSERT_EQ(inclusion.size(), 1u);
    EXPECT_EQ(inclusion[0].chosen, "i");
    EXPECT_FALSE(inclusion[0].similarity_gap);

    EXPECT_TRUE(compose_pairs_rule2("x", {sc("i", 0, 0, 0.9, 0.9), sc("j", 0, 0, 0.1, 0.1)}, cfg).empty());
}

TEST(Rule2, TieNeedsBothInclusionFieldsEqual) {
    ComposerConfig cfg;
    // Equal sums but different fields: no tie pair and no inclusion pair.
    EXPECT_TRUE(compose_pairs_rule2("x", {sc("i", 1, 0, 1.0, 1.0), sc("j", 0, 1, 0.0, 0.0)}, cfg).empty());
}

TEST(Rules, PropertiesOnRandomSets) {
    std::mt19937_64 rng(41);
    ComposerConfig cfg;
    for (int trial = 0; trial < 300; ++trial) {
        auto set = random_set(rng, 8);
        const auto r1 = edges(compose_pairs_rule1("x", set));
        const auto r2 = edges(compose_pairs_rule2("x", set, cfg));
        for (const auto& e : r1) EXPECT_TRUE(r2.count(e));
        for (const auto& [a, b] : r2) EXPECT_FALSE(r2.count({b, a}));
        std::size_t previous = r2.size();
        for (double eps : {0.35, 0.5, 0.8, 1.2}) {
            ComposerConfig wider;
            wider.epsilon = eps;
            const auto n = compose_pairs_rule2("x", set, wider).size();
            EXPECT_LE(n, previous);
            previous = n;
        }
        for (const auto& p : compose_pairs_rule2("x", set, cfg)) {
            const auto& c = *std::find_if(set.begin(), set.end(), [&](auto& s) { return s.ref == p.chosen; });
            const auto& r = *std::find_if(set.begin(), set.end(), [&](auto& s) { return s.ref == p.rejected; });
            EXPECT_TRUE(pair_satisfies(Rule::R2, c.metrics, r.metrics, cfg.epsilon));
        }
    }
}

TEST(Rules, OutputIsSorted) {
    std::mt19937_64 rng(2);
    auto set = random_set(rng, 8);
    std::shuffle(set.begin(), set.end(), rng);
    auto pairs = compose_pairs_rule2("x", set, {});
    for (std::size_t i = 1; i < pairs.size(); ++i)
        EXPECT_LT(std::make_pair(pairs[i - 1].chosen, pairs[i - 1].rejected),
                  std::make_pair(pairs[i].chosen, pairs[i].rejected));
}

TEST(Rules, DuplicateRefsRejected) {
    EXPECT_THROW(compose_pairs_rule1("x", {sc("a", 1, 1), sc("a", 0, 0)}), ComposerError);
}

TEST(ComposePairs, SkipsUnscoredAndCaps) {
    std::vector<ScoredCompletion> set{sc("a", 1, 1, 0.9, 0.9), sc("b", 1, 0, 0.1, 0.1), sc("c", 0, 0), sc("d", 1, 1, 0.1, 0.1)};
    MetricVector partial;
    partial.acc = 1;
    partial.rouge_l = 0.5;
    partial.bert = 0.5;
    set.push_back({"e", partial});
    ComposerConfig cfg;
    auto all = compose_pairs("x", set, cfg);
    EXPECT_EQ(all.skipped, std::vector<std::string>{"e"});
    cfg.max_pairs_per_input = 2;
    auto capped = compose_pairs("x", set, cfg);
    ASSERT_EQ(capped.pairs.size(), 2u);
    for (const auto& p : capped.pairs) EXPECT_EQ(p.inclusion_gap, 2);
    EXPECT_EQ(edges(capped.pairs), (std::set<std::pair<std::string, std::string>>{{"a", "c"}, {"d", "c"}}));
}

TEST(ComposerConfig, Validation) {
    ComposerConfig cfg;
    cfg.epsilon = -0.1;
    EXPECT_THROW(cfg.validate(), ArgumentError);
    cfg.epsilon = 0.3;
    cfg.max_pairs_per_input = 0;
    EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(Kto, ChosenDominates) {
    EXPECT_TRUE(to_kto({}).empty());
    auto one = to_kto({FeedbackPair{"x", "a", "b"}});
    EXPECT_EQ(one, (std::vector<BinaryExample>{{"x", "a", 1}, {"x", "b", 0}}));
    auto chain = to_kto({FeedbackPair{"x", "a", "b"}, FeedbackPair{"x", "b", "c"}});
    EXPECT_EQ(chain, (std::vector<BinaryExample>{{"x", "a", 1}, {"x", "b", 1}, {"x", "c", 0}}));
    auto two_inputs = to_kto({FeedbackPair{"y", "a", "b"}, FeedbackPair{"x", "b", "a"}});
    EXPECT_EQ(two_inputs.size(), 4u);
}

TEST(Sft, Selection) {
    EXPECT_EQ(select_sft_reference({sc("a", 1, 1, 0.5, 0.9), sc("b", 1, 1, 0.9, 0.9)}, SftCriterion::best_avg), "b");
    EXPECT_EQ(select_sft_reference({sc("a", 1, 0, 0.1, 0.1), sc("b", 0, 1, 0.9, 0.9)}, SftCriterion::acc), "a");
    EXPECT_EQ(select_sft_reference({sc("solo", 0, 0)}, SftCriterion::rouge), "solo");
    EXPECT_EQ(select_sft_reference({sc("b", 1, 1, 0.5, 0.5), sc("a", 1, 1, 0.5, 0.5)}, SftCriterion::bert), "a");
    EXPECT_EQ(select_sft_reference({sc("a", 1, 1, 0.2, 0.5), sc("b", 1, 1, 0.9, 0.5)}, SftCriterion::bert), "b");
    EXPECT_THROW(select_sft_reference({}, SftCriterion::best_avg), ComposerError);
}

namespace {

CompletionTable table_for(const std::vector<ScoredCompletion>& set) {
    CompletionTable t;
    for (const auto& c : set) t[{"x", c.ref}] = CompletionEntry{"PROMPT", "Extracted Sentences:\n\nAnswer: " + c.ref, c.metrics};
    return t;
}

}  // namespace

TEST(Emit, OnePairOneLine) {
    TempDir dir;
    std::vector<ScoredCompletion> set{sc("a", 1, 1), sc("b", 0, 0)};
    auto pairs = compose_pairs_rule1("x", set);
    auto records = emit_dpo_pairs(pairs, table_for(set), kDefaultEpsilon, dir / "dpo.jsonl");
    auto lines = read_jsonl(dir / "dpo.jsonl");
    ASSERT_EQ(lines.size(), 1u);
    for (const char* key : {"prompt", "chosen", "rejected"}) {
        ASSERT_TRUE(lines[0][key].is_string());
        EXPECT_FALSE(lines[0][key].get<std::string>().empty());
    }
    EXPECT_EQ(read_dpo_pairs(dir / "dpo.jsonl"), records);
}

TEST(Emit, CorruptedChosenRaisesWithIndex) {
    TempDir dir;
    std::vector<ScoredCompletion> set{sc("a", 1, 1), sc("b", 0, 0), sc("c", 0, 0)};
    std::vector<FeedbackPair> pairs{FeedbackPair{"x", "a", "b"}, FeedbackPair{"x", "c", "b"}};
    try {
        emit_dpo_pairs(pairs, table_for(set), kDefaultEpsilon, dir / "dpo.jsonl");
        FAIL();
    } catch (const EmitError& e) {
        EXPECT_EQ(e.index(), 1u);
    }
    EXPECT_FALSE(std::filesystem::exists(dir / "dpo.jsonl"));
    EXPECT_THROW(emit_dpo_pairs({FeedbackPair{"x", "a", "a"}}, table_for(set), 0.3, dir / "d.jsonl"), EmitError);
    EXPECT_THROW(emit_dpo_pairs({FeedbackPair{"x", "a", "zz"}}, table_for(set), 0.3, dir / "d.jsonl"), EmitError);
}

TEST(Emit, KtoAndSftRoundTrip) {
    TempDir dir;
    std::vector<ScoredCompletion> set{sc("a", 1, 1), sc("b", 0, 0)};
    auto table = table_for(set);
    auto kto = emit_kto_binary(to_kto(compose_pairs_rule1("x", set)), table, dir / "kto.jsonl");
    EXPECT_EQ(read_kto_binary(dir / "kto.jsonl"), kto);
    EXPECT_EQ(kto.size(), 2u);
    auto sft = emit_sft({SftChoice{"x", "a"}}, table, dir / "sft.jsonl");
    EXPECT_EQ(read_sft(dir / "sft.jsonl"), sft);
    EXPECT_THROW(emit_kto_binary({{"x", "a", 2}}, table, dir / "k.jsonl"), EmitError);
    EXPECT_THROW(emit_kto_binary({{"x", "a", 1}, {"x", "a", 1}}, table, dir / "k.jsonl"), EmitError);
}

TEST(Emit, PairJsonRoundTrip) {
    FeedbackPair p{"x", "a", "b", Rule::R2, 0, 0.45};
    EXPECT_EQ(feedback_pair_from_json(to_json(p)), p);
    FeedbackPair q{"x", "a", "b", Rule::R1, 2, std::nullopt};
    EXPECT_EQ(feedback_pair_from_json(to_json(q)), q);
}

TEST(PoolReport, Examples) {
    EXPECT_TRUE(pool_distribution_report({}, {"a"}).empty());

    auto solo = pool_distribution_report({FeedbackPair{"x", "a", "a"}}, {"a"});
    ASSERT_EQ(solo.size(), 1u);
    EXPECT_DOUBLE_EQ(solo[0].chosen_pct, 100.0);
    EXPECT_DOUBLE_EQ(solo[0].rejected_pct, 100.0);

    std::vector<FeedbackPair> ab{FeedbackPair{"x", "A", "B"}, FeedbackPair{"y", "A", "B"}};
    auto two = pool_distribution_report(ab, {"A", "B"});
    ASSERT_EQ(two.size(), 2u);
    EXPECT_DOUBLE_EQ(two[0].chosen_pct, 100.0);
    EXPECT_DOUBLE_EQ(two[0].rejected_pct, 0.0);
    EXPECT_DOUBLE_EQ(two[1].chosen_pct, 0.0);
    EXPECT_DOUBLE_EQ(two[1].rejected_pct, 100.0);
}

TEST(PoolReport, ColumnsSumToHundred) {
    std::mt19937_64 rng(8);
    std::vector<FeedbackPair> pairs;
    for (int i = 0; i < 20; ++i) {
        auto set = random_set(rng, 5);
        for (auto& p : compose_pairs_rule2("in" + std::to_string(i), set, {})) pairs.push_back(p);
    }
    ASSERT_FALSE(pairs.empty());
    double c = 0, r = 0;
    for (const auto& row : pool_distribution_report(pairs, {"g0", "g1", "g2", "g3", "g4"})) {
        c += row.chosen_pct;
        r += row.rejected_pct;
    }
    EXPECT_NEAR(c, 100.0, 1e-9);
    EXPECT_NEAR(r, 100.0, 1e-9);
}
