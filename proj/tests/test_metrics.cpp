#include <gtest/gtest.h>

#include <random>
#include <set>

#include "ragalign/errors.hpp"
#include "ragalign/metrics.hpp"
#include "support.hpp"

using namespace ragalign;
using testing_support::fast_retry;
using testing_support::scripted;
using testing_support::spec;
using testing_support::TempDir;

namespace {

std::size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    return t[a.size()][b.size()];
}

std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t max_len, int vocab) {
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<int> tok(0, vocab - 1);
    std::vector<std::string> out(len(rng));
    for (auto& t : out) t = "t" + std::to_string(tok(rng));
    return out;
}

}  // namespace

TEST(Accuracy, Inclusion) {
    EXPECT_EQ(accuracy("Paris", "The capital is Paris."), 1);
    EXPECT_EQ(accuracy("PARIS", "paris is the capital"), 1);
    EXPECT_EQ(accuracy("Paris", "No Answer"), 0);
    EXPECT_EQ(accuracy("...", "anything"), 0);
}

TEST(Accuracy, AppendingNeverFlipsToZero) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 500; ++i) {
        auto truth = join(random_tokens(rng, 3, 4));
        auto pred = join(random_tokens(rng, 8, 4));
        if (accuracy(truth, pred) == 1) EXPECT_EQ(accuracy(truth, pred + " " + join(random_tokens(rng, 4, 4))), 1);
    }
}

TEST(RougeL, HandCases) {
    EXPECT_DOUBLE_EQ(rouge_l_f1("the cat sat", "the cat sat"), 1.0);
    EXPECT_DOUBLE_EQ(rouge_l_f1("the cat sat", "dogs bark loudly"), 0.0);
    EXPECT_DOUBLE_EQ(rouge_l_f1("the cat sat", "the dog sat"), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(rouge_l_f1("", "x"), 0.0);
    EXPECT_DOUBLE_EQ(rouge_l_f1("x", ""), 0.0);
}

TEST(RougeL, MatchesDpOracleAndIsSymmetric) {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 1000; ++i) {
        auto ref = random_tokens(rng, 12, 5);
        auto cand = random_tokens(rng, 12, 5);
        const auto l = static_cast<double>(lcs_oracle(ref, cand));
        double expected = 0.0;
        if (!ref.empty() && !cand.empty() && l > 0) {
            const double p = l / cand.size(), r = l / ref.size();
            expected = 2 * p * r / (p + r);
        }
        EXPECT_EQ(lcs_length(ref, cand), lcs_oracle(ref, cand));
        EXPECT_EQ(rouge_l_f1_tokens(ref, cand), expected);
        EXPECT_DOUBLE_EQ(rouge_l_f1_tokens(cand, ref), rouge_l_f1_tokens(ref, cand));
        const double v = rouge_l_f1_tokens(ref, cand);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(BertScore, IdenticalAndOrthogonal) {
    OneHotTokenEmbedder e;
    EXPECT_DOUBLE_EQ(bert_score_f1(e.embed_tokens("a b c"), e.embed_tokens("a b c")), 1.0);
    EXPECT_DOUBLE_EQ(bert_score_f1(e.embed_tokens("a b"), e.embed_tokens("c d")), 0.0);
}

TEST(BertScore, EmptyRaises) {
    OneHotTokenEmbedder e;
    EXPECT_THROW(bert_score_f1(e.embed_tokens(""), e.embed_tokens("a")), MetricError);
}

TEST(BertScore, OneHotEqualsUnigramOverlapF1) {
    OneHotTokenEmbedder e;
    std::mt19937_64 rng(23);
    for (int i = 0; i < 1000; ++i) {
        auto ref = random_tokens(rng, 10, 6);
        auto cand = random_tokens(rng, 10, 6);
        if (ref.empty() || cand.empty()) continue;
        const std::set<std::string> ref_set(ref.begin(), ref.end()), cand_set(cand.begin(), cand.end());
        double hit_r = 0, hit_p = 0;
        for (const auto& t : ref) hit_r += cand_set.count(t);
        for (const auto& t : cand) hit_p += ref_set.count(t);
        const double r = hit_r / ref.size(), p = hit_p / cand.size();
        const double expected = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
        EXPECT_DOUBLE_EQ(bert_score_f1(e.embed_tokens(join(ref)), e.embed_tokens(join(cand))), expected);
    }
}

TEST(BertScore, VectorsAreUnitNorm) {
    OneHotTokenEmbedder e(16);
    auto seq = e.embed_tokens("One two, three!");
    ASSERT_EQ(seq.tokens, (std::vector<std::string>{"one", "two", "three"}));
    for (const auto& v : seq.vectors) {
        double n = 0;
        for (float x : v) n += x * x;
        EXPECT_DOUBLE_EQ(n, 1.0);
    }
}

TEST(LlmEval, VerdictParsing) {
    TempDir dir;
    Gateway gw(dir.path(), fast_retry());
    auto t = spec("t", ProviderRole::judge), f = spec("f", ProviderRole::judge), l = spec("l", ProviderRole::judge),
         b = spec("b", ProviderRole::judge);
    gw.register_provider(t, scripted({{"behavior", "fixed_json"}, {"payload", {{"Correctness", "True"}}}}));
    gw.register_provider(f, scripted({{"behavior", "fixed_json"}, {"payload", {{"Correctness", "False"}}}}));
    gw.register_provider(l, scripted({{"behavior", "fixed_json"}, {"payload", {{"Correctness", "true"}}}}));
    auto bad = scripted({{"behavior", "fixed_text"}, {"text", "maybe?"}});
    gw.register_provider(b, bad);
    EXPECT_EQ(llm_eval(gw, t, "q", "a", "a"), 1);
    EXPECT_EQ(llm_eval(gw, f, "q", "a", "b"), 0);
    EXPECT_EQ(llm_eval(gw, l, "q", "a", "a"), 1);
    EXPECT_THROW(llm_eval(gw, b, "q", "a", "a"), JudgeError);
    EXPECT_EQ(bad->calls(), 3u);
}

TEST(ScoreCompletion, PerfectDisjointAndSuperset) {
    TempDir dir;
    Gateway gw(dir.path(), fast_retry());
    auto judge = spec("judge", ProviderRole::judge);
    gw.register_provider(judge, scripted({{"behavior", "inclusion_judge"}}));
    OneHotTokenEmbedder e;
    ScoringContext ctx{gw, judge, e};

    ParsedCompletion p;
    p.compliant = true;
    p.answer = "Ada Lovell";
    EXPECT_EQ(score_completion("who?", "Ada Lovell", p, ctx), make_metrics(1, 1, 1.0, 1.0));

    p.answer = "Rivers flood";
    auto disjoint = score_completion("who?", "Ada Lovell", p, ctx);
    EXPECT_EQ(disjoint, make_metrics(0, 0, 0.0, 0.0));

    p.answer = "It was Ada Lovell of course";
    auto superset = score_completion("who?", "Ada Lovell", p, ctx);
    EXPECT_EQ(superset.acc, 1);
    EXPECT_EQ(superset.llm_eval, 1);
    EXPECT_LT(*superset.rouge_l, 1.0);
    EXPECT_DOUBLE_EQ(*superset.rouge_l, 2 * (2.0 / 6) * 1.0 / (2.0 / 6 + 1.0));
}

TEST(ScoreCompletion, JudgeFailureLeavesFieldUnset) {
    TempDir dir;
    Gateway gw(dir.path(), fast_retry());
    auto judge = spec("judge", ProviderRole::judge);
    gw.register_provider(judge, scripted({{"behavior", "fixed_text"}, {"text", "garbled"}}));
    OneHotTokenEmbedder e;
    ParsedCompletion p;
    p.compliant = true;
    p.answer = "x";
    auto mv = score_completion("q", "x", p, ScoringContext{gw, judge, e});
    EXPECT_FALSE(mv.llm_eval);
    EXPECT_EQ(mv.acc, 1);
    EXPECT_FALSE(mv.complete());
    EXPECT_THROW(mv.avg(), ComposerError);
}

TEST(MetricVector, AverageAndJson) {
    auto mv = make_metrics(1, 0, 0.5, 0.25);
    EXPECT_DOUBLE_EQ(mv.avg(), 0.4375);
    EXPECT_EQ(metrics_from_json(to_json(mv)), mv);
    MetricVector partial;
    partial.acc = 1;
    EXPECT_EQ(metrics_from_json(to_json(partial)), partial);
}
