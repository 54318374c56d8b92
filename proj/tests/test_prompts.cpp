#include <gtest/gtest.h>

#include "ragalign/errors.hpp"
#include "ragalign/prompts.hpp"
#include "ragalign/text.hpp"
#include "support.hpp"

using namespace ragalign;

namespace {

std::string golden(const std::string& name) {
    return read_text(testing_support::source_dir() + "/tests/golden/" + name + ".txt");
}

const std::string kQuery = "Who built the old mill?";
const std::string kRelevant = "The old mill was built by Ada Lovell in 1820.";
const std::string kNoise = "Rivers in the valley flood each spring.";

}  // namespace

TEST(Prompts, Ext2GenMatchesGolden) {
    auto out = render_prompt(TemplateId::ext2gen, {{"query", kQuery}, {"chunk_list", std::vector<std::string>{kRelevant, kNoise}}});
    EXPECT_EQ(out, golden("ext2gen"));
}

TEST(Prompts, QaGenMatchesGolden) {
    EXPECT_EQ(render_prompt(TemplateId::qa_gen, {{"target_chunk", kRelevant}}), golden("qa_gen"));
}

TEST(Prompts, ValidityCheckMatchesGolden) {
    auto out = render_prompt(TemplateId::validity_check,
                             {{"query", kQuery}, {"answer", std::string("Ada Lovell")}, {"target_chunk", kRelevant}});
    EXPECT_EQ(out, golden("validity_check"));
}

TEST(Prompts, LlmEvalMatchesGolden) {
    auto out = render_prompt(TemplateId::llm_eval, {{"query", kQuery},
                                                    {"true_answer", std::string("Ada Lovell")},
                                                    {"predicted_answer", std::string("It was Ada Lovell.")}});
    EXPECT_EQ(out, golden("llm_eval"));
}

TEST(Prompts, FilterBaselineMatchesGolden) {
    auto out = render_prompt(TemplateId::filter_baseline,
                             {{"query", kQuery}, {"chunk_list", std::vector<std::string>{kRelevant, kNoise}}});
    EXPECT_EQ(out, golden("filter_baseline"));
}

TEST(Prompts, ChunkListLayout) {
    auto out = render_prompt(TemplateId::ext2gen, {{"query", std::string("Q")}, {"chunk_list", std::vector<std::string>{"A", "B"}}});
    EXPECT_NE(out.find("### Query: Q"), std::string::npos);
    const auto a = out.find("Chunk 1: A");
    const auto b = out.find("Chunk 2: B");
    ASSERT_NE(a, std::string::npos);
    ASSERT_NE(b, std::string::npos);
    EXPECT_LT(a, b);
}

TEST(Prompts, MissingBindingNamesPlaceholder) {
    try {
        render_prompt(TemplateId::qa_gen, {});
        FAIL();
    } catch (const TemplateError& e) {
        EXPECT_EQ(e.name(), "target_chunk");
    }
    EXPECT_THROW(render_prompt(TemplateId::ext2gen, {{"query", std::string("Q")}}), TemplateError);
}

TEST(Prompts, RenderingIsDeterministicAndPlaceholderFree) {
    for (auto id : {TemplateId::ext2gen, TemplateId::qa_gen, TemplateId::validity_check, TemplateId::llm_eval,
                    TemplateId::filter_baseline}) {
        Bindings b;
        for (const auto& name : template_placeholders(id)) b[name] = std::string("VALUE");
        const auto first = render_prompt(id, b);
        EXPECT_EQ(first, render_prompt(id, b));
        for (const auto& name : template_placeholders(id))
            EXPECT_EQ(first.find("{" + name + "}"), std::string::npos) << to_string(id);
    }
}

TEST(Prompts, Ext2GenViewRoundTrip) {
    std::vector<std::string> chunks{"first chunk.", "second\nchunk with newline.", "third"};
    auto prompt = render_prompt(TemplateId::ext2gen, {{"query", std::string("what now?")}, {"chunk_list", chunks}});
    Ext2GenPromptView view;
    ASSERT_TRUE(parse_ext2gen_prompt(prompt, view));
    EXPECT_EQ(view.query, "what now?");
    ASSERT_EQ(view.chunks.size(), 3u);
    EXPECT_EQ(view.chunks[1], "second chunk with newline.");
    EXPECT_FALSE(parse_ext2gen_prompt("hello", view));
}
