#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragalign/text.hpp"

namespace ragalign {

enum class NoncomplianceReason { only_sentences, only_answer, bad_format, empty };

std::string_view to_string(NoncomplianceReason reason);
NoncomplianceReason parse_noncompliance_reason(std::string_view text);

inline constexpr std::string_view kNoAnswer = "No Answer";

/// Extract-then-generate output: evidence sentences followed by the answer.
struct ParsedCompletion {
    std::string input_id;
    std::string provider_id;
    std::vector<std::string> sentences;
    std::string answer;
    bool compliant = false;
    std::optional<NoncomplianceReason> reason;

    bool operator==(const ParsedCompletion&) const = default;
};

/// Total: every input yields a value. Header matching tolerates case, leading
/// whitespace and markdown decoration ("**Answer:**", "### Extracted Sentences:").
ParsedCompletion parse_completion(std::string_view raw);

/// Canonical form: "Extracted Sentences:\n- s1\n- s2\n\nAnswer: a". Internal
/// newlines in sentences become spaces. Throws RenderError if not compliant.
std::string render_completion(const ParsedCompletion& p);

/// Answer with newlines folded to spaces, as fed to the metrics.
std::string answer_for_metrics(const ParsedCompletion& p);

/// Completion file record.
json to_json(const ParsedCompletion& p, std::string_view raw_text);
ParsedCompletion completion_from_json(const json& j);

}  // namespace ragalign
