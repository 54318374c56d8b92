#include "ragalign/prompts.hpp"

#include <cctype>

#include "ragalign/errors.hpp"
#include "ragalign/text.hpp"

namespace ragalign {

namespace {

constexpr std::string_view kExt2Gen =
    R"(You are an expert assistant trained to extract essential sentences from document chunks and generate answers based on the extracted sentences.
Your task is twofold:
- Extraction: Identify sentences that contribute to constructing a precise and accurate response to the given query.
- Generation: Formulate a concise and coherent answer based on the extracted sentences.

### Extraction Instruction:
- A query will be provided for you to answer.
- Extract only the sentences that contribute to forming an answer to the query.
- Ensure that the extracted sentences are sufficient to derive a correct and complete answer.
- If no relevant sentences are found in the provided chunks, return an empty list.

### Generation Instruction:
- Use the extracted sentences to generate a well-formed answer to the query.
- If no sentences are extracted, return "No Answer".

### Output Example:
Extracted Sentences:
- Sentence 1
- Sentence 2

Answer: Your Answer

### Query: {query}

### Chunk List: {chunk_list}

### Output:
)";

constexpr std::string_view kQaGen =
    R"(You are a Question and Answer generation system.
Your task is to create a relevant query and provide a corresponding answer based on the given document chunk.
The query should be concise, clear, and directly relevant to the content of the document chunk.
The answer must be concise, factually grounded by the chunk, and formatted as either a phrase or a single sentence, aligned with one of the following categories:

1. Fact-based: Generate a query that asks for specific details like dates, names, locations, etc., and provide a concise factual answer.
2. Instruction-based: Generate a query asking how to perform an action, and provide a concise step-by-step guide or instruction.
3. Definition or Explanation: Generate a query asking for a brief definition or explanation of a term or concept, and provide a clear explanation.
4. Opinion: Formulate a query that seeks advice or a recommendation based on the document content, and provide a brief opinion or recommendation.
5. Yes/No: Create a yes/no question based on the document chunk and answer it with "Yes" or "No."

Your output must include a single query and its corresponding answer in JSON format:
{
  "query": "your query belong to the five categories",
  "answer": "your answer"
}

### Document Chunk: {target_chunk}

### JSON Output:
)";

constexpr std::string_view kValidityCheck =
    R"(You are responsible for evaluating whether the provided answer to the query can be derived from the given chunk.

### Instructions:
1. Analyze the provided answer in response to the query, using the information available in the chunk.
2. If the answer can be fully derived from the chunk, respond with "Supported".
3. If the answer cannot be fully derived from the chunk, respond with "Not Supported".

Your output must be in JSON format. The output should be a dictionary whose a single key is "response".
{
  "response": "Supported",
}

### Query: {query}

### Answer: {answer}

### Chunk: {target_chunk}

### JSON Output:
)";

constexpr std::string_view kLlmEval =
    R"(Your task is to evaluate the correctness of the predicted answer based on the true answer.

### Instructions:
- Read the QUERY and then compare the ANSWER and the Predicted ANSWER.
- Check if the Predicted Answer includes the core content of the True Answer (True/False in text).

### QUERY: {query}

### TRUE ANSWER: {true_answer}

### Predicted ANSWER: {predicted_answer}

### Output Format:
{
    "Correctness": "True or False"
}

### Output (Only JSON):
)";

constexpr std::string_view kFilterBaseline =
    R"(Extract key sentences from the retrieved documents to create an extractive summary that can be used to answer the question.

### Question: {query}

### Retrieved documents: {chunk_list}

### Extractive summary:
)";

bool is_placeholder_char(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }

// Calls on_text / on_placeholder for each piece of the template body.
template <typename Text, typename Placeholder>
void scan_template(std::string_view body, Text on_text, Placeholder on_placeholder) {
    std::size_t i = 0, literal_start = 0;
    while (i < body.size()) {
        if (body[i] == '{') {
            std::size_t j = i + 1;
            while (j < body.size() && is_placeholder_char(body[j])) ++j;
            if (j > i + 1 && j < body.size() && body[j] == '}') {
                on_text(body.substr(literal_start, i - literal_start));
                on_placeholder(std::string(body.substr(i + 1, j - i - 1)));
                i = j + 1;
                literal_start = i;
                continue;
            }
        }
        ++i;
    }
    on_text(body.substr(literal_start));
}

std::string single_line(std::string_view text) {
    std::string out(text);
    for (auto& c : out) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return out;
}

}  // namespace

std::string_view to_string(TemplateId id) {
    switch (id) {
        case TemplateId::ext2gen: return "ext2gen";
        case TemplateId::qa_gen: return "qa_gen";
        case TemplateId::validity_check: return "validity_check";
        case TemplateId::llm_eval: return "llm_eval";
        case TemplateId::filter_baseline: return "filter_baseline";
    }
    return "unknown";
}

TemplateId parse_template_id(std::string_view text) {
    for (auto id : {TemplateId::ext2gen, TemplateId::qa_gen, TemplateId::validity_check, TemplateId::llm_eval,
                    TemplateId::filter_baseline}) {
        if (to_string(id) == text) return id;
    }
    throw ArgumentError("unknown template: " + std::string(text));
}

std::string_view template_body(TemplateId id) {
    switch (id) {
        case TemplateId::ext2gen: return kExt2Gen;
        case TemplateId::qa_gen: return kQaGen;
        case TemplateId::validity_check: return kValidityCheck;
        case TemplateId::llm_eval: return kLlmEval;
        case TemplateId::filter_baseline: return kFilterBaseline;
    }
    return {};
}

std::vector<std::string> template_placeholders(TemplateId id) {
    std::vector<std::string> names;
    scan_template(
        template_body(id), [](std::string_view) {},
        [&](std::string name) {
            for (const auto& n : names)
                if (n == name) return;
            names.push_back(std::move(name));
        });
    return names;
}

std::string render_chunk_list(const std::vector<std::string>& chunks) {
    std::string out;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (i) out += '\n';
        out += "Chunk " + std::to_string(i + 1) + ": " + single_line(chunks[i]);
    }
    return out;
}

std::string render_prompt(TemplateId id, const Bindings& bindings) {
    for (const auto& name : template_placeholders(id)) {
        if (!bindings.count(name)) throw TemplateError(name);
    }
    std::string out;
    scan_template(
        template_body(id), [&](std::string_view text) { out += text; },
        [&](const std::string& name) {
            const auto& value = bindings.at(name);
            if (const auto* s = std::get_if<std::string>(&value)) {
                out += *s;
            } else {
                out += render_chunk_list(std::get<std::vector<std::string>>(value));
            }
        });
    return out;
}

bool extract_section(std::string_view prompt, std::string_view label, std::string& out) {
    const std::string header = "### " + std::string(label) + ":";
    const auto pos = prompt.find(header);
    if (pos == std::string_view::npos) return false;
    auto start = pos + header.size();
    if (start < prompt.size() && prompt[start] == ' ') ++start;
    auto end = prompt.find("\n\n###", start);
    if (end == std::string_view::npos) end = prompt.size();
    out = std::string(prompt.substr(start, end - start));
    return true;
}

bool parse_ext2gen_prompt(std::string_view prompt, Ext2GenPromptView& out) {
    std::string query, list;
    if (!extract_section(prompt, "Query", query) || !extract_section(prompt, "Chunk List", list)) return false;
    out.query = trim(query);
    out.chunks.clear();
    std::size_t line_start = 0;
    while (line_start <= list.size()) {
        auto line_end = list.find('\n', line_start);
        if (line_end == std::string::npos) line_end = list.size();
        std::string_view line(list.data() + line_start, line_end - line_start);
        const std::string marker = "Chunk " + std::to_string(out.chunks.size() + 1) + ": ";
        if (line.substr(0, marker.size()) == marker) {
            out.chunks.emplace_back(line.substr(marker.size()));
        } else if (!trim(line).empty()) {
            return false;
        }
        line_start = line_end + 1;
    }
    return true;
}

}  // namespace ragalign
