#pragma once

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ragalign {

enum class TemplateId { ext2gen, qa_gen, validity_check, llm_eval, filter_baseline };

std::string_view to_string(TemplateId id);
TemplateId parse_template_id(std::string_view text);

/// A binding is either plain text or a chunk list, which renders as
/// "Chunk 1: ...\nChunk 2: ..." in the given order.
using Binding = std::variant<std::string, std::vector<std::string>>;
using Bindings = std::map<std::string, Binding>;

/// Raw template text with {placeholder} markers.
std::string_view template_body(TemplateId id);

/// Placeholder names in order of first appearance.
std::vector<std::string> template_placeholders(TemplateId id);

/// Substitutes every placeholder. Throws TemplateError naming the first
/// unbound placeholder.
std::string render_prompt(TemplateId id, const Bindings& bindings);

std::string render_chunk_list(const std::vector<std::string>& chunks);

/// Inverse of the ext2gen layout, used by mock providers.
struct Ext2GenPromptView {
    std::string query;
    std::vector<std::string> chunks;  // index 0 is "Chunk 1"
};

/// Returns false if the prompt does not carry the ext2gen markers.
bool parse_ext2gen_prompt(std::string_view prompt, Ext2GenPromptView& out);

/// Extracts the text following "### <label>:" up to the next "###" header.
/// Returns false if the header is absent.
bool extract_section(std::string_view prompt, std::string_view label, std::string& out);

}  // namespace ragalign
