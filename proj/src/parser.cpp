#include "ragalign/parser.hpp"

#include <cctype>

#include "ragalign/errors.hpp"

namespace ragalign {

namespace {

constexpr std::string_view kSentencesLabel = "extracted sentence";
constexpr std::string_view kAnswerLabel = "answer";
constexpr std::string_view kEnDash = "\xE2\x80\x93";
constexpr std::string_view kBulletDot = "\xE2\x80\xA2";

enum class Header { none, sentences, answer };

struct HeaderMatch {
    Header kind = Header::none;
    std::string remainder;
};

bool is_markdown(char c) { return c == '#' || c == '*' || c == '_' || c == '>'; }

HeaderMatch match_header(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && (std::isspace(static_cast<unsigned char>(line[i])) || is_markdown(line[i]))) ++i;
    const auto s = line.substr(i);
    const auto lead = line.substr(0, i);
    const bool emphasized = lead.find_first_of("*_") != std::string_view::npos;

    auto after_label = [&](std::string_view label, bool allow_plural) -> std::optional<std::string> {
        if (!iequals_prefix(s, label)) return std::nullopt;
        std::size_t pos = label.size();
        if (allow_plural && pos < s.size() && (s[pos] == 's' || s[pos] == 'S')) ++pos;
        while (pos < s.size() && (s[pos] == '*' || s[pos] == '_' || s[pos] == ' ')) ++pos;
        if (pos >= s.size() || s[pos] != ':') return std::nullopt;
        ++pos;
        // Closing emphasis of "**Answer:**"; only when the header opened with it.
        while (emphasized && pos < s.size() && (s[pos] == '*' || s[pos] == '_')) ++pos;
        return trim(s.substr(pos));
    };

    if (auto rest = after_label(kSentencesLabel, true)) return {Header::sentences, *rest};
    if (auto rest = after_label(kAnswerLabel, false)) return {Header::answer, *rest};
    return {};
}

/// Strips one list marker ("-", "–", "*", "•", "1.", "1)") from a trimmed
/// line. Returns nullopt when the line is not a list item.
std::optional<std::string> strip_bullet(std::string_view trimmed) {
    if (trimmed.empty()) return std::nullopt;
    for (auto marker : {std::string_view("-"), std::string_view("*"), kEnDash, kBulletDot}) {
        if (trimmed.substr(0, marker.size()) == marker) return trim(trimmed.substr(marker.size()));
    }
    std::size_t digits = 0;
    while (digits < trimmed.size() && std::isdigit(static_cast<unsigned char>(trimmed[digits]))) ++digits;
    if (digits > 0 && digits + 1 < trimmed.size() && (trimmed[digits] == '.' || trimmed[digits] == ')') &&
        trimmed[digits + 1] == ' ') {
        return trim(trimmed.substr(digits + 1));
    }
    return std::nullopt;
}

std::vector<std::string_view> split_lines(std::string_view raw) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto end = raw.find('\n', start);
        if (end == std::string_view::npos) end = raw.size();
        auto line = raw.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

bool is_empty_list_marker(std::string_view text) { return text == "[]" || text == "-"; }

}  // namespace

std::string_view to_string(NoncomplianceReason reason) {
    switch (reason) {
        case NoncomplianceReason::only_sentences: return "only_sentences";
        case NoncomplianceReason::only_answer: return "only_answer";
        case NoncomplianceReason::bad_format: return "bad_format";
        case NoncomplianceReason::empty: return "empty";
    }
    return "bad_format";
}

NoncomplianceReason parse_noncompliance_reason(std::string_view text) {
    if (text == "only_sentences") return NoncomplianceReason::only_sentences;
    if (text == "only_answer") return NoncomplianceReason::only_answer;
    if (text == "empty") return NoncomplianceReason::empty;
    return NoncomplianceReason::bad_format;
}

ParsedCompletion parse_completion(std::string_view raw) {
    ParsedCompletion out;
    if (trim(raw).empty()) {
        out.reason = NoncomplianceReason::empty;
        return out;
    }

    enum class State { preamble, sentences, answer } state = State::preamble;
    bool answer_header_before_sentences = false;
    bool bullets_in_preamble = false;
    bool prose_in_preamble = false;
    std::string early_answer;
    std::vector<std::string> answer_lines;

    for (const auto line : split_lines(raw)) {
        if (state == State::answer) {
            answer_lines.emplace_back(line);
            continue;
        }
        const auto header = match_header(line);
        if (header.kind == Header::sentences && state == State::preamble) {
            state = State::sentences;
            if (!header.remainder.empty() && !is_empty_list_marker(header.remainder)) {
                auto item = strip_bullet(header.remainder);
                out.sentences.push_back(item ? *item : header.remainder);
            }
            continue;
        }
        if (header.kind == Header::answer) {
            if (state == State::sentences) {
                state = State::answer;
                answer_lines.push_back(header.remainder);
            } else if (!answer_header_before_sentences) {
                answer_header_before_sentences = true;
                early_answer = header.remainder;
            }
            continue;
        }

        const auto trimmed = trim(line);
        if (trimmed.empty()) continue;
        const auto item = strip_bullet(trimmed);
        if (state == State::sentences) {
            if (item) {
                if (!item->empty()) out.sentences.push_back(*item);
            } else if (!is_empty_list_marker(trimmed)) {
                // Wrapped line: continuation of the previous sentence.
                if (out.sentences.empty()) {
                    out.sentences.push_back(trimmed);
                } else {
                    out.sentences.back() += " " + trimmed;
                }
            }
        } else {
            (item ? bullets_in_preamble : prose_in_preamble) = true;
            if (answer_header_before_sentences && !item) {
                early_answer += early_answer.empty() ? trimmed : "\n" + trimmed;
            }
        }
    }

    if (state == State::answer) {
        // Keep interior newlines; trim only the ends.
        std::string answer;
        for (std::size_t i = 0; i < answer_lines.size(); ++i) {
            if (i) answer += '\n';
            answer += answer_lines[i];
        }
        out.answer = trim(answer);
        if (out.answer.empty()) {
            out.reason = NoncomplianceReason::bad_format;
        } else {
            out.compliant = true;
        }
        return out;
    }
    if (state == State::sentences) {
        out.reason = answer_header_before_sentences ? NoncomplianceReason::bad_format : NoncomplianceReason::only_sentences;
        out.answer = trim(early_answer);
        return out;
    }
    // No sentences header at all.
    if (answer_header_before_sentences) {
        out.answer = trim(early_answer);
        out.reason = bullets_in_preamble ? NoncomplianceReason::bad_format : NoncomplianceReason::only_answer;
    } else if (bullets_in_preamble && !prose_in_preamble) {
        out.reason = NoncomplianceReason::only_sentences;
    } else if (bullets_in_preamble) {
        out.reason = NoncomplianceReason::bad_format;
    } else {
        out.answer = trim(raw);
        out.reason = NoncomplianceReason::only_answer;
    }
    return out;
}

std::string render_completion(const ParsedCompletion& p) {
    if (!p.compliant || p.answer.empty()) throw RenderError("cannot render a noncompliant completion");
    std::string out = "Extracted Sentences:\n";
    for (const auto& s : p.sentences) {
        std::string line = s;
        for (auto& c : line) {
            if (c == '\n' || c == '\r') c = ' ';
        }
        out += "- " + line + "\n";
    }
    out += "\nAnswer: " + p.answer;
    return out;
}

std::string answer_for_metrics(const ParsedCompletion& p) {
    std::string a = p.answer;
    for (auto& c : a) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return a;
}

json to_json(const ParsedCompletion& p, std::string_view raw_text) {
    return json{{"input_id", p.input_id},
                {"provider_id", p.provider_id},
                {"raw_text", raw_text},
                {"sentences", p.sentences},
                {"answer", p.answer},
                {"compliant", p.compliant},
                {"reason", p.reason ? json(to_string(*p.reason)) : json(nullptr)}};
}

ParsedCompletion completion_from_json(const json& j) {
    ParsedCompletion p;
    p.input_id = j.at("input_id").get<std::string>();
    p.provider_id = j.at("provider_id").get<std::string>();
    p.sentences = j.at("sentences").get<std::vector<std::string>>();
    p.answer = j.at("answer").get<std::string>();
    p.compliant = j.at("compliant").get<bool>();
    if (j.contains("reason") && j["reason"].is_string()) p.reason = parse_noncompliance_reason(j["reason"].get<std::string>());
    return p;
}

}  // namespace ragalign
