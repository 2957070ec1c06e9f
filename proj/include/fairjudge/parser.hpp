#pragma once

#include <charconv>
#include <cstdint>
#include <limits>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "fairjudge/records.hpp"
#include "fairjudge/util.hpp"

namespace fairjudge {

// Full mode parses structured completions (Rubric / Reasoning / Judgement
// sections); Fast mode treats the entire completion as the decision field.
enum class ParseMode { Full, Fast };

enum class SectionKind { Preamble, Rubric, Reasoning, Judgement };

inline const char* to_string(SectionKind k) {
    switch (k) {
        case SectionKind::Preamble: return "preamble";
        case SectionKind::Rubric: return "rubric";
        case SectionKind::Reasoning: return "reasoning";
        case SectionKind::Judgement: return "judgement";
    }
    return "?";
}

struct Section {
    SectionKind kind;
    std::string text;
};

// Sections in document order. Lookup returns the last occurrence of a kind:
// judges that revise themselves emit the decision that counts last.
struct SectionMap {
    std::vector<Section> sections;

    const Section* last(SectionKind kind) const {
        for (auto it = sections.rbegin(); it != sections.rend(); ++it)
            if (it->kind == kind) return &*it;
        return nullptr;
    }
    bool empty() const { return sections.empty(); }
};

struct ParserOptions {
    ParseMode mode = ParseMode::Full;
    // Strict: only the canonical tokens A_win / B_win / tie. Lenient adds
    // "Answer A", "Answer B", "A", "B" when they are the sole content of the
    // decision field.
    bool strict = true;
};

namespace detail {

// Header grammar: optional '#'/'*' decoration, a section keyword, optional
// trailing decoration, then a colon (inline content may follow) or line end.
inline const std::regex& header_regex() {
    static const std::regex re(R"(^[#*\s]*(rubric|reasoning|judgement|judgment)[\s*]*(?::(.*))?$)",
                               std::regex::ECMAScript | std::regex::icase);
    return re;
}

inline SectionKind keyword_to_kind(std::string_view kw) {
    std::string k = to_lower(kw);
    if (k == "rubric") return SectionKind::Rubric;
    if (k == "reasoning") return SectionKind::Reasoning;
    return SectionKind::Judgement;  // judgement / judgment
}

}  // namespace detail

inline SectionMap extract_sections(std::string_view completion) {
    SectionMap map;
    std::optional<SectionKind> current;
    std::string buffer;
    auto flush = [&] {
        if (current) {
            map.sections.push_back({*current, buffer});
        } else if (!trim(buffer).empty()) {
            // Unheaded text ahead of the first header becomes the preamble.
            map.sections.push_back({SectionKind::Preamble, buffer});
        }
        buffer.clear();
    };
    for (std::string_view line : split_lines(completion)) {
        std::cmatch m;
        if (std::regex_match(line.begin(), line.end(), m, detail::header_regex())) {
            flush();
            current = detail::keyword_to_kind(m.str(1));
            if (m[2].matched && !trim(m.str(2)).empty()) buffer = m.str(2);
            continue;
        }
        if (!buffer.empty()) buffer += '\n';
        buffer += line;
    }
    flush();
    return map;
}

namespace detail {

inline const std::regex& decision_token_regex() {
    static const std::regex re(R"(\b(a_win|b_win|tie)\b)",
                               std::regex::ECMAScript | std::regex::icase);
    return re;
}

inline std::optional<JudgmentLabel> sole_content_label(std::string_view field) {
    std::string t = to_lower(trim(field));
    if (t == "answer a" || t == "a") return JudgmentLabel::AWin;
    if (t == "answer b" || t == "b") return JudgmentLabel::BWin;
    return std::nullopt;
}

}  // namespace detail

struct LabelParse {
    std::optional<JudgmentLabel> label;
    std::string error;

    bool ok() const { return label.has_value(); }
};

// Locates the decision token inside the Judgement section (Full mode) or the
// whole completion (Fast mode). Multiple tokens naming different labels are
// a parse failure, as is the absence of any token.
inline LabelParse extract_judgment(std::string_view completion, ParserOptions opts = {}) {
    std::string field;
    if (opts.mode == ParseMode::Full) {
        SectionMap sections = extract_sections(completion);
        const Section* judgement = sections.last(SectionKind::Judgement);
        if (!judgement) return {std::nullopt, "no judgement section"};
        field = judgement->text;
    } else {
        field = std::string(completion);
    }

    bool seen[3] = {false, false, false};
    std::optional<JudgmentLabel> found;
    int distinct = 0;
    auto begin = std::cregex_iterator(field.data(), field.data() + field.size(),
                                      detail::decision_token_regex());
    for (auto it = begin; it != std::cregex_iterator(); ++it) {
        std::string tok = to_lower(it->str(1));
        JudgmentLabel lab = tok == "a_win"   ? JudgmentLabel::AWin
                            : tok == "b_win" ? JudgmentLabel::BWin
                                             : JudgmentLabel::Tie;
        if (!seen[static_cast<int>(lab)]) {
            seen[static_cast<int>(lab)] = true;
            ++distinct;
            found = lab;
        }
    }
    if (distinct > 1) return {std::nullopt, "conflicting decision tokens"};
    if (distinct == 1) return {found, {}};
    if (!opts.strict) {
        if (auto lenient = detail::sole_content_label(field)) return {lenient, {}};
    }
    return {std::nullopt, "no decision token"};
}

struct IntParse {
    std::optional<std::int64_t> value;
    std::string error;

    bool ok() const { return value.has_value(); }
};

namespace detail {

// Saturating integer parse of a digit run (with optional '-' sign).
inline std::int64_t parse_saturating(std::string_view digits, bool negative) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec == std::errc::result_out_of_range) {
        return negative ? std::numeric_limits<std::int64_t>::min()
                        : std::numeric_limits<std::int64_t>::max();
    }
    return negative ? -v : v;
}

}  // namespace detail

// Int(c): the first standalone integer token in the completion. In Fast mode
// the whole trimmed completion must be an integer.
inline IntParse extract_point_score(std::string_view completion, ParseMode mode = ParseMode::Full) {
    if (mode == ParseMode::Fast) {
        std::string_view t = trim(completion);
        if (t.empty()) return {std::nullopt, "empty completion"};
        bool negative = t.front() == '-';
        std::string_view digits = negative ? t.substr(1) : t;
        if (digits.empty()) return {std::nullopt, "no digits"};
        for (char c : digits)
            if (c < '0' || c > '9') return {std::nullopt, "not a bare integer"};
        return {detail::parse_saturating(digits, negative), {}};
    }
    for (std::size_t i = 0; i < completion.size(); ++i) {
        if (completion[i] < '0' || completion[i] > '9') continue;
        std::size_t end = i;
        while (end < completion.size() && completion[end] >= '0' && completion[end] <= '9') ++end;
        bool boundary_right = end == completion.size() || !is_word_char(completion[end]);
        bool negative = false;
        std::size_t left = i;
        if (left > 0 && completion[left - 1] == '-') {
            negative = true;
            --left;
        }
        bool boundary_left = left == 0 || !is_word_char(completion[left - 1]);
        if (boundary_left && boundary_right)
            return {detail::parse_saturating(completion.substr(i, end - i), negative), {}};
        i = end;  // skip the embedded run
    }
    return {std::nullopt, "no integer token"};
}

// Aggregate parse of a completion for one task mode. At most one of
// label / point_score is populated.
struct ParsedJudgment {
    SectionMap sections;
    std::optional<JudgmentLabel> label;
    std::optional<std::int64_t> point_score;
    std::string error;

    bool ok() const { return label.has_value() || point_score.has_value(); }
};

inline ParsedJudgment parse_completion(std::string_view completion, Mode task_mode,
                                       ParserOptions opts = {}) {
    ParsedJudgment out;
    out.sections = extract_sections(completion);
    if (task_mode == Mode::Pairwise) {
        LabelParse lp = extract_judgment(completion, opts);
        out.label = lp.label;
        out.error = lp.error;
    } else {
        IntParse ip = extract_point_score(completion, opts.mode);
        out.point_score = ip.value;
        out.error = ip.error;
    }
    return out;
}

// Canonical completion renderers, the inverse of the extractor. The toy
// training loop scores rendered completions through the real parser rather
// than shortcutting label ids to rewards.
inline std::string render_judgment(JudgmentLabel label, ParseMode mode = ParseMode::Full) {
    if (mode == ParseMode::Fast) return to_string(label);
    return std::string("### Judgement\n") + to_string(label);
}

inline std::string render_point_score(int score, ParseMode mode = ParseMode::Full) {
    if (mode == ParseMode::Fast) return std::to_string(score);
    return "### Judgement\n" + std::to_string(score);
}

}  // namespace fairjudge
