// Independent brute-force implementation of the hybrid consistency reward,
// following the reward algorithm line by line with its own parsing code.
// Deliberately written with a different structure from the library path so
// the equivalence tests can catch divergence in either side.
#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace reward_oracle {

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n\f\v");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(b, e - b + 1);
}

// Splits into lines (dropping \r) and records which lines are section
// headers and of what kind.
struct OracleLine {
    std::string text;
    std::string header_kind;  // "", "rubric", "reasoning", "judgement"
    std::string inline_content;
};

inline std::vector<OracleLine> scan_lines(const std::string& text) {
    static const std::regex header(
        R"(^[\s#*]*(rubric|reasoning|judgement|judgment)[\s*]*(?::(.*))?$)",
        std::regex::icase);
    std::vector<OracleLine> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string line =
            nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        OracleLine ol;
        ol.text = line;
        std::smatch m;
        if (std::regex_match(line, m, header)) {
            std::string kind = lower(m.str(1));
            ol.header_kind = kind == "judgment" ? "judgement" : kind;
            if (m[2].matched) ol.inline_content = m.str(2);
        }
        lines.push_back(std::move(ol));
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    return lines;
}

// Text of the LAST judgement section: inline content plus following lines up
// to the next header.
inline std::optional<std::string> last_judgement_section(const std::string& text) {
    auto lines = scan_lines(text);
    std::optional<std::size_t> last_header;
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (lines[i].header_kind == "judgement") last_header = i;
    if (!last_header) return std::nullopt;
    std::string content;
    if (!strip(lines[*last_header].inline_content).empty())
        content = lines[*last_header].inline_content;
    for (std::size_t i = *last_header + 1; i < lines.size(); ++i) {
        if (!lines[i].header_kind.empty()) break;
        if (!content.empty()) content += '\n';
        content += lines[i].text;
    }
    return content;
}

// Decision tokens with word boundaries; distinct labels conflict.
inline std::optional<std::string> parse_label(const std::string& field, bool strict) {
    static const std::regex token(R"((a_win|b_win|tie))", std::regex::icase);
    bool a = false, b = false, t = false;
    auto is_word = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
    };
    for (auto it = std::sregex_iterator(field.begin(), field.end(), token);
         it != std::sregex_iterator(); ++it) {
        std::size_t begin = static_cast<std::size_t>(it->position());
        std::size_t end = begin + static_cast<std::size_t>(it->length());
        if (begin > 0 && is_word(field[begin - 1])) continue;
        if (end < field.size() && is_word(field[end])) continue;
        std::string tok = lower(it->str());
        if (tok == "a_win") a = true;
        else if (tok == "b_win") b = true;
        else t = true;
    }
    int distinct = (a ? 1 : 0) + (b ? 1 : 0) + (t ? 1 : 0);
    if (distinct > 1) return std::nullopt;
    if (a) return "A_win";
    if (b) return "B_win";
    if (t) return "tie";
    if (!strict) {
        std::string s = lower(strip(field));
        if (s == "answer a" || s == "a") return "A_win";
        if (s == "answer b" || s == "b") return "B_win";
    }
    return std::nullopt;
}

inline std::optional<long long> first_integer(const std::string& text) {
    auto is_word = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
        std::size_t end = i;
        while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
        std::size_t left = i;
        bool neg = false;
        if (left > 0 && text[left - 1] == '-') {
            neg = true;
            --left;
        }
        bool ok_left = left == 0 || !is_word(text[left - 1]);
        bool ok_right = end == text.size() || !is_word(text[end]);
        if (ok_left && ok_right) {
            // Saturating accumulate; huge values just clip the reward to 0.
            long long v = 0;
            bool sat = false;
            for (std::size_t p = i; p < end; ++p) {
                if (v > (9223372036854775807LL - (text[p] - '0')) / 10) {
                    sat = true;
                    break;
                }
                v = v * 10 + (text[p] - '0');
            }
            if (sat) v = 9223372036854775807LL;
            return neg ? -v : v;
        }
        i = end;
    }
    return std::nullopt;
}

// Algorithm-style reward: r <- 0; if parsing succeeds, dispatch on the task
// type; else r stays 0.
struct OracleResult {
    double reward = 0.0;
    bool parse_ok = false;
};

inline OracleResult pp_reward(const std::string& completion, long long g1, long long g2,
                              bool fast, bool strict) {
    OracleResult res;
    std::optional<std::string> field =
        fast ? std::optional<std::string>(completion) : last_judgement_section(completion);
    if (!field) return res;
    std::optional<std::string> label = parse_label(*field, strict);
    if (!label) return res;
    res.parse_ok = true;
    if (g1 > g2 && *label == "A_win") res.reward = 2.0;
    else if (g2 > g1 && *label == "B_win") res.reward = 2.0;
    else if (g1 == g2 && *label == "tie") res.reward = 2.0;
    return res;
}

inline OracleResult sp_point_reward(const std::string& completion, long long g1, bool fast) {
    OracleResult res;
    std::optional<long long> v;
    if (fast) {
        std::string t = strip(completion);
        bool ok = !t.empty();
        std::size_t start = 0;
        if (ok && t[0] == '-') start = 1;
        if (start >= t.size()) ok = false;
        for (std::size_t i = start; ok && i < t.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(t[i]))) ok = false;
        if (ok) v = first_integer(t);
    } else {
        v = first_integer(completion);
    }
    if (!v) return res;
    res.parse_ok = true;
    double dev = std::abs(static_cast<double>(g1) - static_cast<double>(*v));
    double r = 2.0 - dev;
    res.reward = r > 0.0 ? r : 0.0;
    return res;
}

inline OracleResult sp_pair_reward(const std::string& completion, const std::string& g1) {
    OracleResult res;
    res.parse_ok = true;
    res.reward = strip(completion) == strip(g1) ? 2.0 : 0.0;
    return res;
}

}  // namespace reward_oracle
