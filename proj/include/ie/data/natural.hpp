#pragma once

// Fixed-length windows anchored at sentence starts or ends of raw text.
//
// A sentence boundary is the start of the text, or a position that follows
// one of . ! ? plus whitespace and holds an uppercase ASCII letter. A
// sentence runs from one boundary to the next. Sentences with fewer than T
// tokens are skipped; the first T (start rule) or last T (end rule) tokens
// of every other sentence become one sequence, joined by single spaces.

#include <cctype>
#include <cstddef>
#include <istream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "ie/core/error.hpp"
#include "ie/data/corpus.hpp"

namespace ie {

enum class AnchorRule { sentence_start, sentence_end };

inline const char* to_string(AnchorRule r) { return r == AnchorRule::sentence_start ? "sentence_start" : "sentence_end"; }

inline AnchorRule parse_anchor_rule(const std::string& s) {
    if (s == "sentence_start" || s == "start") return AnchorRule::sentence_start;
    if (s == "sentence_end" || s == "end") return AnchorRule::sentence_end;
    throw InvalidArgument("unknown anchor rule '" + s + "' (expected sentence_start or sentence_end)");
}

// Byte offsets of every sentence boundary in `text`.
inline std::vector<std::size_t> sentence_boundaries(std::string_view text) {
    std::vector<std::size_t> out;
    std::size_t i = 0;
    while (i < text.size() && is_space(text[i])) ++i;
    if (i < text.size()) out.push_back(i);
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        std::size_t j = i + 1;
        while (j < text.size() && is_space(text[j])) ++j;
        if (j > i + 1 && j < text.size() && std::isupper(static_cast<unsigned char>(text[j]))) out.push_back(j);
    }
    return out;
}

inline std::vector<std::string> split_sentences(std::string_view text) {
    const auto b = sentence_boundaries(text);
    std::vector<std::string> out;
    for (std::size_t k = 0; k < b.size(); ++k) {
        const std::size_t end = k + 1 < b.size() ? b[k + 1] : text.size();
        out.emplace_back(text.substr(b[k], end - b[k]));
    }
    return out;
}

struct NaturalSelection {
    Corpus corpus;
    std::size_t requested = 0;
    std::size_t found = 0;
    std::size_t skipped_short = 0;

    bool complete() const { return found == requested; }
};

inline NaturalSelection select_natural(std::string_view text, AnchorRule rule, std::size_t tokens, std::size_t count) {
    if (tokens == 0) throw InvalidArgument("T must be positive");
    if (count == 0) throw InvalidArgument("S must be positive");
    NaturalSelection sel;
    sel.requested = count;
    std::vector<std::string> lines;
    for (const auto& sentence : split_sentences(text)) {
        if (lines.size() == count) break;
        const auto toks = tokenize(sentence);
        if (toks.size() < tokens) {
            ++sel.skipped_short;
            continue;
        }
        const std::size_t from = rule == AnchorRule::sentence_start ? 0 : toks.size() - tokens;
        std::string line;
        for (std::size_t k = from; k < from + tokens; ++k) {
            if (k > from) line += ' ';
            line += toks[k];
        }
        lines.push_back(std::move(line));
    }
    sel.found = lines.size();
    if (lines.empty()) throw InvalidArgument("no sentence with at least " + std::to_string(tokens) + " tokens");
    sel.corpus = Corpus::from_lines({tokens, lines.size(), DomainTag::natural, std::nullopt},
                                    std::string("natural-") + to_string(rule), 0,
                                    Json{{"rule", to_string(rule)}, {"requested", count}, {"found", lines.size()}},
                                    std::move(lines));
    return sel;
}

inline NaturalSelection select_natural(std::istream& in, AnchorRule rule, std::size_t tokens, std::size_t count) {
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return select_natural(std::string_view(text), rule, tokens, count);
}

} // namespace ie
