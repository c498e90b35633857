#pragma once

// Whitespace/punctuation tokenizer and an explicit token vocabulary.
//
// Words are maximal runs of characters that are neither whitespace nor
// punctuation; every punctuation character is a token of its own. A run of
// n >= 2 spaces in front of a word is kept as n - 1 leading spaces on that
// word, so "A,  B" yields "A", ",", " B" and a leading-space entity is a
// distinct single token.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ie/core/error.hpp"
#include "ie/core/types.hpp"

namespace ie {

class OutOfVocabularyError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

inline bool is_punctuation(char c) {
    switch (c) {
    case ',': case '.': case '!': case '?': case ';': case ':': case '(': case ')': case '"':
        return true;
    default:
        return false;
    }
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    std::size_t spaces = 0; // consecutive ' ' just before i
    while (i < text.size()) {
        const char c = text[i];
        if (is_space(c)) {
            spaces = c == ' ' ? spaces + 1 : 0;
            ++i;
        } else if (is_punctuation(c)) {
            tokens.emplace_back(1, c);
            spaces = 0;
            ++i;
        } else {
            std::size_t j = i;
            while (j < text.size() && !is_space(text[j]) && !is_punctuation(text[j])) ++j;
            std::string word(spaces >= 2 ? spaces - 1 : 0, ' ');
            word.append(text.substr(i, j - i));
            tokens.push_back(std::move(word));
            spaces = 0;
            i = j;
        }
    }
    return tokens;
}

class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (tokens_[i].empty()) throw InvalidArgument("empty token in vocabulary");
            if (!ids_.emplace(tokens_[i], static_cast<std::uint32_t>(i)).second)
                throw InvalidArgument("duplicate token '" + tokens_[i] + "' in vocabulary");
        }
    }

    // Sorted distinct tokens of every line.
    template <typename Lines>
    static Vocabulary from_lines(const Lines& lines) {
        std::set<std::string> seen;
        for (const auto& line : lines)
            for (auto& tok : tokenize(line)) seen.insert(std::move(tok));
        return Vocabulary({seen.begin(), seen.end()});
    }

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(std::uint32_t id) const { return tokens_.at(id); }
    bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }

    std::uint32_t id(const std::string& tok) const {
        const auto it = ids_.find(tok);
        if (it == ids_.end()) throw OutOfVocabularyError("token '" + tok + "' is not in the vocabulary");
        return it->second;
    }

    std::vector<std::uint32_t> encode(std::string_view text) const {
        std::vector<std::uint32_t> ids;
        for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
        return ids;
    }

    Json to_json() const { return Json{{"tokens", tokens_}}; }
    static Vocabulary from_json(const Json& j) { return Vocabulary(j.at("tokens").get<std::vector<std::string>>()); }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path.string());
        out << to_json().dump(1) << '\n';
    }

    static Vocabulary load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path.string());
        return from_json(Json::parse(in));
    }

    bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

} // namespace ie
