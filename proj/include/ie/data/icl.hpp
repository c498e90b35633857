#pragma once

// In-context-learning corpora: ordered arrangements of distinct entities,
// each shot rendered as "Entity," (two tokens), plus the ablation and
// pattern variants and the generation-accuracy rule.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ie/core/error.hpp"
#include "ie/core/types.hpp"
#include "ie/data/corpus.hpp"
#include "ie/text/tokenizer.hpp"

#ifndef IE_DATA_DIR
#define IE_DATA_DIR "data"
#endif

namespace ie {

inline constexpr std::size_t kTokensPerShot = 2;

inline std::optional<std::size_t> expected_entity_count(DomainTag d) {
    switch (d) {
    case DomainTag::country: return 25;
    case DomainTag::animal: return 16;
    case DomainTag::color: return 15;
    default: return std::nullopt;
    }
}

struct EntityVocabulary {
    DomainTag domain = DomainTag::custom;
    std::vector<std::string> entities;
    std::map<std::string, std::vector<std::string>> regions; // e.g. "asia" -> members
    std::vector<std::string> size_order;                      // smallest first

    std::size_t size() const { return entities.size(); }

    std::optional<std::size_t> index_of(const std::string& e) const {
        const auto it = std::find(entities.begin(), entities.end(), e);
        if (it == entities.end()) return std::nullopt;
        return static_cast<std::size_t>(it - entities.begin());
    }

    void validate() const {
        if (entities.empty()) throw InvalidArgument("entity vocabulary is empty");
        std::set<std::string> seen;
        for (const auto& e : entities) {
            if (e.empty()) throw InvalidArgument("empty entity name");
            if (!seen.insert(e).second) throw InvalidArgument("duplicate entity '" + e + "'");
        }
        if (const auto n = expected_entity_count(domain); n && *n != entities.size())
            throw InvalidArgument(std::string(to_string(domain)) + " vocabulary needs " + std::to_string(*n) +
                                  " entities, has " + std::to_string(entities.size()));
        for (const auto& [name, members] : regions)
            for (const auto& m : members)
                if (!seen.count(m)) throw InvalidArgument("region '" + name + "' lists unknown entity '" + m + "'");
        for (const auto& m : size_order)
            if (!seen.count(m)) throw InvalidArgument("size order lists unknown entity '" + m + "'");
    }
};

inline void to_json(Json& j, const EntityVocabulary& v) {
    j = Json{{"domain", to_string(v.domain)}, {"entities", v.entities}};
    if (!v.regions.empty()) j["regions"] = v.regions;
    if (!v.size_order.empty()) j["size_order"] = v.size_order;
}

inline void from_json(const Json& j, EntityVocabulary& v) {
    v.domain = parse_domain(j.at("domain").get<std::string>());
    v.entities = j.at("entities").get<std::vector<std::string>>();
    v.regions = j.value("regions", std::map<std::string, std::vector<std::string>>{});
    v.size_order = j.value("size_order", std::vector<std::string>{});
}

inline EntityVocabulary load_entity_vocabulary(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    auto v = Json::parse(in).get<EntityVocabulary>();
    v.validate();
    return v;
}

inline std::filesystem::path default_data_dir() { return IE_DATA_DIR; }

// Shipped list for country, animal or color.
inline EntityVocabulary builtin_vocabulary(DomainTag d, const std::filesystem::path& data_dir = default_data_dir()) {
    if (!expected_entity_count(d)) throw InvalidArgument(std::string("no shipped entity list for ") + to_string(d));
    return load_entity_vocabulary(data_dir / "entities" / (std::string(to_string(d)) + ".json"));
}

struct EntityWidth {
    std::string entity;
    std::size_t tokens = 0;
};

// Entities that do not tokenize to exactly one token (with the given prefix).
inline std::vector<EntityWidth> audit_entity_widths(const EntityVocabulary& v, const std::string& prefix = "") {
    std::vector<EntityWidth> bad;
    for (const auto& e : v.entities) {
        // Rendered as it appears after an earlier shot.
        const auto toks = tokenize(", " + prefix + e);
        if (toks.size() != 2) bad.push_back({e, toks.size() - 1});
    }
    return bad;
}

inline void require_single_token_entities(const EntityVocabulary& v, const std::string& prefix = "") {
    const auto bad = audit_entity_widths(v, prefix);
    if (bad.empty()) return;
    std::string msg = "vocabulary rejected, entities must be single tokens:";
    for (const auto& b : bad) msg += " '" + b.entity + "' is " + std::to_string(b.tokens) + " tokens;";
    throw InvalidArgument(msg);
}

// n * (n-1) * ... * (n-k+1)
inline std::size_t arrangement_count(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    std::size_t c = 1;
    for (std::size_t i = 0; i < k; ++i) c *= n - i;
    return c;
}

// The i-th k-arrangement of {0..n-1} in lexicographic order.
inline std::vector<std::size_t> unrank_arrangement(std::size_t n, std::size_t k, std::size_t rank) {
    std::vector<std::size_t> out;
    std::vector<bool> used(n, false);
    for (std::size_t p = 0; p < k; ++p) {
        const std::size_t block = arrangement_count(n - p - 1, k - p - 1);
        std::size_t digit = rank / block;
        rank %= block;
        for (std::size_t e = 0; e < n; ++e) {
            if (used[e]) continue;
            if (digit-- == 0) {
                used[e] = true;
                out.push_back(e);
                break;
            }
        }
    }
    return out;
}

// "A, B, C," with an optional extra leading space on one shot (0-based).
inline std::string render_shots(const std::vector<std::string>& entities, std::optional<std::size_t> spaced_shot = {}) {
    std::string s;
    for (std::size_t i = 0; i < entities.size(); ++i) {
        if (i) s += ' ';
        if (spaced_shot && *spaced_shot == i) s += i ? " " : "  ";
        s += entities[i];
        s += ',';
    }
    return s;
}

namespace detail {

inline Corpus arrangement_corpus(std::vector<std::string> pool, std::size_t shots, DomainTag domain,
                                 std::string generator_id, Json params, std::optional<std::size_t> spaced_shot,
                                 bool comma_prefix) {
    if (shots == 0) throw InvalidArgument("need at least one shot");
    if (shots > pool.size())
        throw InvalidArgument(std::to_string(shots) + " shots need " + std::to_string(shots) +
                              " distinct entities, vocabulary has " + std::to_string(pool.size()));
    const std::size_t count = arrangement_count(pool.size(), shots);
    const std::size_t tokens = kTokensPerShot * shots + (comma_prefix ? 1 : 0);
    const SequenceSpec spec{tokens, count, domain,
                            comma_prefix ? std::nullopt : std::optional<std::size_t>(kTokensPerShot)};
    auto shared = std::make_shared<const std::vector<std::string>>(std::move(pool));
    params["shots"] = shots;
    params["entities"] = *shared;
    return Corpus(spec, std::move(generator_id), 0, std::move(params), count,
                  [shared, shots, spaced_shot, comma_prefix](std::size_t i) {
                      const auto idx = unrank_arrangement(shared->size(), shots, i);
                      std::vector<std::string> picked;
                      for (auto e : idx) picked.push_back((*shared)[e]);
                      std::string s = render_shots(picked, spaced_shot);
                      return comma_prefix ? "," + s : s;
                  });
}

} // namespace detail

// Every ordered arrangement of `shots` distinct entities, lexicographic over
// entity indices.
inline Corpus synth_icl(const EntityVocabulary& vocab, std::size_t shots) {
    vocab.validate();
    require_single_token_entities(vocab);
    return detail::arrangement_corpus(vocab.entities, shots, vocab.domain, "icl", Json::object(), std::nullopt, false);
}

enum class AblationVariant { candidate, fusion1, fusion2, space, prefix };

inline const char* to_string(AblationVariant v) {
    switch (v) {
    case AblationVariant::candidate: return "candidate";
    case AblationVariant::fusion1: return "fusion1";
    case AblationVariant::fusion2: return "fusion2";
    case AblationVariant::space: return "space";
    case AblationVariant::prefix: return "prefix";
    }
    return "?";
}

inline AblationVariant parse_ablation(const std::string& s) {
    for (auto v : {AblationVariant::candidate, AblationVariant::fusion1, AblationVariant::fusion2,
                   AblationVariant::space, AblationVariant::prefix})
        if (s == to_string(v)) return v;
    throw InvalidArgument("unknown ablation variant '" + s + "'");
}

inline constexpr std::size_t kCandidatePool = 15;
inline constexpr std::size_t kSpacedShot = 3; // the 4th shot

// Ablation corpora over a base vocabulary. fusion1 needs one extra pool and
// fusion2 two; their entities are appended after the base entities.
inline Corpus synth_ablation(const EntityVocabulary& base, std::size_t shots, AblationVariant variant,
                             const std::vector<EntityVocabulary>& fusion_pools = {}) {
    base.validate();
    require_single_token_entities(base);
    Json params{{"variant", to_string(variant)}, {"base_domain", to_string(base.domain)}};
    const std::string id = std::string("icl-ablation-") + to_string(variant);
    switch (variant) {
    case AblationVariant::candidate: {
        if (base.size() <= kCandidatePool)
            throw InvalidArgument("candidate needs more than " + std::to_string(kCandidatePool) + " base entities");
        std::vector<std::string> pool(base.entities.begin(), base.entities.begin() + kCandidatePool);
        return detail::arrangement_corpus(std::move(pool), shots, DomainTag::custom, id, params, std::nullopt, false);
    }
    case AblationVariant::fusion1:
    case AblationVariant::fusion2: {
        const std::size_t need = variant == AblationVariant::fusion1 ? 1 : 2;
        if (fusion_pools.size() != need)
            throw InvalidArgument(std::string(to_string(variant)) + " needs " + std::to_string(need) +
                                  " extra vocabularies, got " + std::to_string(fusion_pools.size()));
        std::vector<std::string> pool = base.entities;
        Json domains = Json::array({to_string(base.domain)});
        for (const auto& extra : fusion_pools) {
            extra.validate();
            require_single_token_entities(extra);
            pool.insert(pool.end(), extra.entities.begin(), extra.entities.end());
            domains.push_back(to_string(extra.domain));
        }
        if (std::set<std::string>(pool.begin(), pool.end()).size() != pool.size())
            throw InvalidArgument("fusion pools share entities");
        params["domains"] = domains;
        return detail::arrangement_corpus(std::move(pool), shots, DomainTag::custom, id, params, std::nullopt, false);
    }
    case AblationVariant::space:
        if (shots <= kSpacedShot) throw InvalidArgument("space needs at least " + std::to_string(kSpacedShot + 1) + " shots");
        require_single_token_entities(base, " ");
        return detail::arrangement_corpus(base.entities, shots, base.domain, id, params, kSpacedShot, false);
    case AblationVariant::prefix:
        return detail::arrangement_corpus(base.entities, shots, base.domain, id, params, std::nullopt, true);
    }
    throw InvalidArgument("unknown ablation variant");
}

enum class PatternKind { asia, europe, size, alphabet };

inline const char* to_string(PatternKind p) {
    switch (p) {
    case PatternKind::asia: return "asia";
    case PatternKind::europe: return "europe";
    case PatternKind::size: return "size";
    case PatternKind::alphabet: return "alphabet";
    }
    return "?";
}

inline PatternKind parse_pattern(const std::string& s) {
    for (auto p : {PatternKind::asia, PatternKind::europe, PatternKind::size, PatternKind::alphabet})
        if (s == to_string(p)) return p;
    throw InvalidArgument("unknown pattern '" + s + "'");
}

inline char first_letter(const std::string& e) {
    for (char c : e)
        if (c != ' ') return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return '\0';
}

// Whether a sequence of entities satisfies the pattern. Entities must be
// distinct members of the vocabulary.
inline bool pattern_holds(PatternKind pattern, const EntityVocabulary& vocab, const std::vector<std::string>& seq) {
    if (std::set<std::string>(seq.begin(), seq.end()).size() != seq.size()) return false;
    for (const auto& e : seq)
        if (!vocab.index_of(e)) return false;
    switch (pattern) {
    case PatternKind::asia:
    case PatternKind::europe: {
        const auto it = vocab.regions.find(to_string(pattern));
        if (it == vocab.regions.end()) return false;
        for (const auto& e : seq)
            if (std::find(it->second.begin(), it->second.end(), e) == it->second.end()) return false;
        return true;
    }
    case PatternKind::size: {
        std::optional<std::size_t> prev;
        for (const auto& e : seq) {
            const auto it = std::find(vocab.size_order.begin(), vocab.size_order.end(), e);
            if (it == vocab.size_order.end()) return false;
            const auto rank = static_cast<std::size_t>(it - vocab.size_order.begin());
            if (prev && rank <= *prev) return false;
            prev = rank;
        }
        return true;
    }
    case PatternKind::alphabet:
        for (std::size_t i = 1; i < seq.size(); ++i)
            if (first_letter(seq[i]) < first_letter(seq[i - 1])) return false;
        return true;
    }
    return false;
}

// Entity names of a rendered "A, B, C," line.
inline std::vector<std::string> parse_shots(const std::string& line) {
    std::vector<std::string> out;
    for (const auto& tok : tokenize(line)) {
        if (tok == ",") continue;
        std::size_t b = tok.find_first_not_of(' ');
        out.push_back(b == std::string::npos ? tok : tok.substr(b));
    }
    return out;
}

// Every arrangement of `shots` entities that satisfies the pattern, in
// lexicographic order over entity indices.
inline Corpus synth_pattern(const EntityVocabulary& vocab, PatternKind pattern, std::size_t shots) {
    vocab.validate();
    require_single_token_entities(vocab);
    if (shots == 0) throw InvalidArgument("need at least one shot");
    std::vector<std::string> pool;
    switch (pattern) {
    case PatternKind::asia:
    case PatternKind::europe: {
        const auto it = vocab.regions.find(to_string(pattern));
        if (it == vocab.regions.end())
            throw InvalidArgument(std::string("vocabulary has no '") + to_string(pattern) + "' region metadata");
        for (const auto& e : vocab.entities)
            if (std::find(it->second.begin(), it->second.end(), e) != it->second.end()) pool.push_back(e);
        break;
    }
    case PatternKind::size:
        if (vocab.size_order.empty()) throw InvalidArgument("vocabulary has no size order metadata");
        for (const auto& e : vocab.entities)
            if (std::find(vocab.size_order.begin(), vocab.size_order.end(), e) != vocab.size_order.end())
                pool.push_back(e);
        break;
    case PatternKind::alphabet:
        pool = vocab.entities;
        break;
    }
    if (shots > pool.size())
        throw InvalidArgument(std::string("pattern '") + to_string(pattern) + "' has " + std::to_string(pool.size()) +
                              " qualifying entities, fewer than " + std::to_string(shots) + " shots");

    std::vector<std::string> lines;
    std::vector<std::string> seq;
    std::vector<bool> used(pool.size(), false);
    // Depth-first over entity indices, pruning prefixes that break the pattern.
    auto extend = [&](auto&& self) -> void {
        if (seq.size() == shots) {
            lines.push_back(render_shots(seq));
            return;
        }
        for (std::size_t e = 0; e < pool.size(); ++e) {
            if (used[e]) continue;
            seq.push_back(pool[e]);
            if (pattern_holds(pattern, vocab, seq)) {
                used[e] = true;
                self(self);
                used[e] = false;
            }
            seq.pop_back();
        }
    };
    extend(extend);
    if (lines.empty()) throw InvalidArgument("no sequence satisfies the pattern");
    return Corpus::from_lines({kTokensPerShot * shots, lines.size(), vocab.domain, kTokensPerShot},
                              std::string("icl-pattern-") + to_string(pattern), 0,
                              Json{{"pattern", to_string(pattern)}, {"shots", shots}}, std::move(lines));
}

struct GenerationVerdict {
    std::string text;
    std::optional<std::string> entity; // matched vocabulary entry
    bool correct = false;
    std::string reason; // "ok", "out_of_domain" or "repetition"
};

struct IclScore {
    double accuracy = 0.0;
    std::vector<GenerationVerdict> verdicts;
};

inline std::string normalize_generation(const std::string& g) {
    const auto b = g.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = g.find_last_not_of(" \t\r\n,.");
    if (e == std::string::npos || e < b) return {};
    return g.substr(b, e - b + 1);
}

inline std::string lowercase(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// A generation is correct iff it names an entity of the vocabulary
// (case-insensitive) that appears neither in the context nor in an earlier
// generation. Accuracy over an empty list is 0.
inline IclScore score_icl_generations(const std::vector<std::string>& generations, const EntityVocabulary& vocab,
                                      const std::vector<std::string>& context_entities) {
    std::map<std::string, std::string> canonical;
    for (const auto& e : vocab.entities) canonical.emplace(lowercase(e), e);
    std::set<std::string> seen;
    for (const auto& c : context_entities) seen.insert(lowercase(normalize_generation(c)));
    IclScore score;
    std::size_t correct = 0;
    for (const auto& g : generations) {
        GenerationVerdict v{g, std::nullopt, false, "out_of_domain"};
        const std::string key = lowercase(normalize_generation(g));
        if (const auto it = canonical.find(key); it != canonical.end()) {
            v.entity = it->second;
            if (seen.count(key)) {
                v.reason = "repetition";
            } else {
                v.correct = true;
                v.reason = "ok";
                ++correct;
            }
        }
        seen.insert(key);
        score.verdicts.push_back(std::move(v));
    }
    if (!generations.empty()) score.accuracy = static_cast<double>(correct) / static_cast<double>(generations.size());
    return score;
}

} // namespace ie
