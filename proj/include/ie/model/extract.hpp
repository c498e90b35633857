#pragma once

// Hidden-state extraction from the toy model into representation stores.
//
// Macro: each sequence is run whole and block l's output at token t fills
// slice (l, t). Micro: for each requested position t, the model is run on
// the one-token sequence [token_t] and its block outputs fill slice (l, k)
// where k indexes the requested positions in ascending order.
//
// source_id is a ';'-separated list of key=value fields. Every store built
// here carries model, vocab and corpus fields; micro stores add positions.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ie/core/checksum.hpp"
#include "ie/core/error.hpp"
#include "ie/core/types.hpp"
#include "ie/data/corpus.hpp"
#include "ie/io/repr1.hpp"
#include "ie/model/transformer.hpp"
#include "ie/text/tokenizer.hpp"

namespace ie {

struct MicroPositions {
    enum class Kind { all, first_entity, set };
    Kind kind = Kind::all;
    std::vector<std::size_t> set; // Kind::set only, ascending and distinct

    static MicroPositions all() { return {Kind::all, {}}; }
    static MicroPositions first_entity() { return {Kind::first_entity, {}}; }

    // "all", "first_entity", or a comma-separated list such as "0,2,5".
    static MicroPositions parse(const std::string& s) {
        if (s == "all") return all();
        if (s == "first_entity") return first_entity();
        MicroPositions p{Kind::set, {}};
        std::stringstream in(s);
        std::string item;
        while (std::getline(in, item, ',')) {
            try {
                std::size_t used = 0;
                const auto v = std::stoull(item, &used);
                if (used != item.size()) throw std::invalid_argument(item);
                p.set.push_back(static_cast<std::size_t>(v));
            } catch (const std::exception&) {
                throw InvalidArgument("bad micro position '" + item + "' (expected all, first_entity or a list)");
            }
        }
        if (p.set.empty()) throw InvalidArgument("empty micro position list");
        std::sort(p.set.begin(), p.set.end());
        if (std::adjacent_find(p.set.begin(), p.set.end()) != p.set.end())
            throw InvalidArgument("duplicate micro position in '" + s + "'");
        return p;
    }

    std::vector<std::size_t> resolve(std::size_t tokens) const {
        std::vector<std::size_t> out;
        switch (kind) {
        case Kind::all:
            for (std::size_t t = 0; t < tokens; ++t) out.push_back(t);
            break;
        case Kind::first_entity:
            out.push_back(0);
            break;
        case Kind::set:
            out = set;
            break;
        }
        for (auto t : out)
            if (t >= tokens)
                throw InvalidArgument("micro position " + std::to_string(t) + " outside [0, " +
                                      std::to_string(tokens - 1) + "]");
        return out;
    }

    std::string to_string() const {
        if (kind == Kind::all) return "all";
        if (kind == Kind::first_entity) return "first_entity";
        std::string s;
        for (std::size_t i = 0; i < set.size(); ++i) s += (i ? "," : "") + std::to_string(set[i]);
        return s;
    }
};

inline std::map<std::string, std::string> parse_source_id(const std::string& id) {
    std::map<std::string, std::string> out;
    std::stringstream in(id);
    std::string field;
    while (std::getline(in, field, ';')) {
        const auto eq = field.find('=');
        if (eq != std::string::npos) out[field.substr(0, eq)] = field.substr(eq + 1);
    }
    return out;
}

inline std::string vocabulary_checksum(const Vocabulary& vocab) {
    Fnv1a64 h;
    for (const auto& t : vocab.tokens()) {
        h.update(t);
        h.update(std::string_view("\0", 1));
    }
    return h.hex();
}

inline std::string model_source_id(const ToyModelConfig& c, const Vocabulary& vocab, const Corpus& corpus) {
    return "model=toy;blocks=" + std::to_string(c.blocks) + ";width=" + std::to_string(c.width) +
           ";heads=" + std::to_string(c.heads) + ";seed=" + std::to_string(c.seed) +
           ";vocab=" + vocabulary_checksum(vocab) + ";corpus=" + corpus.checksum();
}

// Receives rows [first_row, first_row + block.rows()) of slice (l, t).
using SliceSink = std::function<void(std::size_t l, std::size_t t, std::size_t first_row, const Slice& block)>;

namespace detail {

inline std::vector<std::uint32_t> encode_line(const Vocabulary& vocab, const Corpus& corpus, std::size_t i) {
    auto ids = vocab.encode(corpus.line(i));
    if (ids.size() != corpus.spec().token_count)
        throw InvalidArgument("corpus line " + std::to_string(i) + " has " + std::to_string(ids.size()) +
                              " tokens, expected " + std::to_string(corpus.spec().token_count));
    return ids;
}

inline void check_model_vocab(const ToyTransformer& model, const Vocabulary& vocab) {
    if (model.config().vocab_size != vocab.size())
        throw InvalidArgument("model vocabulary size " + std::to_string(model.config().vocab_size) +
                              " differs from vocabulary file size " + std::to_string(vocab.size()));
}

} // namespace detail

inline constexpr std::size_t kExtractChunk = 1024;

inline void extract_macro(const ToyTransformer& model, const Vocabulary& vocab, const Corpus& corpus,
                          const SliceSink& sink, std::size_t chunk = kExtractChunk) {
    detail::check_model_vocab(model, vocab);
    const std::size_t S = corpus.size(), L = model.config().blocks, T = corpus.spec().token_count;
    const auto D = static_cast<Eigen::Index>(model.config().width);
    std::vector<Slice> buf(L * T);
    for (std::size_t first = 0; first < S; first += chunk) {
        const std::size_t n = std::min(chunk, S - first);
        for (auto& b : buf) b.resize(static_cast<Eigen::Index>(n), D);
        for (std::size_t r = 0; r < n; ++r) {
            const auto hs = model.hidden_states(detail::encode_line(vocab, corpus, first + r));
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t t = 0; t < T; ++t)
                    buf[l * T + t].row(static_cast<Eigen::Index>(r)) = hs[l].row(static_cast<Eigen::Index>(t));
        }
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t t = 0; t < T; ++t) sink(l, t, first, buf[l * T + t]);
    }
}

// Lone-token representations depend only on the token id, so each distinct
// id is run once.
inline void extract_micro(const ToyTransformer& model, const Vocabulary& vocab, const Corpus& corpus,
                          const std::vector<std::size_t>& positions, const SliceSink& sink,
                          std::size_t chunk = kExtractChunk) {
    detail::check_model_vocab(model, vocab);
    const std::size_t S = corpus.size(), L = model.config().blocks;
    const auto D = static_cast<Eigen::Index>(model.config().width);
    std::map<std::uint32_t, std::vector<RowMatrixXf>> cache;
    std::vector<Slice> buf(L * positions.size());
    for (std::size_t first = 0; first < S; first += chunk) {
        const std::size_t n = std::min(chunk, S - first);
        for (auto& b : buf) b.resize(static_cast<Eigen::Index>(n), D);
        for (std::size_t r = 0; r < n; ++r) {
            const auto ids = detail::encode_line(vocab, corpus, first + r);
            for (std::size_t k = 0; k < positions.size(); ++k) {
                const std::uint32_t id = ids[positions[k]];
                auto it = cache.find(id);
                if (it == cache.end()) it = cache.emplace(id, model.hidden_states({id})).first;
                for (std::size_t l = 0; l < L; ++l)
                    buf[l * positions.size() + k].row(static_cast<Eigen::Index>(r)) = it->second[l].row(0);
            }
        }
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t k = 0; k < positions.size(); ++k) sink(l, k, first, buf[l * positions.size() + k]);
    }
}

namespace detail {

inline SliceSink store_sink(RepresentationStore& store) {
    const auto d = store.dims();
    for (std::size_t l = 0; l < d.layers; ++l)
        for (std::size_t t = 0; t < d.tokens; ++t)
            store.set_slice(l, t, Slice(static_cast<Eigen::Index>(d.samples), static_cast<Eigen::Index>(d.width)));
    return [&store](std::size_t l, std::size_t t, std::size_t first, const Slice& b) {
        store.mutable_slice(l, t).middleRows(static_cast<Eigen::Index>(first), b.rows()) = b;
    };
}

} // namespace detail

inline RepresentationStore run_macro(const ToyTransformer& model, const Vocabulary& vocab, const Corpus& corpus) {
    RepresentationStore store({corpus.size(), model.config().blocks, corpus.spec().token_count, model.config().width},
                              StoreMode::macro, model_source_id(model.config(), vocab, corpus));
    extract_macro(model, vocab, corpus, detail::store_sink(store));
    return store;
}

inline RepresentationStore run_micro(const ToyTransformer& model, const Vocabulary& vocab, const Corpus& corpus,
                                     const MicroPositions& which) {
    const auto positions = which.resolve(corpus.spec().token_count);
    RepresentationStore store({corpus.size(), model.config().blocks, positions.size(), model.config().width},
                              StoreMode::micro,
                              model_source_id(model.config(), vocab, corpus) + ";positions=" + which.to_string());
    extract_micro(model, vocab, corpus, positions, detail::store_sink(store));
    return store;
}

// Streams both stores straight to REPR1 files; memory stays O(chunk * L * T * D).
inline void extract_to_files(const ToyTransformer& model, const Vocabulary& vocab, const Corpus& corpus,
                             const std::filesystem::path& macro_path, const std::filesystem::path& micro_path,
                             const MicroPositions& which) {
    const std::string id = model_source_id(model.config(), vocab, corpus);
    const std::size_t S = corpus.size(), L = model.config().blocks, D = model.config().width;
    Repr1Writer macro(macro_path, {S, L, corpus.spec().token_count, D}, StoreMode::macro, id);
    extract_macro(model, vocab, corpus, [&](std::size_t l, std::size_t t, std::size_t first, const Slice& b) {
        macro.write_rows(l, t, first, b);
    });
    const auto positions = which.resolve(corpus.spec().token_count);
    Repr1Writer micro(micro_path, {S, L, positions.size(), D}, StoreMode::micro, id + ";positions=" + which.to_string());
    extract_micro(model, vocab, corpus, positions, [&](std::size_t l, std::size_t t, std::size_t first, const Slice& b) {
        micro.write_rows(l, t, first, b);
    });
    macro.finish();
    micro.finish();
}

} // namespace ie
