#pragma once

// A corpus is an ordered, possibly lazily rendered list of text sequences
// with its shape, generator identity and seed. Large combinatorial corpora
// render line i on demand instead of holding every line.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ie/core/checksum.hpp"
#include "ie/core/error.hpp"
#include "ie/core/random.hpp"
#include "ie/core/types.hpp"
#include "ie/text/tokenizer.hpp"

namespace ie {

struct CorpusManifest {
    SequenceSpec spec;
    std::string generator_id;
    std::uint64_t seed = 0;
    std::size_t sequence_count = 0;
    std::string checksum;
    Json params = Json::object();

    bool operator==(const CorpusManifest&) const = default;
};

inline void to_json(Json& j, const CorpusManifest& m) {
    j = Json{{"spec", m.spec},
             {"generator_id", m.generator_id},
             {"seed", m.seed},
             {"sequence_count", m.sequence_count},
             {"checksum", m.checksum},
             {"params", m.params}};
}

inline void from_json(const Json& j, CorpusManifest& m) {
    m.spec = j.at("spec").get<SequenceSpec>();
    m.generator_id = j.at("generator_id").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.sequence_count = j.at("sequence_count").get<std::size_t>();
    m.checksum = j.at("checksum").get<std::string>();
    m.params = j.value("params", Json::object());
}

class Corpus {
public:
    using Render = std::function<std::string(std::size_t)>;

    Corpus() = default;
    Corpus(SequenceSpec spec, std::string generator_id, std::uint64_t seed, Json params, std::size_t count,
           Render render)
        : spec_(spec), generator_id_(std::move(generator_id)), seed_(seed), params_(std::move(params)),
          count_(count), render_(std::move(render)) {
        spec_.sequences = count_;
        spec_.validate();
    }

    static Corpus from_lines(SequenceSpec spec, std::string generator_id, std::uint64_t seed, Json params,
                             std::vector<std::string> lines) {
        auto shared = std::make_shared<const std::vector<std::string>>(std::move(lines));
        const std::size_t n = shared->size();
        return Corpus(spec, std::move(generator_id), seed, std::move(params), n,
                      [shared](std::size_t i) { return (*shared)[i]; });
    }

    const SequenceSpec& spec() const { return spec_; }
    const std::string& generator_id() const { return generator_id_; }
    std::uint64_t seed() const { return seed_; }
    const Json& params() const { return params_; }
    std::size_t size() const { return count_; }

    std::string line(std::size_t i) const {
        if (i >= count_) throw InvalidArgument("corpus line " + std::to_string(i) + " out of range");
        return render_(i);
    }

    template <typename F>
    void for_each(F&& f) const {
        for (std::size_t i = 0; i < count_; ++i) f(i, render_(i));
    }

    std::vector<std::string> lines() const {
        std::vector<std::string> out;
        out.reserve(count_);
        for_each([&](std::size_t, std::string s) { out.push_back(std::move(s)); });
        return out;
    }

    // FNV-1a over every line followed by '\n', i.e. the checksum of the
    // corpus file as written by write().
    std::string checksum() const {
        Fnv1a64 h;
        for_each([&](std::size_t, const std::string& s) {
            h.update(s);
            h.update("\n");
        });
        return h.hex();
    }

    CorpusManifest manifest() const { return {spec_, generator_id_, seed_, count_, checksum(), params_}; }

    // n distinct lines chosen uniformly by `seed`, kept in corpus order.
    Corpus subsample(std::size_t n, std::uint64_t seed) const {
        if (n > count_) throw InvalidArgument("cannot subsample " + std::to_string(n) + " of " + std::to_string(count_));
        Rng rng(seed);
        // Floyd's algorithm: n draws, no rejection loop.
        std::unordered_set<std::size_t> chosen;
        chosen.reserve(n * 2);
        for (std::size_t j = count_ - n; j < count_; ++j) {
            const auto r = static_cast<std::size_t>(rng.below(j + 1));
            if (!chosen.insert(r).second) chosen.insert(j);
        }
        auto idx = std::make_shared<std::vector<std::size_t>>(chosen.begin(), chosen.end());
        std::sort(idx->begin(), idx->end());
        Json params = params_;
        params["subsample"] = Json{{"n", n}, {"seed", seed}, {"of", count_}};
        auto parent = render_;
        return Corpus(spec_, generator_id_, seed_, std::move(params), n,
                      [idx, parent](std::size_t i) { return parent((*idx)[i]); });
    }

    // Writes one sequence per line; returns the checksum of the written bytes.
    std::string write(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        Fnv1a64 h;
        for_each([&](std::size_t, const std::string& s) {
            out << s << '\n';
            h.update(s);
            h.update("\n");
        });
        out.close();
        if (!out) throw IoError("write failed for " + path.string());
        return h.hex();
    }

private:
    SequenceSpec spec_;
    std::string generator_id_;
    std::uint64_t seed_ = 0;
    Json params_ = Json::object();
    std::size_t count_ = 0;
    Render render_;
};

// Reads a corpus file (one sequence per line) and checks that every line
// tokenizes to the same length.
inline Corpus load_corpus(const std::filesystem::path& path, DomainTag domain = DomainTag::custom,
                          std::optional<std::size_t> shot_length = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t n = tokenize(line).size();
        if (lines.empty()) width = n;
        else if (n != width)
            throw InvalidArgument(path.string() + ": line " + std::to_string(lines.size() + 1) + " has " +
                                  std::to_string(n) + " tokens, expected " + std::to_string(width));
        lines.push_back(line);
    }
    if (lines.empty()) throw InvalidArgument(path.string() + ": corpus is empty");
    return Corpus::from_lines({width, lines.size(), domain, shot_length}, "file", 0,
                              Json{{"path", path.string()}}, std::move(lines));
}

// Indices of lines whose token count differs from the corpus T.
inline std::vector<std::size_t> token_width_violations(const Corpus& corpus) {
    std::vector<std::size_t> bad;
    corpus.for_each([&](std::size_t i, const std::string& s) {
        if (tokenize(s).size() != corpus.spec().token_count) bad.push_back(i);
    });
    return bad;
}

} // namespace ie
