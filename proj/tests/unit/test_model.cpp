#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "ie/data/icl.hpp"
#include "ie/model/extract.hpp"

using namespace ie;
namespace fs = std::filesystem;

namespace {

struct Toy {
    Corpus corpus;
    Vocabulary vocab;
    ToyTransformer model;
};

Toy toy(std::vector<std::string> lines, std::uint64_t seed = 1, std::size_t width = 64) {
    Toy t;
    const std::size_t tokens = tokenize(lines.front()).size();
    t.corpus = Corpus::from_lines({tokens, lines.size(), DomainTag::custom, std::nullopt}, "test", 0, Json::object(),
                                  lines);
    t.vocab = Vocabulary::from_lines(lines);
    ToyModelConfig cfg;
    cfg.vocab_size = t.vocab.size();
    cfg.width = width;
    cfg.seed = seed;
    t.model = ToyTransformer(cfg);
    return t;
}

fs::path temp(const std::string& name) {
    return fs::temp_directory_path() / ("ie_model_" + std::to_string(::getpid()) + "_" + name);
}

} // namespace

TEST(ToyModel, ConfigValidation) {
    ToyModelConfig c;
    c.vocab_size = 10;
    EXPECT_NO_THROW(c.validate());
    c.heads = 5;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c.heads = 4;
    c.blocks = 1;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c.blocks = 4;
    c.vocab_size = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    ToyModelConfig d;
    d.vocab_size = 3;
    d.seed = 9;
    EXPECT_EQ(Json(d).get<ToyModelConfig>(), d);
}

TEST(ToyModel, MacroStoreShape) {
    const auto t = toy({"a b c d e f g h", "h g f e d c b a"});
    const auto store = run_macro(t.model, t.vocab, t.corpus);
    EXPECT_EQ(store.dims(), (StoreDims{2, 4, 8, 64}));
    EXPECT_EQ(store.mode(), StoreMode::macro);
    EXPECT_TRUE(validate_store(store).ok());
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t k = 0; k < 8; ++k) {
            EXPECT_EQ(store.slice(l, k).rows(), 2);
            EXPECT_EQ(store.slice(l, k).cols(), 64);
        }
}

TEST(ToyModel, LaterTokensDoNotAffectEarlierPositions) {
    const auto t = toy({"a b c d e f g h", "a b c d e f g a", "a b c d h h h h"});
    const auto store = run_macro(t.model, t.vocab, t.corpus);
    for (std::size_t l = 0; l < 4; ++l) {
        for (std::size_t k = 0; k <= 3; ++k) {
            const Slice& s = store.slice(l, k);
            EXPECT_EQ(s.row(0), s.row(1));
            EXPECT_EQ(s.row(0), s.row(2));
        }
        EXPECT_EQ(store.slice(l, 6).row(0), store.slice(l, 6).row(1));
        EXPECT_NE(store.slice(l, 7).row(0), store.slice(l, 7).row(1));
        EXPECT_NE(store.slice(l, 4).row(0), store.slice(l, 4).row(2));
    }
}

TEST(ToyModel, RandomSuffixPerturbationLeavesPrefixBitwise) {
    std::vector<std::string> words{"x", "y", "z", "w", "v"};
    Rng rng(5);
    std::vector<std::string> lines;
    std::string prefix = "x y z w";
    for (int i = 0; i < 20; ++i) {
        std::string s = prefix;
        for (int k = 0; k < 4; ++k) s += " " + words[rng.below(words.size())];
        lines.push_back(s);
    }
    const auto t = toy(lines, 3);
    const auto store = run_macro(t.model, t.vocab, t.corpus);
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t k = 0; k < 4; ++k)
            for (Eigen::Index r = 1; r < 20; ++r) ASSERT_EQ(store.slice(l, k).row(r), store.slice(l, k).row(0));
}

TEST(ToyModel, SameSeedIsBitwiseReproducible) {
    const auto a = toy({"a b c", "c b a", "b b b"}, 11);
    const auto b = toy({"a b c", "c b a", "b b b"}, 11);
    EXPECT_TRUE(a.model == b.model);
    EXPECT_TRUE(run_macro(a.model, a.vocab, a.corpus) == run_macro(b.model, b.vocab, b.corpus));
    const auto c = toy({"a b c", "c b a", "b b b"}, 12);
    EXPECT_FALSE(run_macro(a.model, a.vocab, a.corpus).slice(0, 0) ==
                 run_macro(c.model, c.vocab, c.corpus).slice(0, 0));
}

TEST(ToyModel, ResidualIdentityHoldsExactly) {
    const auto t = toy({"a b c d e"});
    RowMatrixXf h = t.model.embed(t.vocab.encode(t.corpus.line(0)));
    for (std::size_t l = 0; l < t.model.config().blocks; ++l) {
        const auto tr = t.model.block(l, h);
        EXPECT_EQ(tr.input, h);
        const RowMatrixXf recomposed = (tr.input + tr.attention) + tr.mlp;
        EXPECT_EQ(tr.output, recomposed);
        EXPECT_LT(((tr.output - tr.input) - (tr.attention + tr.mlp)).cwiseAbs().maxCoeff(), 1e-5f);
        EXPECT_GT(tr.attention.norm(), 0.0f);
        EXPECT_GT(tr.mlp.norm(), 0.0f);
        h = tr.output;
    }
    EXPECT_EQ(h, t.model.hidden_states(t.vocab.encode(t.corpus.line(0))).back());
}

TEST(ToyModel, MicroEqualsMacroOnSingleTokenCorpus) {
    const auto t = toy({"a", "b", "c", "a"});
    const auto macro = run_macro(t.model, t.vocab, t.corpus);
    const auto micro = run_micro(t.model, t.vocab, t.corpus, MicroPositions::all());
    ASSERT_EQ(micro.dims(), macro.dims());
    for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(micro.slice(l, 0), macro.slice(l, 0));
}

TEST(ToyModel, MicroSliceIsMacroOfLoneToken) {
    const std::vector<std::string> lines{"a b c d", "d c b a", "b a d c"};
    const auto t = toy(lines);
    const auto micro = run_micro(t.model, t.vocab, t.corpus, MicroPositions::all());
    EXPECT_EQ(micro.mode(), StoreMode::micro);
    EXPECT_EQ(micro.dims().tokens, 4u);
    for (std::size_t k = 0; k < 4; ++k) {
        std::vector<std::string> lone;
        for (const auto& s : lines) lone.push_back(tokenize(s)[k]);
        const auto single = Corpus::from_lines({1, lone.size(), DomainTag::custom, std::nullopt}, "lone", 0,
                                               Json::object(), lone);
        const auto ref = run_macro(t.model, t.vocab, single);
        for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(micro.slice(l, k), ref.slice(l, 0)) << l << "," << k;
    }
    const auto first = run_micro(t.model, t.vocab, t.corpus, MicroPositions::first_entity());
    EXPECT_EQ(first.dims().tokens, 1u);
    EXPECT_EQ(first.slice(2, 0), micro.slice(2, 0));
    const auto some = run_micro(t.model, t.vocab, t.corpus, MicroPositions::parse("3,1"));
    EXPECT_EQ(some.dims().tokens, 2u);
    EXPECT_EQ(some.slice(1, 1), micro.slice(1, 3));
    EXPECT_THROW(run_micro(t.model, t.vocab, t.corpus, MicroPositions::parse("4")), InvalidArgument);
}

TEST(ToyModel, MicroPositionsParse) {
    EXPECT_EQ(MicroPositions::parse("all").kind, MicroPositions::Kind::all);
    EXPECT_EQ(MicroPositions::parse("first_entity").resolve(8), (std::vector<std::size_t>{0}));
    EXPECT_EQ(MicroPositions::parse("5,0,2").resolve(8), (std::vector<std::size_t>{0, 2, 5}));
    EXPECT_EQ(MicroPositions::parse("5,0,2").to_string(), "0,2,5");
    EXPECT_THROW(MicroPositions::parse("1,x"), InvalidArgument);
    EXPECT_THROW(MicroPositions::parse("1,1"), InvalidArgument);
}

TEST(ToyModel, OutOfVocabularyTokenIsRejected) {
    const auto t = toy({"a b"});
    const auto other = Corpus::from_lines({2, 1, DomainTag::custom, std::nullopt}, "x", 0, Json::object(), {"a q"});
    EXPECT_THROW(run_macro(t.model, t.vocab, other), OutOfVocabularyError);
}

TEST(ToyModel, SourceIdRecordsProvenance) {
    const auto t = toy({"a b", "b a"});
    const auto f = parse_source_id(run_micro(t.model, t.vocab, t.corpus, MicroPositions::first_entity()).source_id());
    EXPECT_EQ(f.at("model"), "toy");
    EXPECT_EQ(f.at("vocab"), vocabulary_checksum(t.vocab));
    EXPECT_EQ(f.at("corpus"), t.corpus.checksum());
    EXPECT_EQ(f.at("positions"), "first_entity");
}

TEST(ToyModel, WeightsFileRoundtrips) {
    const auto t = toy({"a b c"}, 4, 16);
    const auto path = temp("w.toyw");
    t.model.save(path);
    const auto back = ToyTransformer::load(path);
    EXPECT_TRUE(back == t.model);
    EXPECT_TRUE(run_macro(back, t.vocab, t.corpus) == run_macro(t.model, t.vocab, t.corpus));
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("X", 1);
    }
    EXPECT_THROW(ToyTransformer::load(path), IoError);
    t.model.save(path);
    fs::resize_file(path, fs::file_size(path) - 2);
    EXPECT_THROW(ToyTransformer::load(path), IoError);
    fs::remove(path);
}

TEST(ToyModel, StreamedFilesMatchInMemoryStores) {
    const auto vocab = builtin_vocabulary(DomainTag::color);
    const auto corpus = synth_icl(vocab, 2).subsample(150, 3);
    const auto words = Vocabulary::from_lines(corpus.lines());
    ToyModelConfig cfg;
    cfg.vocab_size = words.size();
    cfg.width = 16;
    const ToyTransformer model(cfg);
    const auto macro = temp("macro.repr1"), micro = temp("micro.repr1");
    extract_to_files(model, words, corpus, macro, micro, MicroPositions::first_entity());
    // A chunk smaller than S exercises the row-block writes.
    RepresentationStore chunked({150, 4, 4, 16}, StoreMode::macro, "x");
    extract_macro(model, words, corpus, detail::store_sink(chunked), 64);
    const auto from_file = read_store(macro);
    EXPECT_TRUE(from_file == run_macro(model, words, corpus));
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(chunked.slice(l, k), from_file.slice(l, k));
    EXPECT_TRUE(read_store(micro) == run_micro(model, words, corpus, MicroPositions::first_entity()));
    fs::remove(macro);
    fs::remove(micro);
}
