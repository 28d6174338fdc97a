#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "convotts/corpus_gen.hpp"
#include "convotts/corpus_io.hpp"

using namespace convotts;
namespace fs = std::filesystem;

namespace {

CorpusGenConfig small_cfg() {
    CorpusGenConfig cfg;
    cfg.n_dialogues = 10;
    cfg.turns_per_dialogue = 4;
    cfg.seed = 42;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TEST(Generate, CountsAndSplits) {
    Corpus c = generate_corpus(small_cfg());
    EXPECT_EQ(c.train.size(), 8u);
    EXPECT_EQ(c.valid.size(), 1u);
    EXPECT_EQ(c.eval.size(), 1u);
    EXPECT_EQ(count_agent_turns(c.train) + count_agent_turns(c.valid) +
                  count_agent_turns(c.eval),
              20u);

    // splits disjoint and covering, by dialogue id
    std::set<std::string> ids;
    for (const auto* split : {&c.train, &c.valid, &c.eval})
        for (const Dialogue& d : *split) EXPECT_TRUE(ids.insert(d.id).second) << d.id;
    EXPECT_EQ(ids.size(), 10u);
}

TEST(Generate, DefaultSplitSizes) {
    CorpusGenConfig cfg;  // 72 dialogues
    Corpus c = generate_corpus(cfg);
    EXPECT_EQ(c.train.size(), 60u);
    EXPECT_EQ(c.valid.size(), 6u);
    EXPECT_EQ(c.eval.size(), 6u);
}

TEST(Generate, DeterministicInSeed) {
    Corpus a = generate_corpus(small_cfg());
    Corpus b = generate_corpus(small_cfg());
    EXPECT_TRUE(a == b);

    CorpusGenConfig other = small_cfg();
    other.seed = 43;
    EXPECT_FALSE(a == generate_corpus(other));
}

TEST(Generate, ZeroNoiseHitsPrototypesExactly) {
    CorpusGenConfig cfg = small_cfg();
    cfg.noise_std = 0.0;
    const auto protos = mel_prototypes(cfg);
    Corpus c = generate_corpus(cfg);
    for (const Dialogue& d : c.train) {
        for (const Turn& t : d.turns) {
            if (t.speaker != Speaker::User) continue;
            for (const Sentence& s : t.sentences) {
                ASSERT_TRUE(s.style_id.has_value());
                const Tensor& proto = protos[static_cast<std::size_t>(*s.style_id)];
                for (std::size_t f = 0; f < s.mel.rows(); ++f)
                    for (std::size_t m = 0; m < s.mel.cols(); ++m)
                        ASSERT_EQ(s.mel.at(f, m), proto[m]);
            }
        }
    }
}

TEST(Generate, IdentityMapShiftsStylesByOneTurn) {
    CorpusGenConfig cfg = small_cfg();
    cfg.noise_std = 0.0;
    cfg.style_map.resize(cfg.styles);
    for (std::size_t i = 0; i < cfg.styles; ++i) cfg.style_map[i] = i;
    Corpus c = generate_corpus(cfg);
    for (const auto* split : {&c.train, &c.valid, &c.eval}) {
        for (const Dialogue& d : *split) {
            for (std::size_t i = 1; i < d.turns.size(); i += 2) {
                ASSERT_EQ(d.turns[i].speaker, Speaker::Agent);
                EXPECT_EQ(d.turns[i].sentences[0].style_id,
                          d.turns[i - 1].sentences[0].style_id);
            }
        }
    }
}

TEST(Generate, EmpathyRuleFollowsStyleMap) {
    CorpusGenConfig cfg = small_cfg();
    const auto f = cfg.resolved_style_map();
    Corpus c = generate_corpus(cfg);
    for (const Dialogue& d : c.train) {
        for (std::size_t i = 1; i < d.turns.size(); i += 2) {
            const int u = *d.turns[i - 1].sentences[0].style_id;
            EXPECT_EQ(*d.turns[i].sentences[0].style_id,
                      static_cast<int>(f[static_cast<std::size_t>(u)]));
        }
    }
}

TEST(Generate, PrototypesKeepTheirDistance) {
    CorpusGenConfig cfg;
    cfg.styles = 6;
    for (const auto& table : {mel_prototypes(cfg), feature_prototypes(cfg)}) {
        ASSERT_EQ(table.size(), 6u);
        for (std::size_t a = 0; a < table.size(); ++a) {
            for (std::size_t b = a + 1; b < table.size(); ++b) {
                double d2 = 0.0;
                for (std::size_t m = 0; m < cfg.mel_dim; ++m) {
                    const double diff = table[a][m] - table[b][m];
                    d2 += diff * diff;
                }
                EXPECT_GE(d2, 1.0) << "prototypes " << a << "," << b;
            }
        }
    }
}

TEST(Generate, AgentFramesMatchTokenCount) {
    Corpus c = generate_corpus(small_cfg());
    for (const Dialogue& d : c.train)
        for (const Turn& t : d.turns)
            if (t.speaker == Speaker::Agent)
                for (const Sentence& s : t.sentences)
                    EXPECT_EQ(s.mel.rows(), s.tokens.size());
}

TEST(Generate, RejectsBadConfigs) {
    CorpusGenConfig cfg = small_cfg();
    cfg.styles = 1;
    EXPECT_THROW(generate_corpus(cfg), ConfigError);

    cfg = small_cfg();
    cfg.noise_std = -0.5;
    EXPECT_THROW(generate_corpus(cfg), ConfigError);

    cfg = small_cfg();
    cfg.turns_per_dialogue = 3;
    EXPECT_THROW(generate_corpus(cfg), ConfigError);

    cfg = small_cfg();
    cfg.style_map = {0, 0, 1, 2};  // not a permutation
    EXPECT_THROW(generate_corpus(cfg), ConfigError);

    cfg = small_cfg();
    cfg.style_map = {0, 1};  // wrong size
    EXPECT_THROW(generate_corpus(cfg), ConfigError);
}

TEST(CorpusIo, RoundTripIdentity) {
    Corpus c = generate_corpus(small_cfg());
    fs::path dir = fresh_dir("convotts_corpus_rt");
    save_corpus(c, dir);
    Corpus loaded = load_corpus(dir);
    EXPECT_TRUE(c == loaded);
}

TEST(CorpusIo, SaveIsByteDeterministic) {
    Corpus c = generate_corpus(small_cfg());
    fs::path a = fresh_dir("convotts_corpus_a");
    fs::path b = fresh_dir("convotts_corpus_b");
    save_corpus(c, a);
    save_corpus(c, b);
    for (const char* name : {"train.jsonl", "valid.jsonl", "eval.jsonl"})
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
}

TEST(CorpusIo, EmptyFileIsAParseError) {
    fs::path dir = fresh_dir("convotts_corpus_empty");
    std::ofstream(dir / "train.jsonl").close();
    std::ofstream(dir / "valid.jsonl").close();
    std::ofstream(dir / "eval.jsonl").close();
    EXPECT_THROW(load_corpus(dir), ParseError);
}

TEST(CorpusIo, MalformedLineReportsLineNumber) {
    Corpus c = generate_corpus(small_cfg());
    fs::path dir = fresh_dir("convotts_corpus_bad");
    save_corpus(c, dir);
    {
        std::ofstream out(dir / "train.jsonl", std::ios::app);
        out << "{not json\n";
    }
    try {
        load_corpus(dir);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line_number, c.train.size() + 1);
    }
}

TEST(CorpusIo, NonAlternatingSpeakersRejected) {
    Corpus c = generate_corpus(small_cfg());
    c.train[0].turns[1].speaker = Speaker::User;
    fs::path dir = fresh_dir("convotts_corpus_alt");
    save_corpus(c, dir);
    try {
        load_corpus(dir);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find(c.train[0].id), std::string::npos);
    }
}

TEST(CorpusIo, MissingFileIsADataError) {
    fs::path dir = fresh_dir("convotts_corpus_missing");
    EXPECT_THROW(load_corpus(dir), DataError);
}

TEST(CorpusIo, StyleIdOptionalOnLoad) {
    Corpus c = generate_corpus(small_cfg());
    for (Dialogue& d : c.train)
        for (Turn& t : d.turns)
            for (Sentence& s : t.sentences) s.style_id.reset();
    fs::path dir = fresh_dir("convotts_corpus_nostyle");
    save_corpus(c, dir);
    Corpus loaded = load_corpus(dir);
    EXPECT_TRUE(c == loaded);
    EXPECT_FALSE(loaded.train[0].turns[0].sentences[0].style_id.has_value());
}

}  // namespace
