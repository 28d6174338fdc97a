#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <tuple>

#include "convotts/dialogue.hpp"
#include "convotts/errors.hpp"
#include "convotts/graph.hpp"
#include "json.hpp"

namespace convotts {

/// Stand-in for a frozen pretrained sentence encoder: a seeded token
/// embedding table [V x d_l], mean-pooled over tokens. Never trained.
class FrozenTextEncoder {
  public:
    FrozenTextEncoder(std::size_t vocab, std::size_t dim, std::uint64_t seed = 7001)
        : vocab_(vocab), dim_(dim) {
        std::mt19937_64 rng(seed);
        table_ = uniform_init({vocab, dim}, 1.0, rng);
    }

    std::size_t vocab() const { return vocab_; }
    std::size_t dim() const { return dim_; }

    Tensor pad() const { return Tensor::zeros({1, dim_}); }

    Tensor token_row(std::size_t tok) const {
        if (tok >= vocab_)
            throw VocabError("token " + std::to_string(tok) + " outside vocab of " +
                             std::to_string(vocab_));
        Tensor out({1, dim_});
        for (std::size_t j = 0; j < dim_; ++j) out[j] = table_.at(tok, j);
        return out;
    }

    Tensor sentence(const Sentence& s) const {
        if (s.tokens.empty()) throw std::invalid_argument("cannot embed a sentence with no tokens");
        Tensor out = Tensor::zeros({1, dim_});
        for (std::size_t tok : s.tokens) {
            if (tok >= vocab_)
                throw VocabError("token " + std::to_string(tok) + " outside vocab of " +
                                 std::to_string(vocab_));
            for (std::size_t j = 0; j < dim_; ++j) out[j] += table_.at(tok, j);
        }
        const double inv = 1.0 / static_cast<double>(s.tokens.size());
        for (double& v : out.data()) v *= inv;
        return out;
    }

    Tensor turn(const Turn& t) const {
        if (t.sentences.empty()) throw std::invalid_argument("cannot embed a turn with no sentences");
        Tensor out = Tensor::zeros({1, dim_});
        for (const Sentence& s : t.sentences) {
            Tensor e = sentence(s);
            for (std::size_t j = 0; j < dim_; ++j) out[j] += e[j];
        }
        const double inv = 1.0 / static_cast<double>(t.sentences.size());
        for (double& v : out.data()) v *= inv;
        return out;
    }

  private:
    std::size_t vocab_;
    std::size_t dim_;
    Tensor table_;
};

inline Tensor embed_text(const Turn* turn_or_pad, const FrozenTextEncoder& enc) {
    return turn_or_pad ? enc.turn(*turn_or_pad) : enc.pad();
}

/// Per-dimension mean and population std of a [frames x M] mel matrix,
/// concatenated to a [1 x 2M] row.
inline Tensor mel_summary(const Tensor& mel) {
    if (mel.rank() != 2 || mel.rows() < 1)
        throw std::invalid_argument("mel summary needs a nonempty [frames x M] matrix");
    const std::size_t frames = mel.rows();
    const std::size_t m = mel.cols();
    Tensor out = Tensor::zeros({1, 2 * m});
    for (std::size_t j = 0; j < m; ++j) {
        double mean = 0.0;
        for (std::size_t f = 0; f < frames; ++f) mean += mel.at(f, j);
        mean /= static_cast<double>(frames);
        double var = 0.0;
        for (std::size_t f = 0; f < frames; ++f) {
            const double d = mel.at(f, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(frames);
        out[j] = mean;
        out[m + j] = std::sqrt(var);
    }
    return out;
}

/// Frozen prosody encoder: fixed random projection [2M x d_p] applied to
/// mel summary statistics. Emulates a pretrained-and-fixed speech model;
/// parameters never enter the optimizer.
class FrozenProsodyEncoder {
  public:
    FrozenProsodyEncoder(std::size_t mel_dim, std::size_t dim, std::uint64_t seed = 7002)
        : mel_dim_(mel_dim), dim_(dim) {
        std::mt19937_64 rng(seed);
        projection_ = uniform_init({2 * mel_dim, dim},
                                   1.0 / std::sqrt(static_cast<double>(2 * mel_dim)), rng);
    }

    std::size_t mel_dim() const { return mel_dim_; }
    std::size_t dim() const { return dim_; }

    Tensor pad() const { return Tensor::zeros({1, dim_}); }

    Tensor from_mel(const Tensor& mel) const {
        if (mel.size() == 0) throw std::invalid_argument("cannot embed an empty mel");
        if (mel.cols() != mel_dim_)
            throw ShapeError("mel width " + std::to_string(mel.cols()) + " != encoder M " +
                             std::to_string(mel_dim_));
        const Tensor stats = mel_summary(mel);
        Tensor out = Tensor::zeros({1, dim_});
        for (std::size_t i = 0; i < 2 * mel_dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j) out[j] += stats[i] * projection_.at(i, j);
        return out;
    }

    Tensor sentence(const Sentence& s) const {
        if (s.mel.size() == 0) throw std::invalid_argument("cannot embed a sentence with no mel");
        return from_mel(s.mel);
    }

    Tensor turn(const Turn& t) const {
        if (t.sentences.empty()) throw std::invalid_argument("cannot embed a turn with no sentences");
        Tensor out = Tensor::zeros({1, dim_});
        for (const Sentence& s : t.sentences) {
            Tensor e = sentence(s);
            for (std::size_t j = 0; j < dim_; ++j) out[j] += e[j];
        }
        const double inv = 1.0 / static_cast<double>(t.sentences.size());
        for (double& v : out.data()) v *= inv;
        return out;
    }

  private:
    std::size_t mel_dim_;
    std::size_t dim_;
    Tensor projection_;
};

inline Tensor embed_prosody(const Turn* turn_or_pad, const FrozenProsodyEncoder& enc) {
    return turn_or_pad ? enc.turn(*turn_or_pad) : enc.pad();
}

/// Trainable prosody encoder: tanh(meanpool(frames) W + b), parameters live
/// in the training graph. PAD embeds to a constant zero vector so no
/// gradient flows from padded slots.
class TrainableProsodyEncoder {
  public:
    TrainableProsodyEncoder(std::size_t mel_dim, std::size_t dim, std::uint64_t seed = 7003)
        : mel_dim_(mel_dim), dim_(dim) {
        std::mt19937_64 rng(seed);
        w_ = Param("prosody_enc.W",
                   uniform_init({mel_dim, dim}, 1.0 / std::sqrt(static_cast<double>(mel_dim)), rng));
        b_ = Param("prosody_enc.b", Tensor::zeros({1, dim}));
    }

    std::size_t mel_dim() const { return mel_dim_; }
    std::size_t dim() const { return dim_; }
    Param& weight() { return w_; }
    Param& bias() { return b_; }

    Value pad(Graph& g) const { return g.input(Tensor::zeros({1, dim_})); }

    Value from_mel(Graph& g, const Tensor& mel) {
        if (mel.size() == 0) throw std::invalid_argument("cannot embed an empty mel");
        if (mel.cols() != mel_dim_)
            throw ShapeError("mel width " + std::to_string(mel.cols()) + " != encoder M " +
                             std::to_string(mel_dim_));
        Tensor pooled = Tensor::zeros({1, mel_dim_});
        for (std::size_t f = 0; f < mel.rows(); ++f)
            for (std::size_t j = 0; j < mel_dim_; ++j) pooled[j] += mel.at(f, j);
        const double inv = 1.0 / static_cast<double>(mel.rows());
        for (double& v : pooled.data()) v *= inv;
        return tanh(add_rowwise(matmul(g.input(pooled), g.param(w_)), g.param(b_)));
    }

    Value sentence(Graph& g, const Sentence& s) {
        if (s.mel.size() == 0) throw std::invalid_argument("cannot embed a sentence with no mel");
        return from_mel(g, s.mel);
    }

    Value turn(Graph& g, const Turn& t) {
        if (t.sentences.empty()) throw std::invalid_argument("cannot embed a turn with no sentences");
        Value acc = sentence(g, t.sentences[0]);
        for (std::size_t i = 1; i < t.sentences.size(); ++i) acc = add(acc, sentence(g, t.sentences[i]));
        return scale(acc, 1.0 / static_cast<double>(t.sentences.size()));
    }

  private:
    std::size_t mel_dim_;
    std::size_t dim_;
    Param w_;
    Param b_;
};

inline Value embed_prosody(Graph& g, const Turn* turn_or_pad, TrainableProsodyEncoder& enc) {
    return turn_or_pad ? enc.turn(g, *turn_or_pad) : enc.pad(g);
}

/// Precomputed embeddings keyed by (dialogue id, turn index, sentence index,
/// kind). When present they replace encoder output, so real pretrained-model
/// vectors can be swapped in. Lines look like:
///   {"dialogue": "dlg0", "turn": 1, "sentence": 0, "kind": "text", "vector": [...]}
class EmbeddingFixture {
  public:
    using Key = std::tuple<std::string, std::size_t, std::size_t, std::string>;

    static EmbeddingFixture load(const std::filesystem::path& file) {
        std::ifstream in(file, std::ios::binary);
        if (!in) throw DataError("cannot read " + file.string());
        EmbeddingFixture fx;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(std::string("invalid fixture JSON: ") + e.what(), line_no);
            }
            if (!j.contains("dialogue") || !j.contains("turn") || !j.contains("sentence") ||
                !j.contains("kind") || !j.contains("vector"))
                throw ParseError("fixture line needs dialogue/turn/sentence/kind/vector", line_no);
            const std::string kind = j["kind"].get<std::string>();
            if (kind != "text" && kind != "prosody")
                throw ParseError("fixture kind must be 'text' or 'prosody'", line_no);
            Tensor vec({1, j["vector"].size()});
            for (std::size_t i = 0; i < j["vector"].size(); ++i)
                vec[i] = j["vector"][i].get<double>();
            fx.entries_[Key{j["dialogue"].get<std::string>(), j["turn"].get<std::size_t>(),
                            j["sentence"].get<std::size_t>(), kind}] = std::move(vec);
        }
        return fx;
    }

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    const Tensor* find(const std::string& dialogue, std::size_t turn, std::size_t sentence,
                       const std::string& kind) const {
        auto it = entries_.find(Key{dialogue, turn, sentence, kind});
        return it == entries_.end() ? nullptr : &it->second;
    }

    void insert(const std::string& dialogue, std::size_t turn, std::size_t sentence,
                const std::string& kind, Tensor vec) {
        entries_[Key{dialogue, turn, sentence, kind}] = std::move(vec);
    }

  private:
    std::map<Key, Tensor> entries_;
};

}  // namespace convotts
