#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "convotts/dialogue.hpp"
#include "convotts/errors.hpp"

namespace convotts {

/// Synthetic empathetic-dialogue corpus with known latent style dynamics.
/// User turns carry style only in prosody (tokens come from a per-dialogue
/// topic, independent of style); each Agent turn's style is style_map applied
/// to the preceding User turn's style.
struct CorpusGenConfig {
    std::size_t n_dialogues = 72;
    std::size_t turns_per_dialogue = 4;  // even; dialogues end on an Agent turn
    std::size_t styles = 4;              // S
    std::pair<std::size_t, std::size_t> sentence_count_range{1, 3};
    std::pair<std::size_t, std::size_t> tokens_per_sentence_range{3, 8};
    std::pair<std::size_t, std::size_t> frames_per_sentence_range{4, 10};
    std::size_t mel_dim = 8;  // M
    std::size_t vocab = 64;   // V
    double noise_std = 0.1;
    std::vector<std::size_t> style_map;  // permutation over [0, S); empty = rotate-by-one
    std::uint64_t seed = 1234;
    std::size_t n_topics = 4;

    std::vector<std::size_t> resolved_style_map() const {
        if (!style_map.empty()) return style_map;
        std::vector<std::size_t> f(styles);
        for (std::size_t i = 0; i < styles; ++i) f[i] = (i + 1) % styles;
        return f;
    }

    bool operator==(const CorpusGenConfig&) const = default;
};

inline void validate_config(const CorpusGenConfig& cfg) {
    auto fail = [](const std::string& what) { throw ConfigError("corpus config: " + what); };
    if (cfg.styles < 2) fail("style count must be >= 2");
    if (cfg.noise_std < 0.0) fail("noise_std must be >= 0");
    if (cfg.n_dialogues < 1) fail("need at least one dialogue");
    if (cfg.turns_per_dialogue < 2 || cfg.turns_per_dialogue % 2 != 0)
        fail("turns_per_dialogue must be even and >= 2");
    if (cfg.vocab < cfg.n_topics) fail("vocab must cover the topic bands");
    if (cfg.sentence_count_range.first < 1 ||
        cfg.sentence_count_range.first > cfg.sentence_count_range.second)
        fail("bad sentence_count_range");
    if (cfg.tokens_per_sentence_range.first < 1 ||
        cfg.tokens_per_sentence_range.first > cfg.tokens_per_sentence_range.second)
        fail("bad tokens_per_sentence_range");
    if (cfg.frames_per_sentence_range.first < 1 ||
        cfg.frames_per_sentence_range.first > cfg.frames_per_sentence_range.second)
        fail("bad frames_per_sentence_range");
    const auto f = cfg.resolved_style_map();
    if (f.size() != cfg.styles) fail("style_map must have one entry per style");
    std::vector<bool> seen(cfg.styles, false);
    for (std::size_t v : f) {
        if (v >= cfg.styles || seen[v]) fail("style_map must be a permutation of [0, S)");
        seen[v] = true;
    }
}

namespace detail {

/// Rows pairwise at least `min_dist` apart in L2; deterministic in the rng
/// stream. Entries in [-2, 2].
inline std::vector<Tensor> distant_prototypes(std::size_t count, std::size_t dim,
                                              std::mt19937_64& rng, double min_dist = 1.0) {
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<Tensor> protos;
    int attempts = 0;
    while (protos.size() < count) {
        Tensor candidate({1, dim});
        for (double& v : candidate.data()) v = dist(rng);
        bool ok = true;
        for (const Tensor& p : protos) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double diff = candidate[i] - p[i];
                d2 += diff * diff;
            }
            if (d2 < min_dist * min_dist) {
                ok = false;
                break;
            }
        }
        if (ok) {
            protos.push_back(std::move(candidate));
        } else if (++attempts > 1000) {
            throw ConfigError("could not place distant style prototypes; reduce style count");
        }
    }
    return protos;
}

inline std::size_t uniform_in(std::pair<std::size_t, std::size_t> range, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> d(range.first, range.second);
    return d(rng);
}

}  // namespace detail

/// Style prototypes used for User speech mel frames. Depend only on
/// (seed, styles, mel_dim) so tests can recover them.
inline std::vector<Tensor> mel_prototypes(const CorpusGenConfig& cfg) {
    std::mt19937_64 rng(cfg.seed * 2654435761u + 17);
    return detail::distant_prototypes(cfg.styles, cfg.mel_dim, rng);
}

/// Style prototypes for Agent target acoustic features (one row per token).
inline std::vector<Tensor> feature_prototypes(const CorpusGenConfig& cfg) {
    std::mt19937_64 rng(cfg.seed * 2654435761u + 31);
    return detail::distant_prototypes(cfg.styles, cfg.mel_dim, rng);
}

inline Corpus generate_corpus(const CorpusGenConfig& cfg) {
    validate_config(cfg);
    const auto style_map = cfg.resolved_style_map();
    const auto user_protos = mel_prototypes(cfg);
    const auto agent_protos = feature_prototypes(cfg);

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> style_draw(0, cfg.styles - 1);
    std::uniform_int_distribution<std::size_t> topic_draw(0, cfg.n_topics - 1);
    std::uniform_int_distribution<std::size_t> any_token(0, cfg.vocab - 1);

    constexpr double kStyleStayProb = 0.4;
    constexpr double kOffTopicProb = 0.2;

    auto draw_tokens = [&](std::size_t topic, std::size_t count) {
        // topic band of the vocabulary, with occasional global draws
        const std::size_t band = cfg.vocab / cfg.n_topics;
        const std::size_t lo = topic * band;
        const std::size_t hi = (topic + 1 == cfg.n_topics) ? cfg.vocab - 1 : lo + band - 1;
        std::uniform_int_distribution<std::size_t> in_band(lo, hi);
        std::vector<std::size_t> tokens(count);
        for (std::size_t& tok : tokens)
            tok = (unit(rng) < kOffTopicProb) ? any_token(rng) : in_band(rng);
        return tokens;
    };

    auto noisy_row = [&](const Tensor& proto) {
        Tensor row({1, cfg.mel_dim});
        for (std::size_t i = 0; i < cfg.mel_dim; ++i)
            row[i] = proto[i] + cfg.noise_std * noise(rng);
        return row;
    };

    std::vector<Dialogue> dialogues;
    dialogues.reserve(cfg.n_dialogues);
    for (std::size_t di = 0; di < cfg.n_dialogues; ++di) {
        Dialogue d;
        d.id = "dlg" + std::to_string(di);
        const std::size_t topic = topic_draw(rng);
        std::size_t user_style = style_draw(rng);
        for (std::size_t ti = 0; ti < cfg.turns_per_dialogue; ++ti) {
            const bool is_user = (ti % 2 == 0);
            if (is_user && ti > 0) {
                // sticky Markov step over user styles
                if (unit(rng) >= kStyleStayProb) {
                    std::uniform_int_distribution<std::size_t> hop(0, cfg.styles - 2);
                    std::size_t next = hop(rng);
                    if (next >= user_style) ++next;
                    user_style = next;
                }
            }
            const std::size_t style = is_user ? user_style : style_map[user_style];
            Turn turn;
            turn.index = ti + 1;
            turn.speaker = is_user ? Speaker::User : Speaker::Agent;
            const std::size_t n_sentences = detail::uniform_in(cfg.sentence_count_range, rng);
            for (std::size_t si = 0; si < n_sentences; ++si) {
                Sentence s;
                s.style_id = static_cast<int>(style);
                s.tokens =
                    draw_tokens(topic, detail::uniform_in(cfg.tokens_per_sentence_range, rng));
                const std::size_t frames =
                    is_user ? detail::uniform_in(cfg.frames_per_sentence_range, rng)
                            : s.tokens.size();
                const Tensor& proto = is_user ? user_protos[style] : agent_protos[style];
                Tensor mel({frames, cfg.mel_dim});
                for (std::size_t f = 0; f < frames; ++f) {
                    Tensor row = noisy_row(proto);
                    for (std::size_t m = 0; m < cfg.mel_dim; ++m) mel.at(f, m) = row[m];
                }
                s.mel = std::move(mel);
                turn.sentences.push_back(std::move(s));
            }
            d.turns.push_back(std::move(turn));
        }
        validate_dialogue(d);
        dialogues.push_back(std::move(d));
    }

    // 84% / 8% / 8% by dialogue, in generation order
    Corpus corpus;
    const auto rounded = [](double x) { return static_cast<std::size_t>(std::llround(x)); };
    std::size_t n_valid = rounded(0.08 * static_cast<double>(cfg.n_dialogues));
    std::size_t n_eval = n_valid;
    if (n_valid + n_eval >= cfg.n_dialogues) n_valid = n_eval = 0;
    const std::size_t n_train = cfg.n_dialogues - n_valid - n_eval;
    for (std::size_t i = 0; i < dialogues.size(); ++i) {
        if (i < n_train)
            corpus.train.push_back(std::move(dialogues[i]));
        else if (i < n_train + n_valid)
            corpus.valid.push_back(std::move(dialogues[i]));
        else
            corpus.eval.push_back(std::move(dialogues[i]));
    }
    return corpus;
}

inline std::size_t count_agent_turns(const std::vector<Dialogue>& ds) {
    std::size_t n = 0;
    for (const Dialogue& d : ds)
        for (const Turn& t : d.turns) n += (t.speaker == Speaker::Agent);
    return n;
}

}  // namespace convotts
