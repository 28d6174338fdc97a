#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "convotts/errors.hpp"
#include "convotts/layers.hpp"

namespace convotts {

/// Which conditioning mechanisms are active. `cross_modal` selects the
/// text+prosody encoder over the text-only baseline; `ssl` picks the frozen
/// prosody encoder over the trainable one; `sg` adds the style-guided loss
/// (also valid for the baseline); `attn` swaps simple summation for
/// attention aggregation; `fg` predicts one embedding per current-turn
/// sentence instead of one per turn.
struct StrategyConfig {
    bool ssl = false;
    bool sg = false;
    bool attn = false;
    bool fg = false;
    bool cross_modal = true;
};

inline void validate_strategy(const StrategyConfig& cfg) {
    if (!cfg.cross_modal && cfg.attn)
        throw ConfigError("attention aggregation requires cross_modal=true");
    if (!cfg.cross_modal && cfg.fg)
        throw ConfigError("fine-grained prediction requires cross_modal=true");
}

struct ContextDims {
    std::size_t d_l = 32;    // text embedding width
    std::size_t d_p = 16;    // prosody embedding width
    std::size_t hidden = 16; // GRU hidden size h
    std::size_t d_a = 16;    // attention width
    std::size_t d_e = 16;    // context embedding width
};

struct ContextPrediction {
    std::vector<Value> embeddings;  // one entry, or one per current-turn sentence (fg)

    // attention path only, aligned with embeddings; exact zeros on PAD slots
    std::vector<Tensor> text_weights;
    std::vector<Tensor> prosody_weights;
    bool attention_empty = false;  // every history slot was PAD
};

/// The four context-prediction architectures behind one forward interface.
///
/// Inputs per prediction: C+1 turn-level text embeddings l_{t-C:t} (PAD slots
/// as zero rows), C prosody embeddings p_{t-C:t-1}, a keep flag per history
/// slot, and (fg only) sentence-level embeddings l_{t,k} of the current turn.
///
/// baseline:   GRU over l_{t-C:t} -> linear -> tanh
/// simple sum: GRU(text) -> linear, GRU(prosody) -> linear, sum -> tanh
/// attention:  BGRUs over past text/prosody feed two scaled dot-product
///             attentions queried by l_t; contexts concatenated -> linear -> tanh
/// fg:         per sentence k, l_{t,k} replaces l_t as query / final GRU input;
///             history stays utterance-wise
class ContextEncoder {
  public:
    ContextEncoder() = default;

    ContextEncoder(const StrategyConfig& strategy, const ContextDims& dims, std::mt19937_64& rng)
        : strategy_(strategy), dims_(dims) {
        validate_strategy(strategy);
        if (!strategy.cross_modal) {
            text_gru_ = GruCell(dims.d_l, dims.hidden, "cce.gru", rng);
            text_out_ = Linear(dims.hidden, dims.d_e, "cce.out", rng);
        } else if (!strategy.attn) {
            text_gru_ = GruCell(dims.d_l, dims.hidden, "cmcce.text_gru", rng);
            text_out_ = Linear(dims.hidden, dims.d_e, "cmcce.text_out", rng);
            pros_gru_ = GruCell(dims.d_p, dims.hidden, "cmcce.pros_gru", rng);
            pros_out_ = Linear(dims.hidden, dims.d_e, "cmcce.pros_out", rng);
        } else {
            text_bgru_ = BGru(dims.d_l, dims.hidden, "cmcce.text_bgru", rng);
            pros_bgru_ = BGru(dims.d_p, dims.hidden, "cmcce.pros_bgru", rng);
            text_attn_ = AttentionBlock(dims.d_l, 2 * dims.hidden, dims.d_a, "cmcce.text_attn", rng);
            pros_attn_ = AttentionBlock(dims.d_l, 2 * dims.hidden, dims.d_a, "cmcce.pros_attn", rng);
            merge_ = Linear(2 * dims.d_a, dims.d_e, "cmcce.merge", rng);
        }
    }

    const StrategyConfig& strategy() const { return strategy_; }
    const ContextDims& dims() const { return dims_; }

    ContextPrediction forward(Graph& g, std::span<const Value> texts,
                              std::span<const Value> prosody,
                              const std::vector<std::uint8_t>& keep,
                              std::span<const Value> sentence_queries = {}) {
        if (texts.empty()) throw std::invalid_argument("context encoder needs text slots");
        if (strategy_.cross_modal && prosody.size() + 1 != texts.size())
            throw std::invalid_argument("expected one fewer prosody slot than text slots");
        if (strategy_.attn && keep.size() != prosody.size())
            throw std::invalid_argument("keep mask must cover the history slots");
        if (strategy_.fg && sentence_queries.empty())
            throw std::invalid_argument("fine-grained mode needs sentence-level queries");

        std::vector<Value> queries;
        if (strategy_.fg) {
            queries.assign(sentence_queries.begin(), sentence_queries.end());
        } else {
            queries.push_back(texts.back());
        }

        ContextPrediction pred;
        std::span<const Value> history = texts.first(texts.size() - 1);

        if (!strategy_.attn) {
            // shared scan over the history, one extra GRU step per query
            Value h_hist = text_gru_.run(g, history);
            Value pros_term = Value();
            bool has_pros = false;
            if (strategy_.cross_modal) {
                pros_term = pros_out_(g, pros_gru_.run(g, prosody));
                has_pros = true;
            }
            for (const Value& q : queries) {
                Value h = text_gru_.step(g, q, h_hist);
                Value text_term = text_out_(g, h);
                Value e = has_pros ? tanh(add(text_term, pros_term)) : tanh(text_term);
                pred.embeddings.push_back(e);
            }
        } else {
            std::vector<Value> kv_txt = text_bgru_.run(g, history);
            std::vector<Value> kv_pro = pros_bgru_.run(g, prosody);
            for (const Value& q : queries) {
                AttentionResult at = text_attn_.forward(g, q, kv_txt, keep);
                AttentionResult ap = pros_attn_.forward(g, q, kv_pro, keep);
                Value e = tanh(merge_(g, concat_cols(at.context, ap.context)));
                pred.embeddings.push_back(e);
                pred.text_weights.push_back(at.weights);
                pred.prosody_weights.push_back(ap.weights);
                pred.attention_empty = at.empty;
            }
        }
        return pred;
    }

    void collect(std::vector<Param*>& out) {
        if (!strategy_.cross_modal) {
            text_gru_.collect(out);
            text_out_.collect(out);
        } else if (!strategy_.attn) {
            text_gru_.collect(out);
            text_out_.collect(out);
            pros_gru_.collect(out);
            pros_out_.collect(out);
        } else {
            text_bgru_.collect(out);
            pros_bgru_.collect(out);
            text_attn_.collect(out);
            pros_attn_.collect(out);
            merge_.collect(out);
        }
    }

  private:
    StrategyConfig strategy_;
    ContextDims dims_;
    GruCell text_gru_;
    Linear text_out_;
    GruCell pros_gru_;
    Linear pros_out_;
    BGru text_bgru_;
    BGru pros_bgru_;
    AttentionBlock text_attn_;
    AttentionBlock pros_attn_;
    Linear merge_;
};

}  // namespace convotts
