#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "convotts/context_encoder.hpp"
#include "convotts/decoder.hpp"
#include "convotts/dialogue.hpp"
#include "convotts/encoders.hpp"
#include "convotts/errors.hpp"
#include "convotts/losses.hpp"
#include "json.hpp"

namespace convotts {

struct ModelConfig {
    StrategyConfig strategy;
    ContextDims dims;
    std::size_t vocab = 64;
    std::size_t mel_dim = 8;   // M
    std::size_t d_tok = 16;
    std::size_t feat_dim = 8;  // F, decoder output width
    std::size_t capacity = 5;  // history window C
    std::uint64_t init_seed = 2024;

    // style-guided loss variants
    bool sg_target_flows = false;     // let SG gradient reach a trainable prosody encoder
    bool fg_sentence_targets = true;  // fg: sentence-level targets p_{t,k} vs turn-level p_t
};

inline void validate_model_config(const ModelConfig& cfg) {
    validate_strategy(cfg.strategy);
    if (cfg.capacity < 1) throw ConfigError("history capacity must be >= 1");
    if (cfg.strategy.sg && cfg.dims.d_e != cfg.dims.d_p)
        throw ConfigError("style-guided loss needs d_e == d_p (got " +
                          std::to_string(cfg.dims.d_e) + " vs " + std::to_string(cfg.dims.d_p) +
                          ")");
}

/// Replacement mel per (turn index -> per-sentence matrices), used on the
/// inference feedback path where Agent history prosody comes from the
/// model's own predictions.
using MelOverride = std::map<std::size_t, std::vector<Tensor>>;

struct TurnForward {
    std::vector<Value> embeddings;  // context embeddings, 1 or one per sentence
    std::vector<Value> features;    // predicted features per current-turn sentence
    Value recon;                    // scalar L1 over the turn
    Value sg;                       // scalar MSE; null when sg disabled
    std::vector<Tensor> text_weights;
    std::vector<Tensor> prosody_weights;
    bool attention_empty = false;
};

/// Full pipeline for one conditioning strategy: frozen text encoder, frozen
/// or trainable prosody encoder, context encoder, decoder.
class Model {
  public:
    explicit Model(const ModelConfig& cfg)
        : cfg_(cfg),
          text_enc_(cfg.vocab, cfg.dims.d_l),
          frozen_pros_(cfg.mel_dim, cfg.dims.d_p),
          train_pros_(cfg.mel_dim, cfg.dims.d_p, cfg.init_seed * 31 + 5) {
        validate_model_config(cfg);
        std::mt19937_64 rng(cfg.init_seed);
        ctx_ = ContextEncoder(cfg.strategy, cfg.dims, rng);
        dec_ = Decoder(cfg.vocab, cfg.d_tok, cfg.dims.d_e, cfg.feat_dim, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    const FrozenTextEncoder& text_encoder() const { return text_enc_; }
    const FrozenProsodyEncoder& frozen_prosody_encoder() const { return frozen_pros_; }
    TrainableProsodyEncoder& trainable_prosody_encoder() { return train_pros_; }

    /// Parameters the optimizer may update, in a fixed order. The frozen
    /// encoders never appear; the trainable prosody encoder appears only
    /// when something can push gradient into it.
    std::vector<Param*> trainable_params() {
        std::vector<Param*> out;
        ctx_.collect(out);
        dec_.collect(out);
        const bool pros_translates = !cfg_.strategy.ssl &&
                                     (cfg_.strategy.cross_modal ||
                                      (cfg_.strategy.sg && cfg_.sg_target_flows));
        if (pros_translates) {
            out.push_back(&train_pros_.weight());
            out.push_back(&train_pros_.bias());
        }
        return out;
    }

    TurnForward forward_turn(Graph& g, const Dialogue& d, std::size_t t,
                             const EmbeddingFixture* fixture = nullptr,
                             const MelOverride* mel_override = nullptr) {
        const HistoryWindow w = window(d, t, cfg_.capacity);
        const Turn& current = d.turns[t - 1];

        std::vector<Value> texts;
        texts.reserve(w.text_slots.size());
        for (const Turn* slot : w.text_slots) {
            if (!slot) {
                texts.push_back(g.input(text_enc_.pad()));
            } else {
                texts.push_back(g.input(text_turn(d, *slot, fixture)));
            }
        }

        std::vector<Value> prosody;
        std::vector<std::uint8_t> keep(w.prosody_slots.size(), 0);
        if (cfg_.strategy.cross_modal) {
            prosody.reserve(w.prosody_slots.size());
            for (std::size_t i = 0; i < w.prosody_slots.size(); ++i) {
                const Turn* slot = w.prosody_slots[i];
                if (!slot) {
                    prosody.push_back(g.input(Tensor::zeros({1, cfg_.dims.d_p})));
                } else {
                    keep[i] = 1;
                    prosody.push_back(prosody_turn(g, d, *slot, fixture, mel_override));
                }
            }
        } else {
            for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = (w.prosody_slots[i] != nullptr);
        }

        std::vector<Value> queries;
        if (cfg_.strategy.fg) {
            for (std::size_t k = 0; k < current.sentences.size(); ++k)
                queries.push_back(g.input(text_sentence(d, current, k, fixture)));
        }

        ContextPrediction pred = ctx_.forward(g, texts, prosody, keep, queries);

        TurnForward out;
        out.embeddings = pred.embeddings;
        out.text_weights = std::move(pred.text_weights);
        out.prosody_weights = std::move(pred.prosody_weights);
        out.attention_empty = pred.attention_empty;

        std::vector<Value> pred_rows;
        std::vector<Tensor> target_rows;
        for (std::size_t k = 0; k < current.sentences.size(); ++k) {
            const Sentence& s = current.sentences[k];
            Value e = cfg_.strategy.fg ? out.embeddings[k] : out.embeddings[0];
            Value feats = dec_.decode(g, s.tokens, e);
            out.features.push_back(feats);
            pred_rows.push_back(feats);
            target_rows.push_back(s.mel);
        }
        Value all_pred = pred_rows.size() == 1 ? pred_rows[0] : concat_rows(pred_rows);
        Tensor all_target = stack_rows(target_rows);
        out.recon = recon_loss(all_pred, all_target);

        if (cfg_.strategy.sg) out.sg = sg_loss(g, d, current, out.embeddings);
        return out;
    }

    /// Turn-level text embedding from the frozen encoder, with per-sentence
    /// fixture overrides.
    Tensor text_turn(const Dialogue& d, const Turn& turn, const EmbeddingFixture* fixture) const {
        Tensor acc = Tensor::zeros({1, cfg_.dims.d_l});
        for (std::size_t k = 0; k < turn.sentences.size(); ++k) {
            Tensor e = text_sentence(d, turn, k, fixture);
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += e[j];
        }
        const double inv = 1.0 / static_cast<double>(turn.sentences.size());
        for (double& v : acc.data()) v *= inv;
        return acc;
    }

    Tensor text_sentence(const Dialogue& d, const Turn& turn, std::size_t k,
                         const EmbeddingFixture* fixture) const {
        if (fixture) {
            if (const Tensor* hit = fixture->find(d.id, turn.index, k, "text")) {
                if (hit->size() != cfg_.dims.d_l)
                    throw ShapeError("text fixture width " + std::to_string(hit->size()) +
                                     " != d_l " + std::to_string(cfg_.dims.d_l));
                return *hit;
            }
        }
        return text_enc_.sentence(turn.sentences[k]);
    }

    /// Turn-level prosody embedding as a graph value (mean over sentences).
    Value prosody_turn(Graph& g, const Dialogue& d, const Turn& turn,
                       const EmbeddingFixture* fixture, const MelOverride* mel_override) {
        std::vector<Value> parts;
        for (std::size_t k = 0; k < turn.sentences.size(); ++k)
            parts.push_back(prosody_sentence(g, d, turn, k, fixture, mel_override));
        Value acc = parts[0];
        for (std::size_t k = 1; k < parts.size(); ++k) acc = add(acc, parts[k]);
        return scale(acc, 1.0 / static_cast<double>(parts.size()));
    }

    Value prosody_sentence(Graph& g, const Dialogue& d, const Turn& turn, std::size_t k,
                           const EmbeddingFixture* fixture, const MelOverride* mel_override) {
        if (fixture) {
            if (const Tensor* hit = fixture->find(d.id, turn.index, k, "prosody")) {
                if (hit->size() != cfg_.dims.d_p)
                    throw ShapeError("prosody fixture width " + std::to_string(hit->size()) +
                                     " != d_p " + std::to_string(cfg_.dims.d_p));
                return g.input(*hit);
            }
        }
        const Tensor* mel = &turn.sentences[k].mel;
        if (mel_override) {
            auto it = mel_override->find(turn.index);
            if (it != mel_override->end()) mel = &it->second.at(k);
        }
        if (cfg_.strategy.ssl) return g.input(frozen_pros_.from_mel(*mel));
        return train_pros_.from_mel(g, *mel);
    }

    void save(const std::filesystem::path& file) {
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + file.string());
        out << kMagic << '\n' << to_json().dump() << '\n';
    }

    static Model load(const std::filesystem::path& file) {
        std::ifstream in(file, std::ios::binary);
        if (!in) throw DataError("cannot read " + file.string());
        std::string magic;
        std::getline(in, magic);
        if (magic != kMagic)
            throw DataError("model format mismatch: expected '" + std::string(kMagic) +
                            "', found '" + magic + "'");
        std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(std::string("model file corrupt: ") + e.what());
        }
        return from_json(j);
    }

    nlohmann::json to_json() {
        nlohmann::json j;
        j["config"] = config_json(cfg_);
        nlohmann::json params = nlohmann::json::object();
        for (Param* p : all_params()) {
            nlohmann::json entry;
            entry["shape"] = p->value.shape();
            entry["data"] = std::vector<double>(p->value.data().begin(), p->value.data().end());
            params[p->name] = std::move(entry);
        }
        j["params"] = std::move(params);
        return j;
    }

    static Model from_json(const nlohmann::json& j) {
        Model m(config_from_json(j.at("config")));
        const auto& params = j.at("params");
        std::size_t seen = 0;
        for (Param* p : m.all_params()) {
            if (!params.contains(p->name))
                throw DataError("model file missing parameter '" + p->name + "'");
            const auto& entry = params.at(p->name);
            const std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
            if (shape != p->value.shape())
                throw DataError("parameter '" + p->name + "' has the wrong shape");
            const std::vector<double> data = entry.at("data").get<std::vector<double>>();
            Tensor t(shape, data);
            p->value = std::move(t);
            ++seen;
        }
        if (seen != params.size()) throw DataError("model file has extra parameters");
        return m;
    }

  private:
    static constexpr const char* kMagic = "convotts-model v1";

    /// Every owned parameter, trainable or not in the current strategy.
    std::vector<Param*> all_params() {
        std::vector<Param*> out;
        ctx_.collect(out);
        dec_.collect(out);
        if (!cfg_.strategy.ssl) {
            out.push_back(&train_pros_.weight());
            out.push_back(&train_pros_.bias());
        }
        return out;
    }

    Value sg_loss(Graph& g, const Dialogue& d, const Turn& current,
                  const std::vector<Value>& embeddings) {
        const bool flows = cfg_.sg_target_flows && !cfg_.strategy.ssl;
        auto sentence_target = [&](std::size_t k) -> Value {
            if (flows) return prosody_sentence(g, d, current, k, nullptr, nullptr);
            Graph scratch;
            Value v = prosody_sentence(scratch, d, current, k, nullptr, nullptr);
            return g.input(v.value());
        };
        auto turn_target = [&]() -> Value {
            if (flows) return prosody_turn(g, d, current, nullptr, nullptr);
            Graph scratch;
            Value v = prosody_turn(scratch, d, current, nullptr, nullptr);
            return g.input(v.value());
        };

        if (cfg_.strategy.fg && cfg_.fg_sentence_targets) {
            Value acc;
            for (std::size_t k = 0; k < embeddings.size(); ++k) {
                Value term = style_guided_loss(embeddings[k], sentence_target(k));
                acc = acc ? add(acc, term) : term;
            }
            return scale(acc, 1.0 / static_cast<double>(embeddings.size()));
        }
        Value p_t = turn_target();
        Value acc;
        for (const Value& e : embeddings) {
            Value term = style_guided_loss(e, p_t);
            acc = acc ? add(acc, term) : term;
        }
        return embeddings.size() == 1 ? acc
                                      : scale(acc, 1.0 / static_cast<double>(embeddings.size()));
    }

    static Tensor stack_rows(const std::vector<Tensor>& parts) {
        std::size_t rows = 0;
        const std::size_t cols = parts.front().cols();
        for (const Tensor& p : parts) rows += p.rows();
        Tensor out({rows, cols});
        std::size_t r = 0;
        for (const Tensor& p : parts) {
            if (p.cols() != cols) throw ShapeError("target row width mismatch");
            for (std::size_t i = 0; i < p.rows(); ++i, ++r)
                for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = p.at(i, c);
        }
        return out;
    }

    static nlohmann::json config_json(const ModelConfig& c) {
        nlohmann::json j;
        j["ssl"] = c.strategy.ssl;
        j["sg"] = c.strategy.sg;
        j["attn"] = c.strategy.attn;
        j["fg"] = c.strategy.fg;
        j["cross_modal"] = c.strategy.cross_modal;
        j["d_l"] = c.dims.d_l;
        j["d_p"] = c.dims.d_p;
        j["hidden"] = c.dims.hidden;
        j["d_a"] = c.dims.d_a;
        j["d_e"] = c.dims.d_e;
        j["vocab"] = c.vocab;
        j["mel_dim"] = c.mel_dim;
        j["d_tok"] = c.d_tok;
        j["feat_dim"] = c.feat_dim;
        j["capacity"] = c.capacity;
        j["init_seed"] = c.init_seed;
        j["sg_target_flows"] = c.sg_target_flows;
        j["fg_sentence_targets"] = c.fg_sentence_targets;
        return j;
    }

    static ModelConfig config_from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.strategy.ssl = j.at("ssl").get<bool>();
        c.strategy.sg = j.at("sg").get<bool>();
        c.strategy.attn = j.at("attn").get<bool>();
        c.strategy.fg = j.at("fg").get<bool>();
        c.strategy.cross_modal = j.at("cross_modal").get<bool>();
        c.dims.d_l = j.at("d_l").get<std::size_t>();
        c.dims.d_p = j.at("d_p").get<std::size_t>();
        c.dims.hidden = j.at("hidden").get<std::size_t>();
        c.dims.d_a = j.at("d_a").get<std::size_t>();
        c.dims.d_e = j.at("d_e").get<std::size_t>();
        c.vocab = j.at("vocab").get<std::size_t>();
        c.mel_dim = j.at("mel_dim").get<std::size_t>();
        c.d_tok = j.at("d_tok").get<std::size_t>();
        c.feat_dim = j.at("feat_dim").get<std::size_t>();
        c.capacity = j.at("capacity").get<std::size_t>();
        c.init_seed = j.at("init_seed").get<std::uint64_t>();
        c.sg_target_flows = j.at("sg_target_flows").get<bool>();
        c.fg_sentence_targets = j.at("fg_sentence_targets").get<bool>();
        return c;
    }

    ModelConfig cfg_;
    FrozenTextEncoder text_enc_;
    FrozenProsodyEncoder frozen_pros_;
    TrainableProsodyEncoder train_pros_;
    ContextEncoder ctx_;
    Decoder dec_;
};

}  // namespace convotts
