#pragma once

#include <random>
#include <string>
#include <vector>

#include "convotts/grad_check.hpp"
#include "convotts/layers.hpp"
#include "convotts/losses.hpp"
#include "convotts/train.hpp"

namespace convotts {

/// One row per (block, parameter): worst relative error across the seeds
/// that block was checked under.
struct GradSuiteResult {
    struct Row {
        std::string block;
        std::string param;
        double max_rel_err = 0.0;
        bool pass = false;
    };
    std::vector<Row> rows;
    double tolerance = 0.0;

    bool all_pass() const {
        for (const Row& r : rows)
            if (!r.pass) return false;
        return !rows.empty();
    }
};

namespace detail {

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : t.data()) v = u(rng);
    return t;
}

inline void merge_report(GradSuiteResult& out, const std::string& block,
                         const GradCheckReport& rep) {
    for (const auto& e : rep.entries) {
        bool found = false;
        for (auto& r : out.rows) {
            if (r.block == block && r.param == e.param) {
                r.max_rel_err = std::max(r.max_rel_err, e.max_rel_err);
                r.pass = r.max_rel_err <= out.tolerance;
                found = true;
                break;
            }
        }
        if (!found)
            out.rows.push_back({block, e.param, e.max_rel_err, e.max_rel_err <= out.tolerance});
    }
}

template <typename MakeLoss>
void check_block(GradSuiteResult& out, const std::string& block, std::size_t seeds,
                 MakeLoss&& make) {
    for (std::size_t s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(1000 + 17 * s);
        std::vector<Param*> params;
        auto build = make(rng, params);  // returns a BuildLoss closure
        merge_report(out, block, grad_check(std::span<Param* const>(params),
                                            build, out.tolerance));
    }
}

}  // namespace detail

/// Finite-difference verification of every trainable block. `only` filters
/// blocks by exact name; empty runs everything.
inline GradSuiteResult run_grad_suite(double tol, const std::string& only = "",
                                      std::size_t seeds = 20) {
    GradSuiteResult out;
    out.tolerance = tol;
    auto wanted = [&](const std::string& name) { return only.empty() || only == name; };

    if (wanted("linear")) {
        detail::check_block(out, "linear", seeds, [](std::mt19937_64& rng, auto& params) {
            auto lin = std::make_shared<Linear>(3, 4, "linear", rng);
            Tensor x = detail::random_tensor({2, 3}, rng);
            lin->collect(params);
            return [lin, x](Graph& g) {
                Value y = (*lin)(g, g.input(x));
                return mean(mul(y, y));
            };
        });
    }
    if (wanted("gru")) {
        detail::check_block(out, "gru", seeds, [](std::mt19937_64& rng, auto& params) {
            auto cell = std::make_shared<GruCell>(3, 4, "gru", rng);
            std::vector<Tensor> xs;
            for (int i = 0; i < 3; ++i) xs.push_back(detail::random_tensor({1, 3}, rng));
            cell->collect(params);
            return [cell, xs](Graph& g) {
                Value h = cell->zero_state(g);
                for (const Tensor& x : xs) h = cell->step(g, g.input(x), h);
                return mean(mul(h, h));
            };
        });
    }
    if (wanted("bgru")) {
        detail::check_block(out, "bgru", seeds, [](std::mt19937_64& rng, auto& params) {
            auto net = std::make_shared<BGru>(3, 2, "bgru", rng);
            std::vector<Tensor> xs;
            for (int i = 0; i < 4; ++i) xs.push_back(detail::random_tensor({1, 3}, rng));
            net->collect(params);
            return [net, xs](Graph& g) {
                std::vector<Value> seq;
                for (const Tensor& x : xs) seq.push_back(g.input(x));
                std::vector<Value> states = net->run(g, seq);
                Value cat = concat_rows(states);
                return mean(mul(cat, cat));
            };
        });
    }
    if (wanted("attention")) {
        detail::check_block(out, "attention", seeds, [](std::mt19937_64& rng, auto& params) {
            auto blk = std::make_shared<AttentionBlock>(3, 4, 3, "attention", rng);
            Tensor q = detail::random_tensor({1, 3}, rng);
            std::vector<Tensor> kv;
            for (int i = 0; i < 4; ++i) kv.push_back(detail::random_tensor({1, 4}, rng));
            std::vector<std::uint8_t> keep = {1, 0, 1, 1};  // one PAD slot in the mix
            blk->collect(params);
            return [blk, q, kv, keep](Graph& g) {
                std::vector<Value> vals;
                for (const Tensor& t : kv) vals.push_back(g.input(t));
                AttentionResult r = blk->forward(g, g.input(q), vals, keep);
                return mean(mul(r.context, r.context));
            };
        });
    }
    if (wanted("context")) {
        StrategyConfig base;
        base.cross_modal = false;
        StrategyConfig sum;
        StrategyConfig attn;
        attn.attn = true;
        StrategyConfig fg;
        fg.attn = true;
        fg.fg = true;
        const std::pair<const char*, StrategyConfig> archs[] = {
            {"context/baseline", base}, {"context/sum", sum},
            {"context/attn", attn}, {"context/fg", fg}};
        for (const auto& [name, strat] : archs) {
            detail::check_block(out, name, seeds, [strat](std::mt19937_64& rng, auto& params) {
                ContextDims dims{3, 3, 3, 3, 3};
                auto enc = std::make_shared<ContextEncoder>(strat, dims, rng);
                std::vector<Tensor> texts, pros;
                for (int i = 0; i < 4; ++i) texts.push_back(detail::random_tensor({1, 3}, rng));
                for (int i = 0; i < 3; ++i) pros.push_back(detail::random_tensor({1, 3}, rng));
                std::vector<std::uint8_t> keep = {0, 1, 1};
                Tensor query = detail::random_tensor({1, 3}, rng);
                const bool fine = strat.fg;
                enc->collect(params);
                return [enc, texts, pros, keep, query, fine](Graph& g) {
                    std::vector<Value> tv, pv, qv;
                    for (const Tensor& t : texts) tv.push_back(g.input(t));
                    for (const Tensor& p : pros) pv.push_back(g.input(p));
                    if (fine) {
                        qv.push_back(g.input(query));
                        qv.push_back(g.input(query));
                    }
                    ContextPrediction pred = enc->forward(g, tv, pv, keep, qv);
                    Value acc;
                    for (const Value& e : pred.embeddings) {
                        Value term = mean(mul(e, e));
                        acc = acc ? add(acc, term) : term;
                    }
                    return acc;
                };
            });
        }
    }
    if (wanted("decoder")) {
        detail::check_block(out, "decoder", seeds, [](std::mt19937_64& rng, auto& params) {
            auto dec = std::make_shared<Decoder>(8, 3, 3, 4, rng);
            Tensor e = detail::random_tensor({1, 3}, rng);
            std::vector<std::size_t> tokens = {1, 5, 2};
            Tensor target = detail::random_tensor({3, 4}, rng);
            dec->collect(params);
            return [dec, e, tokens, target](Graph& g) {
                return recon_loss(dec->decode(g, tokens, g.input(e)), target);
            };
        });
    }
    if (wanted("losses")) {
        detail::check_block(out, "losses", seeds, [](std::mt19937_64& rng, auto& params) {
            auto pred = std::make_shared<Param>("losses.pred",
                                                detail::random_tensor({2, 3}, rng));
            auto emb = std::make_shared<Param>("losses.emb",
                                               detail::random_tensor({1, 3}, rng));
            Tensor target = detail::random_tensor({2, 3}, rng);
            // keep |pred - target| away from zero so L1 stays differentiable
            for (std::size_t i = 0; i < target.size(); ++i)
                if (std::fabs(pred->value[i] - target[i]) < 0.05)
                    target[i] += (pred->value[i] > target[i]) ? -0.1 : 0.1;
            Tensor p = detail::random_tensor({1, 3}, rng);
            params.push_back(pred.get());
            params.push_back(emb.get());
            return [pred, emb, target, p](Graph& g) {
                Value recon = recon_loss(g.param(*pred), target);
                Value sg = style_guided_loss(g.param(*emb), g.input(p));
                return total_loss(recon, sg, 0.7);
            };
        });
    }
    if (wanted("pipeline")) {
        CorpusGenConfig gc;
        gc.n_dialogues = 1;
        gc.turns_per_dialogue = 2;
        gc.styles = 2;
        gc.mel_dim = 3;
        gc.vocab = 10;
        gc.sentence_count_range = {1, 2};
        gc.tokens_per_sentence_range = {2, 3};
        gc.frames_per_sentence_range = {2, 3};
        const Corpus fixed = generate_corpus(gc);
        const Dialogue& d = fixed.train.front();
        detail::check_block(out, "pipeline", seeds, [&d](std::mt19937_64& rng, auto& params) {
            StrategyConfig s;
            s.sg = true;
            s.attn = true;
            s.fg = true;
            ModelConfig mc;
            mc.strategy = s;
            mc.dims = {3, 3, 3, 3, 3};
            mc.vocab = 10;
            mc.mel_dim = 3;
            mc.d_tok = 3;
            mc.feat_dim = 3;
            mc.capacity = 2;
            mc.init_seed = rng();
            mc.sg_target_flows = true;  // keeps finite differences consistent end to end
            auto m = std::make_shared<Model>(mc);
            for (Param* p : m->trainable_params()) params.push_back(p);
            return [m, &d](Graph& g) {
                TurnForward f = m->forward_turn(g, d, 2);
                return total_loss(f.recon, f.sg, 0.7);
            };
        });
    }
    return out;
}

}  // namespace convotts
