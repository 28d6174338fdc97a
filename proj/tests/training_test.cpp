#include <gtest/gtest.h>

#include <cmath>

#include "convotts/grad_check.hpp"
#include "convotts/train.hpp"

using namespace convotts;

namespace {

ModelConfig tiny_model(StrategyConfig s) {
    ModelConfig cfg;
    cfg.strategy = s;
    cfg.dims.d_l = 6;
    cfg.dims.d_p = 4;
    cfg.dims.hidden = 5;
    cfg.dims.d_a = 4;
    cfg.dims.d_e = 4;
    cfg.vocab = 24;
    cfg.mel_dim = 6;
    cfg.d_tok = 5;
    cfg.feat_dim = 6;
    cfg.capacity = 3;
    return cfg;
}

Corpus tiny_corpus(std::uint64_t seed = 5, std::size_t n = 16, double noise = 0.1) {
    CorpusGenConfig g;
    g.n_dialogues = n;
    g.turns_per_dialogue = 4;
    g.styles = 3;
    g.mel_dim = 6;
    g.vocab = 24;
    g.noise_std = noise;
    g.seed = seed;
    return generate_corpus(g);
}

TrainingConfig quick(StrategyConfig s, std::size_t epochs) {
    TrainingConfig cfg;
    cfg.model = tiny_model(s);
    cfg.epochs = epochs;
    cfg.shuffle_seed = 11;
    return cfg;
}

}  // namespace

TEST(Train, ZeroEpochsReturnsInitialModel) {
    Corpus c = tiny_corpus();
    StrategyConfig s;
    TrainingConfig cfg = quick(s, 0);
    TrainResult r = train(c, cfg);
    ASSERT_EQ(r.metrics.curve.size(), 1u);
    EXPECT_EQ(r.metrics.best_epoch, 0u);
    EXPECT_TRUE(std::isfinite(r.metrics.recon_l1));
    EXPECT_TRUE(std::isfinite(r.metrics.sg_mse));
    EXPECT_GE(r.metrics.probe_accuracy, 0.0);
    EXPECT_LE(r.metrics.probe_accuracy, 1.0);

    // parameters match an untouched model built from the same config
    Model fresh(cfg.model);
    auto got = r.model.trainable_params();
    auto want = fresh.trainable_params();
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i]->value, want[i]->value);
}

TEST(Train, DeterministicAcrossReruns) {
    Corpus c = tiny_corpus();
    StrategyConfig s;
    s.sg = true;
    TrainingConfig cfg = quick(s, 3);
    Metrics a = train(c, cfg).metrics;
    Metrics b = train(c, cfg).metrics;
    ASSERT_EQ(a.curve.size(), b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        EXPECT_EQ(a.curve[i].train, b.curve[i].train);
        EXPECT_EQ(a.curve[i].valid, b.curve[i].valid);
    }
    EXPECT_EQ(a.recon_l1, b.recon_l1);
    EXPECT_EQ(a.sg_mse, b.sg_mse);
    EXPECT_EQ(a.probe_accuracy, b.probe_accuracy);
}

TEST(Train, LossStrictlyDecreasesOnNoiseFreeCorpus) {
    Corpus c = tiny_corpus(21, 12, 0.0);
    StrategyConfig s;  // cross_modal stays on
    TrainingConfig cfg = quick(s, 5);
    Metrics m = train(c, cfg).metrics;
    ASSERT_EQ(m.curve.size(), 6u);
    for (std::size_t i = 1; i < m.curve.size(); ++i)
        EXPECT_LT(m.curve[i].train, m.curve[i - 1].train) << "epoch " << i;
}

TEST(Train, LambdaZeroMatchesSgOffBitwise) {
    Corpus c = tiny_corpus();
    StrategyConfig with_sg;
    with_sg.ssl = true;  // frozen prosody path so both configs train the same params
    with_sg.sg = true;
    StrategyConfig without = with_sg;
    without.sg = false;

    TrainingConfig a = quick(with_sg, 3);
    a.lambda_sg = 0.0;
    TrainingConfig b = quick(without, 3);

    Metrics ma = train(c, a).metrics;
    Metrics mb = train(c, b).metrics;
    ASSERT_EQ(ma.curve.size(), mb.curve.size());
    for (std::size_t i = 0; i < ma.curve.size(); ++i) {
        EXPECT_EQ(ma.curve[i].train, mb.curve[i].train);
        EXPECT_EQ(ma.curve[i].valid, mb.curve[i].valid);
    }
    EXPECT_EQ(ma.recon_l1, mb.recon_l1);
}

TEST(Train, FrozenEncodersUntouchedByOptimizer) {
    Corpus c = tiny_corpus();
    StrategyConfig s;
    s.ssl = true;
    TrainingConfig cfg = quick(s, 2);
    TrainResult r = train(c, cfg);

    // the unused trainable prosody encoder keeps its fresh-init values
    Model fresh(cfg.model);
    EXPECT_EQ(r.model.trainable_prosody_encoder().weight().value,
              fresh.trainable_prosody_encoder().weight().value);
    EXPECT_EQ(r.model.trainable_prosody_encoder().bias().value,
              fresh.trainable_prosody_encoder().bias().value);
    // and it is absent from the optimizer's list
    for (Param* p : r.model.trainable_params()) {
        EXPECT_NE(p, &r.model.trainable_prosody_encoder().weight());
        EXPECT_NE(p, &r.model.trainable_prosody_encoder().bias());
    }

    // context/decoder params did move
    bool moved = false;
    auto got = r.model.trainable_params();
    auto want = fresh.trainable_params();
    for (std::size_t i = 0; i < got.size(); ++i) moved |= !(got[i]->value == want[i]->value);
    EXPECT_TRUE(moved);
}

TEST(Train, DivergenceNamesTheEpoch) {
    Corpus c = tiny_corpus();
    StrategyConfig s;
    TrainingConfig cfg = quick(s, 3);
    cfg.lr = 1e308;  // first step overflows activations into inf/NaN
    try {
        train(c, cfg);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_GE(e.epoch, 1u);
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

namespace {

Dialogue grad_check_dialogue() {
    CorpusGenConfig g;
    g.n_dialogues = 1;
    g.turns_per_dialogue = 4;
    g.styles = 2;
    g.mel_dim = 4;
    g.vocab = 12;
    g.sentence_count_range = {1, 2};
    g.tokens_per_sentence_range = {2, 4};
    g.frames_per_sentence_range = {2, 4};
    g.seed = 77;
    return generate_corpus(g).train.front();
}

ModelConfig grad_check_model(StrategyConfig s) {
    ModelConfig mc;
    mc.strategy = s;
    mc.dims.d_l = 3;
    mc.dims.d_p = 3;
    mc.dims.hidden = 3;
    mc.dims.d_a = 3;
    mc.dims.d_e = 3;
    mc.vocab = 12;
    mc.mel_dim = 4;
    mc.d_tok = 3;
    mc.feat_dim = 4;
    mc.capacity = 2;
    return mc;
}

GradCheckReport pipeline_grad_check(Model& m, const Dialogue& d, std::vector<Param*> params) {
    auto build = [&](Graph& gr) {
        Value acc;
        for (std::size_t t = 2; t <= d.turns.size(); t += 2) {
            TurnForward f = m.forward_turn(gr, d, t);
            Value loss = total_loss(f.recon, f.sg, 0.7);
            acc = acc ? add(acc, loss) : loss;
        }
        return acc;
    };
    return grad_check(std::span<Param* const>(params), build, 1e-3);
}

}  // namespace

TEST(Train, EndToEndGradientCheckWithFlowingSgTarget) {
    // every gradient path live: trainable prosody encoder feeds both the
    // cross-modal history and the style-guided target
    Dialogue d = grad_check_dialogue();
    StrategyConfig s;
    s.sg = true;
    s.attn = true;
    s.fg = true;
    ModelConfig mc = grad_check_model(s);
    mc.sg_target_flows = true;
    Model m(mc);
    GradCheckReport rep = pipeline_grad_check(m, d, m.trainable_params());
    EXPECT_TRUE(rep.pass()) << "worst rel err " << rep.worst();
}

TEST(Train, EndToEndGradientCheckWithFrozenProsody) {
    Dialogue d = grad_check_dialogue();
    StrategyConfig s;
    s.ssl = true;
    s.sg = true;
    s.attn = true;
    Model m(grad_check_model(s));
    GradCheckReport rep = pipeline_grad_check(m, d, m.trainable_params());
    EXPECT_TRUE(rep.pass()) << "worst rel err " << rep.worst();
}

TEST(Train, EndToEndGradientCheckWithDetachedTarget) {
    // default config: the sg target is a constant. Finite differences over
    // the prosody encoder would see the target move, so the check covers
    // the params the detached target cannot depend on.
    Dialogue d = grad_check_dialogue();
    StrategyConfig s;
    s.sg = true;
    s.fg = true;
    s.attn = true;
    Model m(grad_check_model(s));
    std::vector<Param*> params;
    for (Param* p : m.trainable_params())
        if (p->name.rfind("prosody_enc", 0) != 0) params.push_back(p);
    GradCheckReport rep = pipeline_grad_check(m, d, params);
    EXPECT_TRUE(rep.pass()) << "worst rel err " << rep.worst();
}

TEST(Evaluate, MeanIsIndependentOfDialogueOrder) {
    Corpus c = tiny_corpus(8, 6);
    StrategyConfig s;
    Model m(tiny_model(s));
    std::vector<Dialogue> fwd = c.train;
    std::vector<Dialogue> rev(fwd.rbegin(), fwd.rend());
    EvalResult a = evaluate_split(m, fwd, 1.0);
    EvalResult b = evaluate_split(m, rev, 1.0);
    EXPECT_EQ(a.recon_l1, b.recon_l1);
    EXPECT_EQ(a.total, b.total);
    EXPECT_EQ(a.sg_mse, b.sg_mse);
}

TEST(Probe, ConstantFeaturesScoreMajorityClassFrequency) {
    const Tensor x = Tensor::row({1.0, 2.0, 3.0});
    std::vector<Tensor> xt(6, x), xe(4, x);
    std::vector<int> yt = {0, 0, 0, 0, 1, 2};  // majority class 0
    std::vector<int> ye = {0, 0, 1, 2};        // class 0 frequency 0.5
    EXPECT_DOUBLE_EQ(probe_accuracy(xt, yt, xe, ye, 3), 0.5);
}

TEST(Probe, OneHotFeaturesScorePerfectly) {
    auto onehot = [](int k) {
        Tensor t = Tensor::zeros({1, 3});
        t[static_cast<std::size_t>(k)] = 1.0;
        return t;
    };
    std::vector<Tensor> xt, xe;
    std::vector<int> yt, ye;
    for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 3; ++k) {
            xt.push_back(onehot(k));
            yt.push_back(k);
        }
    for (int k = 0; k < 3; ++k) {
        xe.push_back(onehot(k));
        ye.push_back(k);
    }
    EXPECT_DOUBLE_EQ(probe_accuracy(xt, yt, xe, ye, 3), 1.0);
}

TEST(Probe, MissingStyleLabelsRejected) {
    Corpus c = tiny_corpus();
    c.train[0].turns[1].sentences[0].style_id.reset();
    EXPECT_FALSE(has_style_labels(c));
    StrategyConfig s;
    Model m(tiny_model(s));
    EXPECT_THROW(probe_style(m, c), DataError);
}

TEST(Infer, NoFeedbackPathWithoutCrossModal) {
    Corpus c = tiny_corpus();
    const Dialogue& d = c.train.front();
    StrategyConfig s;
    s.cross_modal = false;
    Model m(tiny_model(s));
    std::vector<InferredTurn> inf = infer_dialogue(m, d);
    ASSERT_EQ(inf.size(), 2u);
    for (const InferredTurn& it : inf) {
        Graph g;
        TurnForward f = m.forward_turn(g, d, it.turn);
        for (std::size_t k = 0; k < it.features.size(); ++k)
            EXPECT_EQ(it.features[k], f.features[k].value());
    }
}

TEST(Infer, FeedbackChangesLaterTurnsWhenCrossModal) {
    Corpus c = tiny_corpus();
    const Dialogue& d = c.train.front();
    StrategyConfig s;  // cross_modal on
    Model m(tiny_model(s));
    std::vector<InferredTurn> inf = infer_dialogue(m, d);
    ASSERT_EQ(inf.size(), 2u);

    // turn 2: no prior Agent prediction to feed back, identical to teacher forcing
    {
        Graph g;
        TurnForward f = m.forward_turn(g, d, inf[0].turn);
        for (std::size_t k = 0; k < inf[0].features.size(); ++k)
            EXPECT_EQ(inf[0].features[k], f.features[k].value());
    }
    // turn 4: history now contains the model's own turn-2 prediction
    {
        Graph g;
        TurnForward f = m.forward_turn(g, d, inf[1].turn);
        bool differs = false;
        for (std::size_t k = 0; k < inf[1].features.size(); ++k)
            differs |= !(inf[1].features[k] == f.features[k].value());
        EXPECT_TRUE(differs);
    }
}
