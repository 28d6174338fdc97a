#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "convotts/adam.hpp"
#include "convotts/corpus_gen.hpp"
#include "convotts/model.hpp"

namespace convotts {

struct TrainingConfig {
    ModelConfig model;
    double lr = 1e-3;  // larger rates want warmup this loop doesn't have; keep a toy-scale default
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double lambda_sg = 1.0;
    std::size_t epochs = 50;
    std::uint64_t shuffle_seed = 0;
};

struct EpochLoss {
    double train = 0.0;
    double valid = 0.0;
};

struct Metrics {
    std::vector<EpochLoss> curve;  // entry 0 is the pre-training evaluation
    double recon_l1 = std::numeric_limits<double>::quiet_NaN();
    double sg_mse = std::numeric_limits<double>::quiet_NaN();  // NaN when d_e != d_p
    double probe_accuracy = std::numeric_limits<double>::quiet_NaN();
    std::size_t best_epoch = 0;
};

namespace detail {

inline double tensor_mse(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("mse over mismatched shapes");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

/// MSE between the turn's context embedding(s) and the model's prosody
/// target(s), mirroring the style-guided loss pairing. Usable as a metric
/// even when the sg loss itself is off.
inline double turn_sg_mse(Model& m, Graph& g, const Dialogue& d, std::size_t t,
                          const TurnForward& f) {
    const ModelConfig& cfg = m.config();
    const Turn& cur = d.turns[t - 1];
    if (cfg.strategy.fg && cfg.fg_sentence_targets) {
        double s = 0.0;
        for (std::size_t k = 0; k < f.embeddings.size(); ++k)
            s += tensor_mse(f.embeddings[k].value(),
                            m.prosody_sentence(g, d, cur, k, nullptr, nullptr).value());
        return s / static_cast<double>(f.embeddings.size());
    }
    const Tensor p = m.prosody_turn(g, d, cur, nullptr, nullptr).value();
    double s = 0.0;
    for (const Value& e : f.embeddings) s += tensor_mse(e.value(), p);
    return s / static_cast<double>(f.embeddings.size());
}

/// Sorted before reduction so the mean is a function of the multiset of
/// per-example values, not of evaluation order.
inline double order_free_mean(std::vector<double> vals) {
    if (vals.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(vals.begin(), vals.end());
    double s = 0.0;
    for (double v : vals) s += v;
    return s / static_cast<double>(vals.size());
}

}  // namespace detail

inline std::vector<std::pair<const Dialogue*, std::size_t>> agent_examples(
    const std::vector<Dialogue>& split) {
    std::vector<std::pair<const Dialogue*, std::size_t>> out;
    for (const Dialogue& d : split)
        for (std::size_t t = 1; t <= d.turns.size(); ++t)
            if (d.turns[t - 1].speaker == Speaker::Agent) out.emplace_back(&d, t);
    return out;
}

struct EvalResult {
    double recon_l1 = std::numeric_limits<double>::quiet_NaN();
    double total = std::numeric_limits<double>::quiet_NaN();  // recon + lambda * sg
    double sg_mse = std::numeric_limits<double>::quiet_NaN();
};

/// Teacher-forced pass over a split, no parameter updates.
inline EvalResult evaluate_split(Model& m, const std::vector<Dialogue>& split, double lambda_sg) {
    const bool widths_match = m.config().dims.d_e == m.config().dims.d_p;
    std::vector<double> recon, total, sg;
    for (const auto& [d, t] : agent_examples(split)) {
        Graph g;
        TurnForward f = m.forward_turn(g, *d, t);
        const double r = f.recon.value()[0];
        recon.push_back(r);
        total.push_back(f.sg ? r + lambda_sg * f.sg.value()[0] : r);
        if (widths_match) sg.push_back(detail::turn_sg_mse(m, g, *d, t, f));
    }
    EvalResult out;
    out.recon_l1 = detail::order_free_mean(std::move(recon));
    out.total = detail::order_free_mean(std::move(total));
    if (widths_match) out.sg_mse = detail::order_free_mean(std::move(sg));
    return out;
}

/// Least-squares linear probe: ridge fit from embeddings to one-hot labels
/// on the train set, argmax accuracy on the eval set.
inline double probe_accuracy(const std::vector<Tensor>& x_train,
                             const std::vector<int>& y_train,
                             const std::vector<Tensor>& x_eval, const std::vector<int>& y_eval,
                             std::size_t classes) {
    if (x_train.empty() || x_eval.empty()) throw DataError("probe needs nonempty splits");
    if (x_train.size() != y_train.size() || x_eval.size() != y_eval.size())
        throw DataError("probe features and labels differ in length");
    const std::size_t dim = x_train.front().size();
    const auto n = static_cast<Eigen::Index>(x_train.size());
    Eigen::MatrixXd X(n, dim + 1);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(classes));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Tensor& x = x_train[static_cast<std::size_t>(i)];
        if (x.size() != dim) throw ShapeError("probe feature width varies");
        for (std::size_t j = 0; j < dim; ++j) X(i, static_cast<Eigen::Index>(j)) = x[j];
        X(i, static_cast<Eigen::Index>(dim)) = 1.0;
        Y(i, y_train[static_cast<std::size_t>(i)]) = 1.0;
    }
    Eigen::MatrixXd gram = X.transpose() * X;
    gram.diagonal().array() += 1e-6;
    const Eigen::MatrixXd W = gram.ldlt().solve(X.transpose() * Y);

    std::size_t hit = 0;
    for (std::size_t i = 0; i < x_eval.size(); ++i) {
        const Tensor& x = x_eval[i];
        if (x.size() != dim) throw ShapeError("probe feature width varies");
        Eigen::RowVectorXd row(dim + 1);
        for (std::size_t j = 0; j < dim; ++j) row(static_cast<Eigen::Index>(j)) = x[j];
        row(static_cast<Eigen::Index>(dim)) = 1.0;
        Eigen::Index best = 0;
        (row * W).maxCoeff(&best);
        hit += (static_cast<int>(best) == y_eval[i]);
    }
    return static_cast<double>(hit) / static_cast<double>(x_eval.size());
}

namespace detail {

/// Turn-level context embedding for probing: fg models are averaged over
/// their per-sentence embeddings.
inline Tensor probe_feature(const TurnForward& f) {
    Tensor acc = f.embeddings.front().value();
    for (std::size_t k = 1; k < f.embeddings.size(); ++k) {
        const Tensor& e = f.embeddings[k].value();
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += e[j];
    }
    const double inv = 1.0 / static_cast<double>(f.embeddings.size());
    for (double& v : acc.data()) v *= inv;
    return acc;
}

inline void probe_split(Model& m, const std::vector<Dialogue>& split, std::vector<Tensor>& xs,
                        std::vector<int>& ys) {
    for (const auto& [d, t] : agent_examples(split)) {
        const Sentence& first = d->turns[t - 1].sentences.front();
        if (!first.style_id)
            throw DataError("dialogue '" + d->id + "' has Agent turns without style labels");
        Graph g;
        xs.push_back(probe_feature(m.forward_turn(g, *d, t)));
        ys.push_back(*first.style_id);
    }
}

}  // namespace detail

inline bool has_style_labels(const Corpus& corpus) {
    for (const std::vector<Dialogue>* split : {&corpus.train, &corpus.eval})
        for (const auto& [d, t] : agent_examples(*split))
            if (!d->turns[t - 1].sentences.front().style_id) return false;
    return true;
}

/// Fit on the train split, report accuracy on the eval split.
inline double probe_style(Model& m, const Corpus& corpus) {
    std::vector<Tensor> x_train, x_eval;
    std::vector<int> y_train, y_eval;
    detail::probe_split(m, corpus.train, x_train, y_train);
    detail::probe_split(m, corpus.eval, x_eval, y_eval);
    int max_label = 0;
    for (int y : y_train) max_label = std::max(max_label, y);
    for (int y : y_eval) max_label = std::max(max_label, y);
    return probe_accuracy(x_train, y_train, x_eval, y_eval,
                          static_cast<std::size_t>(max_label) + 1);
}

struct TrainResult {
    Model model;
    Metrics metrics;
};

/// Batch-size-1 training over Agent turns, shuffled per epoch from one
/// seeded stream. Keeps the best-valid parameters and restores them at the
/// end; evaluates the eval split and fits the style probe on the result.
inline TrainResult train(const Corpus& corpus, const TrainingConfig& cfg) {
    AdamConfig ac{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
    validate_adam(ac);
    if (cfg.lambda_sg < 0.0) throw ConfigError("lambda_sg must be >= 0");
    if (corpus.train.empty()) throw DataError("training split is empty");

    Model model(cfg.model);
    auto examples = agent_examples(corpus.train);
    if (examples.empty()) throw DataError("training split has no Agent turns");

    // degenerate corpora without held-out splits fall back to the train split
    const std::vector<Dialogue>& valid_split = corpus.valid.empty() ? corpus.train : corpus.valid;
    const std::vector<Dialogue>& eval_split = corpus.eval.empty() ? corpus.train : corpus.eval;

    std::vector<Param*> params = model.trainable_params();
    Adam opt(params, ac);

    Metrics metrics;
    auto snapshot = [&]() {
        std::vector<Tensor> s;
        s.reserve(params.size());
        for (Param* p : params) s.push_back(p->value);
        return s;
    };

    EvalResult ev_train = evaluate_split(model, corpus.train, cfg.lambda_sg);
    EvalResult ev_valid = evaluate_split(model, valid_split, cfg.lambda_sg);
    metrics.curve.push_back({ev_train.total, ev_valid.total});
    double best_valid = ev_valid.total;
    std::vector<Tensor> best = snapshot();
    metrics.best_epoch = 0;

    std::mt19937_64 order(cfg.shuffle_seed);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(examples.begin(), examples.end(), order);
        double sum = 0.0;
        for (const auto& [d, t] : examples) {
            for (Param* p : params) p->zero_grad();
            Graph g;
            TurnForward f = model.forward_turn(g, *d, t);
            Value loss = total_loss(f.recon, f.sg, cfg.lambda_sg);
            const double lv = loss.value()[0];
            if (!std::isfinite(lv))
                throw DivergenceError("training loss became non-finite", epoch);
            g.backward(loss);
            opt.step();
            sum += lv;
        }
        EvalResult valid = evaluate_split(model, valid_split, cfg.lambda_sg);
        metrics.curve.push_back({sum / static_cast<double>(examples.size()), valid.total});
        if (valid.total < best_valid) {
            best_valid = valid.total;
            best = snapshot();
            metrics.best_epoch = epoch;
        }
    }

    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];

    EvalResult ev = evaluate_split(model, eval_split, cfg.lambda_sg);
    metrics.recon_l1 = ev.recon_l1;
    metrics.sg_mse = ev.sg_mse;
    if (!corpus.eval.empty() && has_style_labels(corpus))
        metrics.probe_accuracy = probe_style(model, corpus);
    return TrainResult{std::move(model), std::move(metrics)};
}

struct InferredTurn {
    std::size_t turn = 0;                // 1-based dialogue position
    std::vector<Tensor> features;        // one matrix per sentence
    std::vector<Tensor> mel;             // features mapped onto mel width
};

/// Chronological inference: User history prosody still comes from corpus
/// mel, but each Agent turn's prosody is replaced by the model's own earlier
/// predictions. With cross_modal=false nothing reads the override, so this
/// matches teacher-forced prediction exactly.
inline std::vector<InferredTurn> infer_dialogue(Model& m, const Dialogue& d) {
    MelOverride ov;
    std::vector<InferredTurn> out;
    for (std::size_t t = 1; t <= d.turns.size(); ++t) {
        if (d.turns[t - 1].speaker != Speaker::Agent) continue;
        Graph g;
        TurnForward f = m.forward_turn(g, d, t, nullptr, &ov);
        InferredTurn it;
        it.turn = t;
        for (const Value& feats : f.features) {
            it.features.push_back(feats.value());
            it.mel.push_back(features_to_mel(feats.value(), m.config().mel_dim));
        }
        ov[t] = it.mel;
        out.push_back(std::move(it));
    }
    return out;
}

}  // namespace convotts
