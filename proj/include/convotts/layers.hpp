#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "convotts/graph.hpp"

namespace convotts {

class Linear {
  public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, const std::string& name, std::mt19937_64& rng)
        : w_(name + ".W", uniform_init({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
          b_(name + ".b", Tensor::zeros({1, out})) {}

    Value operator()(Graph& g, Value x) {
        return add_rowwise(matmul(x, g.param(w_)), g.param(b_));
    }

    Param& weight() { return w_; }
    Param& bias() { return b_; }

    void collect(std::vector<Param*>& out) {
        out.push_back(&w_);
        out.push_back(&b_);
    }

  private:
    Param w_;
    Param b_;
};

/// Gated recurrent unit over row-vector states:
///   z = sigmoid(x Wz + h Uz + bz)
///   r = sigmoid(x Wr + h Ur + br)
///   n = tanh(x Wn + (r*h) Un + bn)
///   h' = (1-z)*n + z*h
/// Biases start at zero, which pins the zero-input, zero-state fixed point:
/// left-PAD slots fed as zero vectors leave the state untouched at init.
class GruCell {
  public:
    GruCell() = default;
    GruCell(std::size_t in, std::size_t hidden, const std::string& name, std::mt19937_64& rng)
        : hidden_(hidden) {
        const double wl = 1.0 / std::sqrt(static_cast<double>(in));
        const double ul = 1.0 / std::sqrt(static_cast<double>(hidden));
        wz_ = Param(name + ".Wz", uniform_init({in, hidden}, wl, rng));
        uz_ = Param(name + ".Uz", uniform_init({hidden, hidden}, ul, rng));
        bz_ = Param(name + ".bz", Tensor::zeros({1, hidden}));
        wr_ = Param(name + ".Wr", uniform_init({in, hidden}, wl, rng));
        ur_ = Param(name + ".Ur", uniform_init({hidden, hidden}, ul, rng));
        br_ = Param(name + ".br", Tensor::zeros({1, hidden}));
        wn_ = Param(name + ".Wn", uniform_init({in, hidden}, wl, rng));
        un_ = Param(name + ".Un", uniform_init({hidden, hidden}, ul, rng));
        bn_ = Param(name + ".bn", Tensor::zeros({1, hidden}));
    }

    std::size_t hidden() const { return hidden_; }

    Value zero_state(Graph& g) const { return g.input(Tensor::zeros({1, hidden_})); }

    Value step(Graph& g, Value x, Value h) {
        Value z = sigmoid(add_rowwise(add(matmul(x, g.param(wz_)), matmul(h, g.param(uz_))),
                                      g.param(bz_)));
        Value r = sigmoid(add_rowwise(add(matmul(x, g.param(wr_)), matmul(h, g.param(ur_))),
                                      g.param(br_)));
        Value n = tanh(add_rowwise(add(matmul(x, g.param(wn_)), matmul(mul(r, h), g.param(un_))),
                                   g.param(bn_)));
        Value ones = g.input(Tensor::full({1, hidden_}, 1.0));
        return add(mul(sub(ones, z), n), mul(z, h));
    }

    /// All hidden states h_1..h_T from a zero initial state.
    std::vector<Value> run_all(Graph& g, std::span<const Value> xs) {
        std::vector<Value> states;
        Value h = zero_state(g);
        for (const Value& x : xs) {
            h = step(g, x, h);
            states.push_back(h);
        }
        return states;
    }

    /// Final hidden state; zero-length input yields the zero summary.
    Value run(Graph& g, std::span<const Value> xs) {
        Value h = zero_state(g);
        for (const Value& x : xs) h = step(g, x, h);
        return h;
    }

    void collect(std::vector<Param*>& out) {
        for (Param* p : {&wz_, &uz_, &bz_, &wr_, &ur_, &br_, &wn_, &un_, &bn_}) out.push_back(p);
    }

  private:
    std::size_t hidden_ = 0;
    Param wz_, uz_, bz_;
    Param wr_, ur_, br_;
    Param wn_, un_, bn_;
};

/// Two independent GRU cells scanning opposite directions; per-step output is
/// the concatenation [forward_i ; backward_i] of width 2h.
class BGru {
  public:
    BGru() = default;
    BGru(std::size_t in, std::size_t hidden, const std::string& name, std::mt19937_64& rng)
        : fwd_(in, hidden, name + ".fwd", rng), bwd_(in, hidden, name + ".bwd", rng) {}

    std::size_t out_dim() const { return 2 * fwd_.hidden(); }

    std::vector<Value> run(Graph& g, std::span<const Value> xs) {
        std::vector<Value> f = fwd_.run_all(g, xs);
        std::vector<Value> rev(xs.rbegin(), xs.rend());
        std::vector<Value> b = bwd_.run_all(g, rev);
        std::vector<Value> out;
        out.reserve(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i)
            out.push_back(concat_cols(f[i], b[xs.size() - 1 - i]));
        return out;
    }

    /// Zero-length input yields the zero summary.
    Value summary(Graph& g, std::span<const Value> xs) {
        if (xs.empty()) return g.input(Tensor::zeros({1, out_dim()}));
        return run(g, xs).back();
    }

    void collect(std::vector<Param*>& out) {
        fwd_.collect(out);
        bwd_.collect(out);
    }

    GruCell& fwd() { return fwd_; }
    GruCell& bwd() { return bwd_; }

  private:
    GruCell fwd_;
    GruCell bwd_;
};

struct AttentionResult {
    Value context;   // [1 x d_a]
    Tensor weights;  // [1 x C]; exact zeros on masked slots
    bool empty = false;  // every slot masked: context is the zero vector
};

/// Scaled dot-product attention over C history slots. Masked (PAD) slots get
/// score -inf, hence weight exactly 0; an all-masked window short-circuits to
/// a zero context so downstream layers see only their biases.
class AttentionBlock {
  public:
    AttentionBlock() = default;
    AttentionBlock(std::size_t query_dim, std::size_t kv_dim, std::size_t attn_dim,
                   const std::string& name, std::mt19937_64& rng)
        : attn_dim_(attn_dim),
          q_(query_dim, attn_dim, name + ".q", rng),
          k_(kv_dim, attn_dim, name + ".k", rng),
          v_(kv_dim, attn_dim, name + ".v", rng),
          out_(attn_dim, attn_dim, name + ".out", rng) {}

    std::size_t dim() const { return attn_dim_; }

    AttentionResult forward(Graph& g, Value query, std::span<const Value> kv_inputs,
                            const std::vector<std::uint8_t>& keep) {
        if (kv_inputs.size() != keep.size())
            throw std::invalid_argument("attention mask length must match slot count");
        const std::size_t c = kv_inputs.size();
        bool any_kept = false;
        for (auto k : keep) any_kept = any_kept || (k != 0);
        if (!any_kept) {
            return AttentionResult{g.input(Tensor::zeros({1, attn_dim_})),
                                   Tensor::zeros({1, c}), true};
        }

        Value q = q_(g, query);
        std::vector<Value> scores;
        std::vector<Value> values;
        scores.reserve(c);
        values.reserve(c);
        for (std::size_t i = 0; i < c; ++i) {
            Value key = k_(g, kv_inputs[i]);
            scores.push_back(dot(q, key));
            values.push_back(v_(g, kv_inputs[i]));
        }
        Value score_row =
            scale(concat_cols(scores), 1.0 / std::sqrt(static_cast<double>(attn_dim_)));
        Value w = masked_softmax(score_row, keep);
        Value context = out_(g, matmul(w, concat_rows(values)));
        return AttentionResult{context, w.value(), false};
    }

    void collect(std::vector<Param*>& out) {
        q_.collect(out);
        k_.collect(out);
        v_.collect(out);
        out_.collect(out);
    }

  private:
    std::size_t attn_dim_ = 0;
    Linear q_, k_, v_, out_;
};

}  // namespace convotts
