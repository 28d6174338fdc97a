#pragma once

#include <random>
#include <span>
#include <string>

#include "convotts/graph.hpp"
#include "convotts/layers.hpp"

namespace convotts {

/// Toy per-token acoustic decoder: each token row is the token embedding
/// shifted by a projection of the context embedding, pushed through a small
/// feedforward stack. Output is a [tokens x F] feature matrix.
class Decoder {
  public:
    Decoder() = default;
    Decoder(std::size_t vocab, std::size_t d_tok, std::size_t d_e, std::size_t feat_dim,
            std::mt19937_64& rng)
        : feat_dim_(feat_dim),
          table_("decoder.tokens",
                 uniform_init({vocab, d_tok}, 1.0 / std::sqrt(static_cast<double>(d_tok)), rng)),
          ctx_proj_(d_e, d_tok, "decoder.ctx", rng),
          ff1_(d_tok, d_tok, "decoder.ff1", rng),
          ff2_(d_tok, feat_dim, "decoder.ff2", rng) {}

    std::size_t feat_dim() const { return feat_dim_; }

    /// tokens nonempty; e is [1 x d_e]. Out-of-vocab tokens throw.
    Value decode(Graph& g, std::span<const std::size_t> tokens, Value e) {
        if (tokens.empty()) throw std::invalid_argument("decode needs at least one token");
        Value rows = gather_rows(g.param(table_), tokens);
        Value shifted = add_rowwise(rows, ctx_proj_(g, e));
        return ff2_(g, tanh(ff1_(g, shifted)));
    }

    void collect(std::vector<Param*>& out) {
        out.push_back(&table_);
        ctx_proj_.collect(out);
        ff1_.collect(out);
        ff2_.collect(out);
    }

  private:
    std::size_t feat_dim_ = 0;
    Param table_;
    Linear ctx_proj_;
    Linear ff1_;
    Linear ff2_;
};

/// Fixed feature-to-mel stub used on the inference feedback path: identity
/// with column padding/truncation to the mel width.
inline Tensor features_to_mel(const Tensor& features, std::size_t mel_dim) {
    Tensor mel = Tensor::zeros({features.rows(), mel_dim});
    const std::size_t copy = features.cols() < mel_dim ? features.cols() : mel_dim;
    for (std::size_t r = 0; r < features.rows(); ++r)
        for (std::size_t c = 0; c < copy; ++c) mel.at(r, c) = features.at(r, c);
    return mel;
}

}  // namespace convotts
