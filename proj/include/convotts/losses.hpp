#pragma once

#include "convotts/graph.hpp"

namespace convotts {

/// Mean absolute error against a constant target.
inline Value recon_loss(Value pred, const Tensor& target) {
    Graph& g = *pred.graph();
    return mean(abs(sub(pred, g.input(target))));
}

/// Mean squared error between a context embedding and a prosody embedding.
/// Pass the target as a graph input for the constant (detached) form, or as
/// a live value to let gradient flow into a trainable prosody encoder.
inline Value style_guided_loss(Value e, Value p) {
    Value d = sub(e, p);
    return mean(mul(d, d));
}

inline Value total_loss(Value recon, Value sg, double lambda_sg) {
    if (!sg || lambda_sg == 0.0) return recon;
    return add(recon, scale(sg, lambda_sg));
}

}  // namespace convotts
