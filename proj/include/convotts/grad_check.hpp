#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "convotts/graph.hpp"

namespace convotts {

/// Per-parameter comparison of analytic gradients against central finite
/// differences. This is the verification oracle: it only needs the forward
/// pass, so it stays independent of the backward implementation it checks.
struct GradCheckReport {
    struct Entry {
        std::string param;
        double max_rel_err = 0.0;
    };
    std::vector<Entry> entries;
    double tolerance = 0.0;

    bool pass() const {
        return std::all_of(entries.begin(), entries.end(),
                           [this](const Entry& e) { return e.max_rel_err <= tolerance; });
    }

    double worst() const {
        double w = 0.0;
        for (const Entry& e : entries) w = std::max(w, e.max_rel_err);
        return w;
    }
};

/// rel err = |a - b| / max(|a|, |b|, 1e-6); the floor makes near-zero
/// gradients compare absolutely at 1e-6 scale.
inline double relative_error(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

/// `build` must construct the loss on a fresh graph from the CURRENT values
/// of `params` (and any captured constants) and return the scalar loss node.
template <typename BuildLoss>
GradCheckReport grad_check(std::span<Param* const> params, BuildLoss&& build, double tolerance,
                           double step = 1e-5) {
    GradCheckReport report;
    report.tolerance = tolerance;

    for (Param* p : params) p->zero_grad();
    std::vector<Tensor> analytic;
    {
        Graph g;
        Value loss = build(g);
        g.backward(loss);
        for (Param* p : params) analytic.push_back(p->grad);
    }

    auto forward = [&]() {
        Graph g;
        return build(g).value()[0];
    };

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = *params[pi];
        GradCheckReport::Entry entry;
        entry.param = p.name;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + step;
            const double plus = forward();
            p.value[i] = saved - step;
            const double minus = forward();
            p.value[i] = saved;
            const double fd = (plus - minus) / (2.0 * step);
            entry.max_rel_err = std::max(entry.max_rel_err, relative_error(analytic[pi][i], fd));
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace convotts
