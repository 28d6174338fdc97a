#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "convotts/tensor.hpp"

namespace convotts {

/// Named trainable tensor. Gradients accumulate into `grad` across backward()
/// calls until zeroed; optimizers read and apply them.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape());
    }

    void zero_grad() {
        for (double& g : grad.data()) g = 0.0;
    }
};

enum class Op : std::uint8_t {
    Input,
    Add,
    Sub,
    Mul,
    Scale,
    AddRowwise,
    MatMul,
    Tanh,
    Sigmoid,
    Abs,
    Sum,
    Mean,
    MaskedSoftmax,
    ConcatCols,
    ConcatRows,
    GatherRows,
};

class Graph;

struct Node {
    Tensor value;
    Tensor grad;  // accumulates across backward() calls
    Op op = Op::Input;
    std::vector<Node*> parents;
    Param* param = nullptr;          // set for parameter leaves
    double scalar_aux = 0.0;         // Scale factor
    std::vector<std::size_t> index_aux;  // GatherRows row ids
    std::vector<std::uint8_t> mask_aux;  // MaskedSoftmax keep-mask
    std::size_t id = 0;
};

/// Handle into a Graph-owned node. Valid only while the graph lives.
class Value {
  public:
    Value() = default;
    Value(Graph* g, Node* n) : graph_(g), node_(n) {}

    const Tensor& value() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
    Graph* graph() const { return graph_; }
    Node* node() const { return node_; }
    explicit operator bool() const { return node_ != nullptr; }

  private:
    Graph* graph_ = nullptr;
    Node* node_ = nullptr;
};

/// Define-by-run computation graph. Nodes are created in topological order by
/// construction; backward() walks them in reverse. Single-threaded per graph.
class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Value input(Tensor t) {
        Node& n = make(Op::Input, {});
        n.value = std::move(t);
        n.grad = Tensor::zeros(n.value.shape());
        return Value(this, &n);
    }

    Value param(Param& p) {
        Node& n = make(Op::Input, {});
        n.value = p.value;
        n.grad = Tensor::zeros(n.value.shape());
        n.param = &p;
        return Value(this, &n);
    }

    std::size_t node_count() const { return nodes_.size(); }

    /// Reverse-mode sweep from a scalar loss. Adjoints are computed fresh each
    /// call and then added into every node's grad (and bound params' grads),
    /// so repeated calls without zero_grad() accumulate.
    void backward(Value loss) {
        Node* root = loss.node();
        if (root->value.size() != 1) {
            throw ShapeError("backward requires a scalar loss, got " + root->value.shape_string());
        }
        std::vector<Tensor> adj(nodes_.size());
        adj[root->id] = Tensor::full(root->value.shape(), 1.0);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (adj[n.id].size() == 0) continue;  // unreachable from loss
            propagate(n, adj);
        }
        for (Node& n : nodes_) {
            if (adj[n.id].size() == 0) continue;
            accumulate(n.grad, adj[n.id]);
            if (n.param != nullptr) accumulate(n.param->grad, adj[n.id]);
        }
    }

    void zero_grad() {
        for (Node& n : nodes_) {
            for (double& g : n.grad.data()) g = 0.0;
        }
    }

    Node& make(Op op, std::vector<Node*> parents) {
        nodes_.emplace_back();
        Node& n = nodes_.back();
        n.op = op;
        n.parents = std::move(parents);
        n.id = nodes_.size() - 1;
        return n;
    }

  private:
    static void accumulate(Tensor& dst, const Tensor& src) {
        auto d = dst.data();
        auto s = src.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    }

    static Tensor& adjoint_of(Node* n, std::vector<Tensor>& adj) {
        Tensor& a = adj[n->id];
        if (a.size() == 0) a = Tensor::zeros(n->value.shape());
        return a;
    }

    void propagate(Node& n, std::vector<Tensor>& adj) {
        const Tensor& g = adj[n.id];
        switch (n.op) {
            case Op::Input:
                break;
            case Op::Add: {
                accumulate(adjoint_of(n.parents[0], adj), g);
                accumulate(adjoint_of(n.parents[1], adj), g);
                break;
            }
            case Op::Sub: {
                accumulate(adjoint_of(n.parents[0], adj), g);
                Tensor& b = adjoint_of(n.parents[1], adj);
                auto bd = b.data();
                auto gd = g.data();
                for (std::size_t i = 0; i < bd.size(); ++i) bd[i] -= gd[i];
                break;
            }
            case Op::Mul: {
                Tensor& a = adjoint_of(n.parents[0], adj);
                Tensor& b = adjoint_of(n.parents[1], adj);
                auto av = n.parents[0]->value.data();
                auto bv = n.parents[1]->value.data();
                auto gd = g.data();
                for (std::size_t i = 0; i < gd.size(); ++i) {
                    a.data()[i] += gd[i] * bv[i];
                    b.data()[i] += gd[i] * av[i];
                }
                break;
            }
            case Op::Scale: {
                Tensor& a = adjoint_of(n.parents[0], adj);
                auto gd = g.data();
                for (std::size_t i = 0; i < gd.size(); ++i) a.data()[i] += gd[i] * n.scalar_aux;
                break;
            }
            case Op::AddRowwise: {
                Tensor& m = adjoint_of(n.parents[0], adj);
                Tensor& r = adjoint_of(n.parents[1], adj);
                accumulate(m, g);
                const std::size_t rows = n.value.rows(), cols = n.value.cols();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) r.data()[j] += g.at(i, j);
                break;
            }
            case Op::MatMul: {
                const Tensor& a = n.parents[0]->value;
                const Tensor& b = n.parents[1]->value;
                Tensor& da = adjoint_of(n.parents[0], adj);
                Tensor& db = adjoint_of(n.parents[1], adj);
                const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
                // dA += g * B^T ; dB += A^T * g
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        double s = 0.0;
                        for (std::size_t l = 0; l < p; ++l) s += g.at(i, l) * b.at(j, l);
                        da.at(i, j) += s;
                    }
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < p; ++j) {
                        double s = 0.0;
                        for (std::size_t l = 0; l < m; ++l) s += a.at(l, i) * g.at(l, j);
                        db.at(i, j) += s;
                    }
                break;
            }
            case Op::Tanh: {
                Tensor& a = adjoint_of(n.parents[0], adj);
                auto y = n.value.data();
                auto gd = g.data();
                for (std::size_t i = 0; i < gd.size(); ++i)
                    a.data()[i] += gd[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Op::Sigmoid: {
                Tensor& a = adjoint_of(n.parents[0], adj);
                auto y = n.value.data();
                auto gd = g.data();
                for (std::size_t i = 0; i < gd.size(); ++i)
                    a.data()[i] += gd[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case Op::Abs: {
                Tensor& a = adjoint_of(n.parents[0], adj);
                auto x = n.parents[0]->value.data();
                auto gd = g.data();
                for (std::size_t i = 0; i < gd.size(); ++i) {
                    const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
                    a.data()[i] += gd[i] * s;
                }
                break;
            }
            case Op::Sum: {
                Tensor& a = adjoint_of(n.parents[0], adj);
                const double gv = g[0];
                for (double& x : a.data()) x += gv;
                break;
            }
            case Op::Mean: {
                Tensor& a = adjoint_of(n.parents[0], adj);
                const double gv = g[0] / static_cast<double>(n.parents[0]->value.size());
                for (double& x : a.data()) x += gv;
                break;
            }
            case Op::MaskedSoftmax: {
                Tensor& a = adjoint_of(n.parents[0], adj);
                auto y = n.value.data();
                auto gd = g.data();
                double dot = 0.0;
                for (std::size_t i = 0; i < gd.size(); ++i)
                    if (n.mask_aux[i]) dot += gd[i] * y[i];
                for (std::size_t i = 0; i < gd.size(); ++i)
                    if (n.mask_aux[i]) a.data()[i] += y[i] * (gd[i] - dot);
                break;
            }
            case Op::ConcatCols: {
                std::size_t offset = 0;
                for (Node* p : n.parents) {
                    Tensor& a = adjoint_of(p, adj);
                    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += g[offset + i];
                    offset += a.size();
                }
                break;
            }
            case Op::ConcatRows: {
                std::size_t row = 0;
                const std::size_t cols = n.value.cols();
                for (Node* p : n.parents) {
                    Tensor& a = adjoint_of(p, adj);
                    const std::size_t r = p->value.rows();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < cols; ++j) a.at(i, j) += g.at(row + i, j);
                    row += r;
                }
                break;
            }
            case Op::GatherRows: {
                Tensor& t = adjoint_of(n.parents[0], adj);
                const std::size_t cols = n.value.cols();
                for (std::size_t i = 0; i < n.index_aux.size(); ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                        t.at(n.index_aux[i], j) += g.at(i, j);
                break;
            }
        }
    }

    std::deque<Node> nodes_;
};

namespace detail {
inline void require_same_shape(const Value& a, const Value& b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw ShapeError(std::string(op) + ": shapes " + a.value().shape_string() + " and " +
                         b.value().shape_string() + " differ");
    }
}
}  // namespace detail

inline Value add(Value a, Value b) {
    detail::require_same_shape(a, b, "add");
    Graph& g = *a.graph();
    Node& n = g.make(Op::Add, {a.node(), b.node()});
    n.value = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = a.value()[i] + b.value()[i];
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value sub(Value a, Value b) {
    detail::require_same_shape(a, b, "sub");
    Graph& g = *a.graph();
    Node& n = g.make(Op::Sub, {a.node(), b.node()});
    n.value = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = a.value()[i] - b.value()[i];
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value mul(Value a, Value b) {
    detail::require_same_shape(a, b, "mul");
    Graph& g = *a.graph();
    Node& n = g.make(Op::Mul, {a.node(), b.node()});
    n.value = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = a.value()[i] * b.value()[i];
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value scale(Value a, double c) {
    Graph& g = *a.graph();
    Node& n = g.make(Op::Scale, {a.node()});
    n.scalar_aux = c;
    n.value = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = a.value()[i] * c;
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

/// m[r x c] + row[1 x c] broadcast over rows.
inline Value add_rowwise(Value m, Value row) {
    if (m.value().cols() != row.value().cols() || row.value().rows() != 1) {
        throw ShapeError("add_rowwise: shapes " + m.value().shape_string() + " and " +
                         row.value().shape_string() + " incompatible");
    }
    Graph& g = *m.graph();
    Node& n = g.make(Op::AddRowwise, {m.node(), row.node()});
    n.value = Tensor::zeros(m.shape());
    const std::size_t rows = m.value().rows(), cols = m.value().cols();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            n.value.at(i, j) = m.value().at(i, j) + row.value()[j];
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value matmul(Value a, Value b) {
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.value().cols() != b.value().rows()) {
        throw ShapeError("matmul: shapes " + a.value().shape_string() + " and " +
                         b.value().shape_string() + " do not chain");
    }
    Graph& g = *a.graph();
    Node& n = g.make(Op::MatMul, {a.node(), b.node()});
    const std::size_t m = a.value().rows(), k = a.value().cols(), p = b.value().cols();
    n.value = Tensor::zeros({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a.value().at(i, l);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j)
                n.value.at(i, j) += av * b.value().at(l, j);
        }
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value tanh(Value a) {
    Graph& g = *a.graph();
    Node& n = g.make(Op::Tanh, {a.node()});
    n.value = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(a.value()[i]);
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value sigmoid(Value a) {
    Graph& g = *a.graph();
    Node& n = g.make(Op::Sigmoid, {a.node()});
    n.value = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value abs(Value a) {
    Graph& g = *a.graph();
    Node& n = g.make(Op::Abs, {a.node()});
    n.value = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::fabs(a.value()[i]);
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value sum(Value a) {
    Graph& g = *a.graph();
    Node& n = g.make(Op::Sum, {a.node()});
    double s = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
    n.value = Tensor::scalar(s);
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value mean(Value a) {
    Graph& g = *a.graph();
    Node& n = g.make(Op::Mean, {a.node()});
    double s = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
    n.value = Tensor::scalar(s / static_cast<double>(a.value().size()));
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

/// Softmax over all entries with a keep-mask: masked entries get weight
/// exactly 0 and receive no gradient. At least one entry must be kept.
/// Numerically stabilized by max subtraction over kept entries.
inline Value masked_softmax(Value a, const std::vector<std::uint8_t>& keep) {
    if (keep.size() != a.value().size()) {
        throw ShapeError("masked_softmax: mask length " + std::to_string(keep.size()) +
                         " does not match " + a.value().shape_string());
    }
    bool any = false;
    for (auto k : keep) any = any || (k != 0);
    if (!any) throw ShapeError("masked_softmax: all entries masked");
    Graph& g = *a.graph();
    Node& n = g.make(Op::MaskedSoftmax, {a.node()});
    n.mask_aux = keep;
    n.value = Tensor::zeros(a.shape());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i] && a.value()[i] > mx) mx = a.value()[i];
    double z = 0.0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        n.value[i] = std::exp(a.value()[i] - mx);
        z += n.value[i];
    }
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) n.value[i] /= z;
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value softmax(Value a) {
    return masked_softmax(a, std::vector<std::uint8_t>(a.value().size(), 1));
}

/// Concatenate row vectors [1 x n_i] into [1 x sum(n_i)].
inline Value concat_cols(std::span<const Value> parts) {
    Graph& g = *parts.front().graph();
    std::vector<Node*> parents;
    std::size_t total = 0;
    for (const Value& v : parts) {
        parents.push_back(v.node());
        total += v.value().size();
    }
    Node& n = g.make(Op::ConcatCols, std::move(parents));
    n.value = Tensor::zeros({1, total});
    std::size_t off = 0;
    for (const Value& v : parts) {
        for (std::size_t i = 0; i < v.value().size(); ++i) n.value[off + i] = v.value()[i];
        off += v.value().size();
    }
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

/// Stack matrices with equal column counts into one tall matrix.
inline Value concat_rows(std::span<const Value> parts) {
    Graph& g = *parts.front().graph();
    const std::size_t cols = parts.front().value().cols();
    std::vector<Node*> parents;
    std::size_t rows = 0;
    for (const Value& v : parts) {
        if (v.value().cols() != cols) {
            throw ShapeError("concat_rows: column mismatch " + v.value().shape_string());
        }
        parents.push_back(v.node());
        rows += v.value().rows();
    }
    Node& n = g.make(Op::ConcatRows, std::move(parents));
    n.value = Tensor::zeros({rows, cols});
    std::size_t row = 0;
    for (const Value& v : parts) {
        for (std::size_t i = 0; i < v.value().rows(); ++i)
            for (std::size_t j = 0; j < cols; ++j) n.value.at(row + i, j) = v.value().at(i, j);
        row += v.value().rows();
    }
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

/// out[i, :] = table[ids[i], :]; backward scatter-adds into the table rows.
inline Value gather_rows(Value table, std::span<const std::size_t> ids) {
    Graph& g = *table.graph();
    const std::size_t rows = table.value().rows(), cols = table.value().cols();
    for (std::size_t id : ids) {
        if (id >= rows) {
            throw VocabError("gather_rows: index " + std::to_string(id) + " out of range " +
                             std::to_string(rows));
        }
    }
    Node& n = g.make(Op::GatherRows, {table.node()});
    n.index_aux.assign(ids.begin(), ids.end());
    n.value = Tensor::zeros({ids.size(), cols});
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) n.value.at(i, j) = table.value().at(ids[i], j);
    n.grad = Tensor::zeros(n.value.shape());
    return Value(&g, &n);
}

inline Value concat_cols(Value a, Value b) {
    const std::array<Value, 2> parts{a, b};
    return concat_cols(std::span<const Value>(parts));
}

inline Value concat_rows(Value a, Value b) {
    const std::array<Value, 2> parts{a, b};
    return concat_rows(std::span<const Value>(parts));
}

inline Value dot(Value a, Value b) { return sum(mul(a, b)); }

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }

/// Uniform(-limit, limit) init, deterministic in the supplied engine state.
inline Tensor uniform_init(std::vector<std::size_t> shape, double limit, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

}  // namespace convotts
