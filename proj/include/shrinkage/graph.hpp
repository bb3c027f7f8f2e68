#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "shrinkage/error.hpp"
#include "shrinkage/tensor.hpp"

namespace shrinkage {

// Reverse-mode tape. Nodes are appended in topological order and evaluated
// eagerly, so value() is always available right after construction and the
// backward sweep is a single reverse pass. Rebuilding the same graph from the
// same leaves reproduces values and gradients bit for bit.

using NodeId = int;
using GradientMap = std::map<std::string, Tensor>;

enum class Op {
    Constant,
    Parameter,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,        // tensor * compile-time double
    ColScale,     // [m,n] tensor scaled per column by a rank-1 [n] vector
    Relu,
    Softplus,
    Log,
    Sum,          // -> scalar
    SumSquares,   // -> scalar
    AppendOnes,   // [m,n] -> [m,n+1], last column all ones
    GaussianLogLik,  // sum of log N(y_ij; mean_ij, attr) -> scalar
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Constant: return "constant";
        case Op::Parameter: return "parameter";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::ColScale: return "colscale";
        case Op::Relu: return "relu";
        case Op::Softplus: return "softplus";
        case Op::Log: return "log";
        case Op::Sum: return "sum";
        case Op::SumSquares: return "sum_squares";
        case Op::AppendOnes: return "append_ones";
        case Op::GaussianLogLik: return "gaussian_loglik";
    }
    return "?";
}

class Graph {
  public:
    struct Node {
        Op op;
        NodeId a = -1;
        NodeId b = -1;
        double attr = 0.0;
        std::string name;  // parameters only
        Tensor value;
        Tensor grad;
    };

    NodeId constant(Tensor t) { return push({Op::Constant, -1, -1, 0.0, "", std::move(t), {}}); }

    NodeId parameter(const std::string& name, Tensor t) {
        if (name.empty()) throw ConfigError("parameter: name must be non-empty");
        if (param_ids_.count(name))
            throw ConfigError("parameter: duplicate name '" + name + "'");
        NodeId id = push({Op::Parameter, -1, -1, 0.0, name, std::move(t), {}});
        param_ids_[name] = id;
        return id;
    }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(), "matmul", a, b);
        Tensor out({A.rows(), B.cols()});
        matmul_into(A, B, out, false, false);
        return push({Op::MatMul, a, b, 0.0, "", std::move(out), {}});
    }

    NodeId add(NodeId a, NodeId b) { return elementwise(Op::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return elementwise(Op::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return elementwise(Op::Mul, a, b); }

    NodeId scale(NodeId a, double c) {
        Tensor out = val(a);
        for (double& v : out.values()) v *= c;
        return push({Op::Scale, a, -1, c, "", std::move(out), {}});
    }

    NodeId colscale(NodeId a, NodeId v) {
        const Tensor& A = val(a);
        const Tensor& V = val(v);
        require(A.rank() == 2 && V.rank() == 1 && V.size() == A.cols(), "colscale", a, v);
        Tensor out = A;
        for (std::size_t r = 0; r < A.rows(); ++r)
            for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) *= V[c];
        return push({Op::ColScale, a, v, 0.0, "", std::move(out), {}});
    }

    NodeId relu(NodeId a) {
        Tensor out = val(a);
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        return push({Op::Relu, a, -1, 0.0, "", std::move(out), {}});
    }

    NodeId softplus(NodeId a) {
        Tensor out = val(a);
        for (double& v : out.values()) v = softplus_val(v);
        return push({Op::Softplus, a, -1, 0.0, "", std::move(out), {}});
    }

    NodeId log(NodeId a) {
        Tensor out = val(a);
        for (double& v : out.values()) {
            if (v <= 0.0)
                throw DomainError("log: non-positive input " + std::to_string(v) + " at node " +
                                  label(a));
            v = std::log(v);
        }
        return push({Op::Log, a, -1, 0.0, "", std::move(out), {}});
    }

    NodeId sum(NodeId a) {
        double s = 0.0;
        for (double v : val(a).values()) s += v;
        return push({Op::Sum, a, -1, 0.0, "", Tensor::scalar(s), {}});
    }

    NodeId sum_squares(NodeId a) {
        double s = 0.0;
        for (double v : val(a).values()) s += v * v;
        return push({Op::SumSquares, a, -1, 0.0, "", Tensor::scalar(s), {}});
    }

    NodeId append_ones(NodeId a) {
        const Tensor& A = val(a);
        require(A.rank() == 2, "append_ones", a, -1);
        Tensor out({A.rows(), A.cols() + 1});
        for (std::size_t r = 0; r < A.rows(); ++r) {
            for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) = A.at(r, c);
            out.at(r, A.cols()) = 1.0;
        }
        return push({Op::AppendOnes, a, -1, 0.0, "", std::move(out), {}});
    }

    // Sum over entries of log N(y; mean, variance). y enters as a node (use a
    // constant); gradients flow into the mean argument only.
    NodeId gaussian_loglik(NodeId mean, NodeId y, double variance) {
        if (!(variance > 0.0) || !std::isfinite(variance))
            throw DomainError("gaussian_loglik: variance must be positive and finite, got " +
                              std::to_string(variance));
        const Tensor& M = val(mean);
        const Tensor& Y = val(y);
        require(M.same_shape(Y), "gaussian_loglik", mean, y);
        double s = 0.0;
        const double log_norm = -0.5 * std::log(2.0 * M_PI * variance);
        for (std::size_t i = 0; i < M.size(); ++i) {
            double d = Y[i] - M[i];
            s += log_norm - d * d / (2.0 * variance);
        }
        return push({Op::GaussianLogLik, mean, y, variance, "", Tensor::scalar(s), {}});
    }

    const Tensor& value(NodeId id) const { return val(id); }

    std::size_t size() const { return nodes_.size(); }

    // Reverse sweep from a scalar output. Returns gradients for every
    // parameter node, keyed by name (absent parameters get zero tensors).
    // Throws NumericError naming the first node whose value or adjoint is
    // non-finite.
    GradientMap gradient(NodeId output) {
        const Tensor& out = val(output);
        if (!out.is_scalar())
            throw ShapeError("gradient: output node " + label(output) + " has shape " +
                             out.shape_str() + ", expected a scalar");
        check_finite_value(output);
        for (auto& n : nodes_) n.grad = Tensor(n.value.shape(), 0.0);
        nodes_[output].grad[0] = 1.0;
        for (NodeId id = output; id >= 0; --id) backprop(id);
        GradientMap grads;
        for (const auto& [name, id] : param_ids_) grads.emplace(name, nodes_[id].grad);
        return grads;
    }

    const Tensor& adjoint(NodeId id) const { return nodes_[id].grad; }

  private:
    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    const Tensor& val(NodeId id) const {
        if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
            throw ConfigError("graph: node id " + std::to_string(id) + " out of range");
        return nodes_[id].value;
    }

    std::string label(NodeId id) const {
        std::string s = std::to_string(id) + " (" + op_name(nodes_[id].op);
        if (!nodes_[id].name.empty()) s += " '" + nodes_[id].name + "'";
        return s + ")";
    }

    void require(bool ok, const char* what, NodeId a, NodeId b) const {
        if (ok) return;
        std::string msg = std::string(what) + ": incompatible shapes " + val(a).shape_str();
        if (b >= 0) msg += " and " + val(b).shape_str();
        msg += " at nodes " + label(a) + (b >= 0 ? ", " + label(b) : "");
        throw ShapeError(msg);
    }

    NodeId elementwise(Op op, NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require(A.same_shape(B), op_name(op), a, b);
        Tensor out = A;
        switch (op) {
            case Op::Add:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
                break;
            case Op::Sub:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
                break;
            case Op::Mul:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
                break;
            default:
                throw Error("elementwise: bad op");
        }
        return push({op, a, b, 0.0, "", std::move(out), {}});
    }

    static double softplus_val(double x) {
        // log(1 + e^x) without overflow for large |x|.
        if (x > 30.0) return x + std::log1p(std::exp(-x));
        return std::log1p(std::exp(x));
    }

    static double sigmoid(double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    }

    // C (+)= A * B with optional transposes; used forward and backward.
    static void matmul_into(const Tensor& A, const Tensor& B, Tensor& C, bool ta, bool tb,
                            bool accumulate = false) {
        std::size_t m = ta ? A.cols() : A.rows();
        std::size_t k = ta ? A.rows() : A.cols();
        std::size_t n = tb ? B.rows() : B.cols();
        if (!accumulate)
            for (double& v : C.values()) v = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                double a = ta ? A.at(p, i) : A.at(i, p);
                if (a == 0.0) continue;
                const double* brow = tb ? nullptr : &B.data()[p * n];
                double* crow = &C.data()[i * n];
                if (!tb) {
                    for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
                } else {
                    for (std::size_t j = 0; j < n; ++j) crow[j] += a * B.at(j, p);
                }
            }
        }
    }

    void check_finite_value(NodeId id) const {
        for (double v : nodes_[id].value.values())
            if (!std::isfinite(v))
                throw NumericError("gradient: non-finite value at node " + label(id));
    }

    void backprop(NodeId id) {
        Node& n = nodes_[id];
        bool any = false;
        for (double g : n.grad.values()) {
            if (g != 0.0) any = true;
            if (!std::isfinite(g))
                throw NumericError("gradient: non-finite adjoint at node " + label(id));
        }
        if (!any) return;
        const Tensor& G = n.grad;
        switch (n.op) {
            case Op::Constant:
            case Op::Parameter:
                break;
            case Op::MatMul: {
                // dA += G B^T ; dB += A^T G
                matmul_into(G, nodes_[n.b].value, nodes_[n.a].grad, false, true, true);
                matmul_into(nodes_[n.a].value, G, nodes_[n.b].grad, true, false, true);
                break;
            }
            case Op::Add:
                axpy(nodes_[n.a].grad, G, 1.0);
                axpy(nodes_[n.b].grad, G, 1.0);
                break;
            case Op::Sub:
                axpy(nodes_[n.a].grad, G, 1.0);
                axpy(nodes_[n.b].grad, G, -1.0);
                break;
            case Op::Mul: {
                Tensor& da = nodes_[n.a].grad;
                Tensor& db = nodes_[n.b].grad;
                const Tensor& A = nodes_[n.a].value;
                const Tensor& B = nodes_[n.b].value;
                for (std::size_t i = 0; i < G.size(); ++i) {
                    da[i] += G[i] * B[i];
                    db[i] += G[i] * A[i];
                }
                break;
            }
            case Op::Scale:
                axpy(nodes_[n.a].grad, G, n.attr);
                break;
            case Op::ColScale: {
                Tensor& da = nodes_[n.a].grad;
                Tensor& dv = nodes_[n.b].grad;
                const Tensor& A = nodes_[n.a].value;
                const Tensor& V = nodes_[n.b].value;
                for (std::size_t r = 0; r < A.rows(); ++r) {
                    for (std::size_t c = 0; c < A.cols(); ++c) {
                        da.at(r, c) += G.at(r, c) * V[c];
                        dv[c] += G.at(r, c) * A.at(r, c);
                    }
                }
                break;
            }
            case Op::Relu: {
                const Tensor& A = nodes_[n.a].value;
                Tensor& da = nodes_[n.a].grad;
                // subgradient 0 at exactly 0
                for (std::size_t i = 0; i < G.size(); ++i)
                    if (A[i] > 0.0) da[i] += G[i];
                break;
            }
            case Op::Softplus: {
                const Tensor& A = nodes_[n.a].value;
                Tensor& da = nodes_[n.a].grad;
                for (std::size_t i = 0; i < G.size(); ++i) da[i] += G[i] * sigmoid(A[i]);
                break;
            }
            case Op::Log: {
                const Tensor& A = nodes_[n.a].value;
                Tensor& da = nodes_[n.a].grad;
                for (std::size_t i = 0; i < G.size(); ++i) da[i] += G[i] / A[i];
                break;
            }
            case Op::Sum: {
                Tensor& da = nodes_[n.a].grad;
                for (double& v : da.values()) v += G[0];
                break;
            }
            case Op::SumSquares: {
                const Tensor& A = nodes_[n.a].value;
                Tensor& da = nodes_[n.a].grad;
                for (std::size_t i = 0; i < A.size(); ++i) da[i] += 2.0 * G[0] * A[i];
                break;
            }
            case Op::AppendOnes: {
                // the appended ones column receives no gradient
                Tensor& da = nodes_[n.a].grad;
                const std::size_t cols = nodes_[n.a].value.cols();
                for (std::size_t r = 0; r < da.rows(); ++r)
                    for (std::size_t c = 0; c < cols; ++c) da.at(r, c) += G.at(r, c);
                break;
            }
            case Op::GaussianLogLik: {
                const Tensor& M = nodes_[n.a].value;
                const Tensor& Y = nodes_[n.b].value;
                Tensor& dm = nodes_[n.a].grad;
                for (std::size_t i = 0; i < M.size(); ++i)
                    dm[i] += G[0] * (Y[i] - M[i]) / n.attr;
                break;
            }
        }
    }

    static void axpy(Tensor& dst, const Tensor& src, double c) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
    }

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> param_ids_;
};

}  // namespace shrinkage
