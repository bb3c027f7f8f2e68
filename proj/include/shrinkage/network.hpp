#pragma once

#include <string>
#include <vector>

#include "shrinkage/graph.hpp"
#include "shrinkage/noise.hpp"
#include "shrinkage/rng.hpp"
#include "shrinkage/tensor.hpp"

namespace shrinkage {

enum class Activation { Relu, Softplus, Identity };

inline double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Softplus:
            return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        case Activation::Identity: return x;
    }
    throw Error("apply_activation: bad activation");
}

// Fully connected regression network. Weight matrix i (0-based, i = 0..L)
// maps h_i -> h_{i+1} with h_0 = x and h_{L+1} the linear output. When `bias`
// is set each weight matrix carries one extra input row fed by a constant-1
// column appended to the activations. `residual[i]` adds h_i to the output of
// hidden layer i and requires matching widths.
struct NetworkConfig {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden;
    std::size_t output_dim = 1;
    Activation activation = Activation::Relu;
    std::vector<bool> residual;
    bool bias = true;

    std::size_t layers() const { return hidden.size(); }  // L
    std::size_t weight_matrices() const { return hidden.size() + 1; }

    std::size_t fan_in(std::size_t i) const { return i == 0 ? input_dim : hidden[i - 1]; }
    std::size_t fan_out(std::size_t i) const {
        return i == hidden.size() ? output_dim : hidden[i];
    }
    std::size_t rows(std::size_t i) const { return fan_in(i) + (bias ? 1 : 0); }

    bool is_residual(std::size_t i) const {
        return i < hidden.size() && i < residual.size() && residual[i];
    }

    void validate() const {
        if (hidden.empty()) throw ConfigError("NetworkConfig: at least one hidden layer required");
        if (input_dim == 0 || output_dim == 0)
            throw ConfigError("NetworkConfig: zero input or output dimension");
        for (std::size_t h : hidden)
            if (h == 0) throw ConfigError("NetworkConfig: zero-width hidden layer");
        if (!residual.empty() && residual.size() != hidden.size())
            throw ConfigError("NetworkConfig: residual flags must match hidden layer count");
        for (std::size_t i = 0; i < residual.size(); ++i)
            if (residual[i] && fan_in(i) != fan_out(i))
                throw ConfigError(
                    "NetworkConfig: residual connection at hidden layer " + std::to_string(i) +
                    " needs equal widths, got " + std::to_string(fan_in(i)) + " -> " +
                    std::to_string(fan_out(i)));
    }
};

// Where the multiplicative noise attaches:
//   UnitWise   one xi per input unit of each non-final layer (rows of W)
//   WeightWise one xi per individual weight of each non-final layer
//   LayerWise  one tau per residual hidden-to-hidden layer
//   Combined   UnitWise xis plus LayerWise taus
enum class StructureKind { UnitWise, WeightWise, LayerWise, Combined };

inline const char* structure_name(StructureKind k) {
    switch (k) {
        case StructureKind::UnitWise: return "unit";
        case StructureKind::WeightWise: return "weight";
        case StructureKind::LayerWise: return "layer";
        case StructureKind::Combined: return "combined";
    }
    return "?";
}

struct NoiseStructure {
    StructureKind kind;
    NoiseFamily unit;   // UnitWise / WeightWise / Combined
    NoiseFamily layer;  // LayerWise / Combined

    static NoiseStructure unit_wise(NoiseFamily f) {
        return {StructureKind::UnitWise, f, NoiseFamily::bernoulli(1.0)};
    }
    static NoiseStructure weight_wise(NoiseFamily f) {
        return {StructureKind::WeightWise, f, NoiseFamily::bernoulli(1.0)};
    }
    static NoiseStructure layer_wise(NoiseFamily f) {
        return {StructureKind::LayerWise, NoiseFamily::bernoulli(1.0), f};
    }
    static NoiseStructure combined(NoiseFamily unit_f, NoiseFamily layer_f) {
        return {StructureKind::Combined, unit_f, layer_f};
    }

    bool has_unit() const {
        return kind == StructureKind::UnitWise || kind == StructureKind::Combined;
    }
    bool has_weight() const { return kind == StructureKind::WeightWise; }
    bool has_layer() const {
        return kind == StructureKind::LayerWise || kind == StructureKind::Combined;
    }
};

struct WeightSet {
    std::vector<Tensor> w;  // one matrix per layer, [rows(i), fan_out(i)]

    void validate_against(const NetworkConfig& cfg) const {
        if (w.size() != cfg.weight_matrices())
            throw ShapeError("WeightSet: expected " + std::to_string(cfg.weight_matrices()) +
                             " matrices, got " + std::to_string(w.size()));
        for (std::size_t i = 0; i < w.size(); ++i)
            if (w[i].rank() != 2 || w[i].rows() != cfg.rows(i) || w[i].cols() != cfg.fan_out(i))
                throw ShapeError("WeightSet: matrix " + std::to_string(i) + " has shape " +
                                 w[i].shape_str() + ", expected [" + std::to_string(cfg.rows(i)) +
                                 "x" + std::to_string(cfg.fan_out(i)) + "]");
    }
};

// He-style init: N(0, 2/fan_in) entries on real rows, zero bias rows.
inline WeightSet initialize_weights(const NetworkConfig& cfg, RngStream& rng) {
    cfg.validate();
    WeightSet ws;
    for (std::size_t i = 0; i < cfg.weight_matrices(); ++i) {
        Tensor t({cfg.rows(i), cfg.fan_out(i)});
        double sd = std::sqrt(2.0 / static_cast<double>(cfg.fan_in(i)));
        for (std::size_t r = 0; r < cfg.fan_in(i); ++r)
            for (std::size_t c = 0; c < cfg.fan_out(i); ++c) t.at(r, c) = rng.normal(0.0, sd);
        ws.w.push_back(std::move(t));
    }
    return ws;
}

// One joint draw of every noise variable in the structure. Unit masks carry
// one entry per real input unit (the constant bias unit is never masked);
// weight masks cover real rows only; layer[i] is the tau multiplier of hidden
// layer i (fixed at 1 where the structure puts no noise).
struct MaskSample {
    std::vector<std::vector<double>> unit;
    std::vector<Tensor> weight;
    std::vector<double> layer;
};

inline MaskSample sample_masks(const NetworkConfig& cfg, const NoiseStructure& st,
                               RngStream& rng) {
    MaskSample m;
    const std::size_t L = cfg.layers();
    if (st.has_unit()) {
        m.unit.resize(L);
        for (std::size_t i = 0; i < L; ++i) {
            m.unit[i].resize(cfg.fan_in(i));
            for (double& v : m.unit[i]) v = st.unit.sample(rng);
        }
    }
    if (st.has_weight()) {
        m.weight.reserve(L);
        for (std::size_t i = 0; i < L; ++i) {
            Tensor t({cfg.fan_in(i), cfg.fan_out(i)});
            for (double& v : t.values()) v = st.unit.sample(rng);
            m.weight.push_back(std::move(t));
        }
    }
    m.layer.assign(L, 1.0);
    if (st.has_layer())
        for (std::size_t i = 0; i < L; ++i)
            if (cfg.is_residual(i)) m.layer[i] = st.layer.sample(rng);
    return m;
}

namespace detail {

inline Tensor with_bias_column(const Tensor& h, bool bias) {
    if (!bias) return h;
    Tensor out({h.rows(), h.cols() + 1});
    for (std::size_t r = 0; r < h.rows(); ++r) {
        for (std::size_t c = 0; c < h.cols(); ++c) out.at(r, c) = h.at(r, c);
        out.at(r, h.cols()) = 1.0;
    }
    return out;
}

inline void matmul_plain(const Tensor& A, const Tensor& B, Tensor& C) {
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    for (double& v : C.values()) v = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &A.data()[i * k];
        double* crow = &C.data()[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            double a = arow[p];
            if (a == 0.0) continue;
            const double* brow = &B.data()[p * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

}  // namespace detail

// Plain forward pass; pass a structure+mask pair for a noisy pass or neither
// for the deterministic network.
inline Tensor forward(const NetworkConfig& cfg, const WeightSet& ws, const Tensor& x,
                      const NoiseStructure* st = nullptr, const MaskSample* masks = nullptr) {
    ws.validate_against(cfg);
    if (x.rank() != 2 || x.cols() != cfg.input_dim)
        throw ShapeError("forward: input shape " + x.shape_str() + ", expected [Nx" +
                         std::to_string(cfg.input_dim) + "]");
    if ((st == nullptr) != (masks == nullptr))
        throw ConfigError("forward: structure and masks must be supplied together");
    const std::size_t N = x.rows();
    Tensor h = x;
    for (std::size_t i = 0; i < cfg.weight_matrices(); ++i) {
        const bool last = i == cfg.layers();
        Tensor a = detail::with_bias_column(h, cfg.bias);
        if (!last && st && st->has_unit()) {
            const auto& u = (*masks).unit[i];
            for (std::size_t r = 0; r < N; ++r)
                for (std::size_t c = 0; c < u.size(); ++c) a.at(r, c) *= u[c];
        }
        Tensor z({N, cfg.fan_out(i)});
        if (!last && st && st->has_weight()) {
            Tensor weff = ws.w[i];
            const Tensor& mk = masks->weight[i];
            for (std::size_t r = 0; r < cfg.fan_in(i); ++r)
                for (std::size_t c = 0; c < weff.cols(); ++c) weff.at(r, c) *= mk.at(r, c);
            detail::matmul_plain(a, weff, z);
        } else {
            detail::matmul_plain(a, ws.w[i], z);
        }
        if (last) return z;
        double tau = masks ? masks->layer[i] : 1.0;
        if (tau != 1.0)
            for (double& v : z.values()) v *= tau;
        for (double& v : z.values()) v = apply_activation(cfg.activation, v);
        if (cfg.is_residual(i))
            for (std::size_t r = 0; r < z.size(); ++r) z[r] += h[r];
        h = std::move(z);
    }
    throw Error("forward: unreachable");
}

// Tape version of the same computation; weights enter as graph nodes so
// gradients can flow into them (or into whatever built them).
inline NodeId build_forward(Graph& g, const NetworkConfig& cfg,
                            const std::vector<NodeId>& weights, const Tensor& x,
                            const NoiseStructure* st = nullptr,
                            const MaskSample* masks = nullptr) {
    if (weights.size() != cfg.weight_matrices())
        throw ShapeError("build_forward: expected " + std::to_string(cfg.weight_matrices()) +
                         " weight nodes, got " + std::to_string(weights.size()));
    if ((st == nullptr) != (masks == nullptr))
        throw ConfigError("build_forward: structure and masks must be supplied together");
    NodeId h = g.constant(x);
    for (std::size_t i = 0; i < cfg.weight_matrices(); ++i) {
        const bool last = i == cfg.layers();
        NodeId a = cfg.bias ? g.append_ones(h) : h;
        NodeId w = weights[i];
        if (!last && st && st->has_unit()) {
            std::vector<double> u = masks->unit[i];
            if (cfg.bias) u.push_back(1.0);
            a = g.colscale(a, g.constant(Tensor({u.size()}, u)));
        }
        if (!last && st && st->has_weight()) {
            Tensor mk({cfg.rows(i), cfg.fan_out(i)}, 1.0);
            for (std::size_t r = 0; r < cfg.fan_in(i); ++r)
                for (std::size_t c = 0; c < cfg.fan_out(i); ++c)
                    mk.at(r, c) = masks->weight[i].at(r, c);
            w = g.mul(w, g.constant(std::move(mk)));
        }
        NodeId z = g.matmul(a, w);
        if (last) return z;
        double tau = masks ? masks->layer[i] : 1.0;
        if (tau != 1.0) z = g.scale(z, tau);
        switch (cfg.activation) {
            case Activation::Relu: z = g.relu(z); break;
            case Activation::Softplus: z = g.softplus(z); break;
            case Activation::Identity: break;
        }
        if (cfg.is_residual(i)) z = g.add(z, h);
        h = z;
    }
    throw Error("build_forward: unreachable");
}

// S independent noisy forward passes (or S copies of the deterministic pass
// when no structure is given). Returns one [N x output_dim] tensor per draw.
inline std::vector<Tensor> predict_mc(const NetworkConfig& cfg, const WeightSet& ws,
                                      const Tensor& x, std::size_t s,
                                      const NoiseStructure* st, RngStream& rng) {
    std::vector<Tensor> out;
    out.reserve(s);
    for (std::size_t k = 0; k < s; ++k) {
        if (st) {
            MaskSample m = sample_masks(cfg, *st, rng);
            out.push_back(forward(cfg, ws, x, st, &m));
        } else {
            out.push_back(forward(cfg, ws, x));
        }
    }
    return out;
}

// Summed second moments of each hidden-to-hidden weight matrix (weight
// indices 1..L-1), real rows only: mu^2 + sigma^2 per weight, plain w^2 for
// point weights. Feeds the heat-map export.
inline std::vector<Tensor> posterior_moment_map(const NetworkConfig& cfg,
                                                const std::vector<Tensor>& mean,
                                                const std::vector<Tensor>* sd = nullptr) {
    std::vector<Tensor> maps;
    for (std::size_t i = 1; i < cfg.layers(); ++i) {
        Tensor t({cfg.fan_in(i), cfg.fan_out(i)});
        for (std::size_t r = 0; r < cfg.fan_in(i); ++r)
            for (std::size_t c = 0; c < cfg.fan_out(i); ++c) {
                double m = mean[i].at(r, c);
                double s2 = sd ? (*sd)[i].at(r, c) * (*sd)[i].at(r, c) : 0.0;
                t.at(r, c) = m * m + s2;
            }
        maps.push_back(std::move(t));
    }
    return maps;
}

inline std::vector<Tensor> posterior_moment_map(const NetworkConfig& cfg, const WeightSet& ws) {
    return posterior_moment_map(cfg, ws.w);
}

}  // namespace shrinkage
