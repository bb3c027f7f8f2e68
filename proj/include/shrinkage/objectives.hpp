#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shrinkage/network.hpp"

namespace shrinkage {

// log sum exp with the summation done in ascending sorted order, so the
// result is a function of the multiset of values only (bit-identical under
// permutation). -inf entries carry zero mass and are skipped.
inline double log_sum_exp_sorted(std::vector<double> v) {
    if (v.empty()) throw DomainError("log_sum_exp_sorted: empty input");
    std::sort(v.begin(), v.end());
    double m = v.back();
    if (!std::isfinite(m)) {
        if (m == -std::numeric_limits<double>::infinity()) return m;
        throw NumericError("log_sum_exp_sorted: non-finite input " + std::to_string(m));
    }
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// Mean with sorted summation; same bit-level permutation invariance.
inline double mean_sorted(std::vector<double> v) {
    if (v.empty()) throw DomainError("mean_sorted: empty input");
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

struct ObjectiveResult {
    double value = 0.0;
    GradientMap gradients;              // ascent direction, keyed W1..Wk
    std::vector<double> sample_loglik;  // per-sample joint data log-likelihood
    std::vector<double> weights;        // normalized per-sample gradient weights
};

inline std::string weight_key(std::size_t i) { return "W" + std::to_string(i + 1); }

namespace detail {

inline Tensor require_targets(const NetworkConfig& cfg, const Tensor& y, std::size_t n) {
    if (y.rank() != 2 || y.rows() != n || y.cols() != cfg.output_dim)
        throw ShapeError("objective: target shape " + y.shape_str() + ", expected [" +
                         std::to_string(n) + "x" + std::to_string(cfg.output_dim) + "]");
    return y;
}

inline double gaussian_loglik_plain(const Tensor& mean, const Tensor& y, double variance) {
    double s = 0.0;
    const double log_norm = -0.5 * std::log(2.0 * M_PI * variance);
    for (std::size_t i = 0; i < mean.size(); ++i) {
        double d = y[i] - mean[i];
        s += log_norm - d * d / (2.0 * variance);
    }
    return s;
}

inline void check_noise_var(double noise_var) {
    if (!(noise_var > 0.0) || !std::isfinite(noise_var))
        throw DomainError("objective: observation variance must be positive, got " +
                          std::to_string(noise_var));
}

}  // namespace detail

// Joint data log-likelihood of the batch under one mask draw (or noiseless
// when structure/masks are omitted).
inline double data_log_likelihood(const NetworkConfig& cfg, const WeightSet& ws, const Tensor& x,
                                  const Tensor& y, double noise_var,
                                  const NoiseStructure* st = nullptr,
                                  const MaskSample* masks = nullptr) {
    detail::check_noise_var(noise_var);
    detail::require_targets(cfg, y, x.rows());
    Tensor out = forward(cfg, ws, x, st, masks);
    return detail::gaussian_loglik_plain(out, y, noise_var);
}

namespace detail {

// Backward pass for one mask draw; accumulates coeff * d loglik / d W.
inline void accumulate_gradient(const NetworkConfig& cfg, const WeightSet& ws,
                                const NoiseStructure& st, const MaskSample& masks,
                                const Tensor& x, const Tensor& y, double noise_var, double coeff,
                                GradientMap& into) {
    if (coeff == 0.0) return;
    Graph g;
    std::vector<NodeId> wn;
    for (std::size_t i = 0; i < ws.w.size(); ++i) wn.push_back(g.parameter(weight_key(i), ws.w[i]));
    NodeId out = build_forward(g, cfg, wn, x, &st, &masks);
    NodeId ll = g.gaussian_loglik(out, g.constant(y), noise_var);
    GradientMap grads = g.gradient(ll);
    for (auto& [k, t] : grads) {
        auto it = into.find(k);
        if (it == into.end()) {
            for (double& v : t.values()) v *= coeff;
            into.emplace(k, std::move(t));
        } else {
            for (std::size_t j = 0; j < t.size(); ++j) it->second[j] += coeff * t[j];
        }
    }
}

struct McDraws {
    std::vector<MaskSample> masks;
    std::vector<double> loglik;
};

inline McDraws draw_sample_logliks(const NetworkConfig& cfg, const WeightSet& ws,
                                   const NoiseStructure& st, const Tensor& x, const Tensor& y,
                                   std::size_t s, double noise_var, RngStream& rng) {
    if (s == 0) throw DomainError("objective: sample count must be positive");
    check_noise_var(noise_var);
    require_targets(cfg, y, x.rows());
    McDraws d;
    d.masks.reserve(s);
    d.loglik.reserve(s);
    for (std::size_t k = 0; k < s; ++k) {
        d.masks.push_back(sample_masks(cfg, st, rng));
        double ll = gaussian_loglik_plain(forward(cfg, ws, x, &st, &d.masks.back()), y, noise_var);
        if (!std::isfinite(ll))
            throw NumericError("objective: non-finite log-likelihood at sample " +
                               std::to_string(k));
        d.loglik.push_back(ll);
    }
    return d;
}

inline ObjectiveResult finish(const NetworkConfig& cfg, const WeightSet& ws,
                              const NoiseStructure& st, const Tensor& x, const Tensor& y,
                              double noise_var, McDraws draws, double value,
                              std::vector<double> weights, bool want_gradient) {
    ObjectiveResult r;
    r.value = value;
    r.sample_loglik = std::move(draws.loglik);
    r.weights = std::move(weights);
    if (want_gradient) {
        // fixed reduction order by sample index
        for (std::size_t k = 0; k < draws.masks.size(); ++k)
            accumulate_gradient(cfg, ws, st, draws.masks[k], x, y, noise_var, r.weights[k],
                                r.gradients);
        for (std::size_t i = 0; i < ws.w.size(); ++i)
            r.gradients.try_emplace(weight_key(i), Tensor(ws.w[i].shape(), 0.0));
    }
    return r;
}

}  // namespace detail

// Monte Carlo lower bound: (1/S) sum_s log p(y | x, masks_s).
inline ObjectiveResult mc_lower_bound(const NetworkConfig& cfg, const WeightSet& ws,
                                      const NoiseStructure& st, const Tensor& x, const Tensor& y,
                                      std::size_t s, double noise_var, RngStream& rng,
                                      bool want_gradient = true) {
    detail::McDraws d = detail::draw_sample_logliks(cfg, ws, st, x, y, s, noise_var, rng);
    double value = mean_sorted(d.loglik);
    std::vector<double> w(s, 1.0 / static_cast<double>(s));
    return detail::finish(cfg, ws, st, x, y, noise_var, std::move(d), value, std::move(w),
                          want_gradient);
}

// Importance-weighted estimate log((1/S) sum_s p_s); gradient weights are the
// self-normalized likelihood ratios softmax(loglik).
inline ObjectiveResult importance_weighted(const NetworkConfig& cfg, const WeightSet& ws,
                                           const NoiseStructure& st, const Tensor& x,
                                           const Tensor& y, std::size_t s, double noise_var,
                                           RngStream& rng, bool want_gradient = true) {
    detail::McDraws d = detail::draw_sample_logliks(cfg, ws, st, x, y, s, noise_var, rng);
    double lse = log_sum_exp_sorted(d.loglik);
    double value = lse - std::log(static_cast<double>(s));
    std::vector<double> w(s);
    for (std::size_t k = 0; k < s; ++k) w[k] = std::exp(d.loglik[k] - lse);
    return detail::finish(cfg, ws, st, x, y, noise_var, std::move(d), value, std::move(w),
                          want_gradient);
}

// Tail-adaptive weights: each sample is weighted by the reciprocal of the
// number of samples whose likelihood is at least as large (ties inclusive),
// then the weights are normalized to sum to one. Input may be likelihoods on
// any monotone scale (only ranks matter); pass log-likelihoods in practice.
inline std::vector<double> tail_adaptive_weights(const std::vector<double>& likelihood) {
    if (likelihood.empty()) throw DomainError("tail_adaptive_weights: empty input");
    std::vector<double> sorted = likelihood;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t s = likelihood.size();
    std::vector<double> w(s);
    double total = 0.0;
    for (std::size_t k = 0; k < s; ++k) {
        // #{j : likelihood_j >= likelihood_k} = s - (index of first element >= likelihood_k)
        std::size_t at_least =
            s - (std::lower_bound(sorted.begin(), sorted.end(), likelihood[k]) - sorted.begin());
        w[k] = 1.0 / static_cast<double>(at_least);
        total += w[k];
    }
    for (double& v : w) v /= total;
    return w;
}

// Tail-adaptive objective: gradient uses tail_adaptive_weights; the reported
// value is the importance-weighted estimate (for monitoring only, the scalar
// being ascended is defined by the weighted gradient).
inline ObjectiveResult tail_adaptive(const NetworkConfig& cfg, const WeightSet& ws,
                                     const NoiseStructure& st, const Tensor& x, const Tensor& y,
                                     std::size_t s, double noise_var, RngStream& rng,
                                     bool want_gradient = true) {
    detail::McDraws d = detail::draw_sample_logliks(cfg, ws, st, x, y, s, noise_var, rng);
    double value = log_sum_exp_sorted(d.loglik) - std::log(static_cast<double>(s));
    std::vector<double> w = tail_adaptive_weights(d.loglik);
    return detail::finish(cfg, ws, st, x, y, noise_var, std::move(d), value, std::move(w),
                          want_gradient);
}

// Noiseless data log-likelihood with gradients; the MAP baseline and the
// backbone of the hierarchical objective.
inline ObjectiveResult noiseless_objective(const NetworkConfig& cfg, const WeightSet& ws,
                                           const Tensor& x, const Tensor& y, double noise_var) {
    detail::check_noise_var(noise_var);
    detail::require_targets(cfg, y, x.rows());
    Graph g;
    std::vector<NodeId> wn;
    for (std::size_t i = 0; i < ws.w.size(); ++i) wn.push_back(g.parameter(weight_key(i), ws.w[i]));
    NodeId ll = g.gaussian_loglik(build_forward(g, cfg, wn, x), g.constant(y), noise_var);
    ObjectiveResult r;
    r.value = g.value(ll)[0];
    r.gradients = g.gradient(ll);
    return r;
}

// -(1/(2 sigma0^2)) sum of squared weights, bias rows included.
inline double weight_decay_penalty(const WeightSet& ws, double sigma0) {
    if (!(sigma0 > 0.0)) throw DomainError("weight_decay_penalty: sigma0 must be positive");
    double s = 0.0;
    for (const Tensor& w : ws.w)
        for (double v : w.values()) s += v * v;
    return -s / (2.0 * sigma0 * sigma0);
}

// Adds the MAP weight-decay term (the log of the keep-all Gaussian prior, up
// to a constant) to any objective result: value += penalty, gradient -= W/sigma0^2.
inline ObjectiveResult with_weight_decay(ObjectiveResult base, const WeightSet& ws,
                                         double sigma0) {
    base.value += weight_decay_penalty(ws, sigma0);
    for (std::size_t i = 0; i < ws.w.size(); ++i) {
        auto it = base.gradients.find(weight_key(i));
        if (it == base.gradients.end()) continue;
        for (std::size_t j = 0; j < ws.w[i].size(); ++j)
            it->second[j] -= ws.w[i][j] / (sigma0 * sigma0);
    }
    return base;
}

// Hierarchical-parametrization objective: noiseless log-likelihood minus
// (1/(2 sigma0^2)) sum_ij c_ij w_ij^2, where c_ij multiplies E[xi^{-2}] for
// every noise variable attached to weight ij. Bias rows carry the layer
// factor only; the final linear layer is unpenalized beyond coefficient 1.
// Throws DivergentExpectation when the noise family has no inverse second
// moment (Bernoulli keep<1, Gaussian, Rayleigh, half-Cauchy).
inline ObjectiveResult hierarchical_objective(const NetworkConfig& cfg, const WeightSet& ws,
                                              const NoiseStructure& st, const Tensor& x,
                                              const Tensor& y, double noise_var, double sigma0) {
    detail::check_noise_var(noise_var);
    detail::require_targets(cfg, y, x.rows());
    if (!(sigma0 > 0.0)) throw DomainError("hierarchical_objective: sigma0 must be positive");
    ws.validate_against(cfg);
    const double unit_c = (st.has_unit() || st.has_weight()) ? st.unit.expected_inv_sq() : 1.0;
    const double layer_c = st.has_layer() ? st.layer.expected_inv_sq() : 1.0;

    Graph g;
    std::vector<NodeId> wn;
    for (std::size_t i = 0; i < ws.w.size(); ++i) wn.push_back(g.parameter(weight_key(i), ws.w[i]));
    NodeId ll = g.gaussian_loglik(build_forward(g, cfg, wn, x), g.constant(y), noise_var);
    NodeId pen = -1;
    for (std::size_t i = 0; i < ws.w.size(); ++i) {
        const bool masked = i < cfg.layers();
        const bool taued = masked && cfg.is_residual(i) && st.has_layer();
        Tensor c(ws.w[i].shape(), 1.0);
        for (std::size_t r = 0; r < cfg.rows(i); ++r)
            for (std::size_t j = 0; j < cfg.fan_out(i); ++j) {
                double v = 1.0;
                if (masked && r < cfg.fan_in(i)) v *= unit_c;
                if (taued) v *= layer_c;
                c.at(r, j) = v;
            }
        NodeId term = g.sum(g.mul(g.mul(wn[i], wn[i]), g.constant(std::move(c))));
        pen = pen < 0 ? term : g.add(pen, term);
    }
    NodeId obj = g.add(ll, g.scale(pen, -1.0 / (2.0 * sigma0 * sigma0)));
    ObjectiveResult r;
    r.value = g.value(obj)[0];
    r.gradients = g.gradient(obj);
    return r;
}

// Exact log marginal likelihood for all-Bernoulli structures by enumerating
// every mask configuration (at most max_bits noise bits). Terms accumulate in
// log space through the sorted log-sum-exp.
inline double enumerate_log_marginal(const NetworkConfig& cfg, const WeightSet& ws,
                                     const NoiseStructure& st, const Tensor& x, const Tensor& y,
                                     double noise_var, std::size_t max_bits = 24) {
    detail::check_noise_var(noise_var);
    detail::require_targets(cfg, y, x.rows());
    struct Slot {
        int what;  // 0 unit, 1 weight, 2 layer
        std::size_t layer, index;
        double keep;
    };
    std::vector<Slot> slots;
    const std::size_t L = cfg.layers();
    if (st.has_unit() || st.has_weight()) {
        if (st.unit.kind() != NoiseFamily::Kind::Bernoulli)
            throw DomainError("enumerate_log_marginal: needs Bernoulli noise, got " +
                              st.unit.describe());
        for (std::size_t i = 0; i < L; ++i) {
            if (st.has_unit())
                for (std::size_t u = 0; u < cfg.fan_in(i); ++u)
                    slots.push_back({0, i, u, st.unit.keep_prob()});
            else
                for (std::size_t u = 0; u < cfg.fan_in(i) * cfg.fan_out(i); ++u)
                    slots.push_back({1, i, u, st.unit.keep_prob()});
        }
    }
    if (st.has_layer()) {
        if (st.layer.kind() != NoiseFamily::Kind::Bernoulli)
            throw DomainError("enumerate_log_marginal: needs Bernoulli noise, got " +
                              st.layer.describe());
        for (std::size_t i = 0; i < L; ++i)
            if (cfg.is_residual(i)) slots.push_back({2, i, 0, st.layer.keep_prob()});
    }
    if (slots.size() > max_bits)
        throw DomainError("enumerate_log_marginal: " + std::to_string(slots.size()) +
                          " mask bits exceed the limit of " + std::to_string(max_bits));

    MaskSample m;
    if (st.has_unit()) {
        m.unit.resize(L);
        for (std::size_t i = 0; i < L; ++i) m.unit[i].assign(cfg.fan_in(i), 1.0);
    }
    if (st.has_weight())
        for (std::size_t i = 0; i < L; ++i)
            m.weight.emplace_back(std::vector<std::size_t>{cfg.fan_in(i), cfg.fan_out(i)}, 1.0);
    m.layer.assign(L, 1.0);

    const std::uint64_t total = std::uint64_t{1} << slots.size();
    std::vector<double> terms;
    terms.reserve(total);
    for (std::uint64_t code = 0; code < total; ++code) {
        double log_prob = 0.0;
        for (std::size_t b = 0; b < slots.size(); ++b) {
            const Slot& sl = slots[b];
            double bit = (code >> b) & 1 ? 1.0 : 0.0;
            double p = bit ? sl.keep : 1.0 - sl.keep;
            log_prob += std::log(p);
            switch (sl.what) {
                case 0: m.unit[sl.layer][sl.index] = bit; break;
                case 1: m.weight[sl.layer][sl.index] = bit; break;
                default: m.layer[sl.layer] = bit; break;
            }
        }
        if (log_prob == -std::numeric_limits<double>::infinity()) continue;
        terms.push_back(log_prob +
                        detail::gaussian_loglik_plain(forward(cfg, ws, x, &st, &m), y, noise_var));
    }
    return log_sum_exp_sorted(std::move(terms));
}

}  // namespace shrinkage
