#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "shrinkage/network.hpp"
#include "shrinkage/objectives.hpp"
#include "shrinkage/optimizer.hpp"

namespace shrinkage {

// Which prior scales are learned by the M-step:
//   Ard    one squared scale per real input row of each non-final layer
//   Add    one squared scale per residual hidden-to-hidden layer
//   ArdAdd both (the bias row sees only the layer scale)
enum class PriorStructure { Ard, Add, ArdAdd };

inline const char* prior_structure_name(PriorStructure p) {
    switch (p) {
        case PriorStructure::Ard: return "ard";
        case PriorStructure::Add: return "add";
        case PriorStructure::ArdAdd: return "ard-add";
    }
    return "?";
}

// Squared scales below this floor are clamped before entering prior variances.
inline constexpr double kScaleFloor = 1e-12;

// Hyperprior on a squared scale v. The half-Cauchy choice places the
// half-Cauchy density on the scale sqrt(v) and transforms it to v; the
// log-uniform prior is improper (density 1/v, no normalizer).
struct HyperPrior {
    enum class Kind { InverseGamma, HalfCauchy, LogUniform };

    Kind kind = Kind::InverseGamma;
    double alpha = 3.0, beta = 3.0;  // inverse-gamma
    double b = 1.0;                  // half-Cauchy

    static HyperPrior inverse_gamma(double alpha, double beta) {
        if (!(alpha > 0.0) || !(beta > 0.0))
            throw DomainError("HyperPrior: inverse-gamma needs positive shape and scale");
        HyperPrior h;
        h.kind = Kind::InverseGamma;
        h.alpha = alpha;
        h.beta = beta;
        return h;
    }
    static HyperPrior half_cauchy(double b) {
        if (!(b > 0.0)) throw DomainError("HyperPrior: half-Cauchy needs a positive scale");
        HyperPrior h;
        h.kind = Kind::HalfCauchy;
        h.b = b;
        return h;
    }
    static HyperPrior log_uniform() {
        HyperPrior h;
        h.kind = Kind::LogUniform;
        return h;
    }

    std::string describe() const {
        char buf[96];
        switch (kind) {
            case Kind::InverseGamma:
                std::snprintf(buf, sizeof buf, "inverse-gamma(%g,%g)", alpha, beta);
                break;
            case Kind::HalfCauchy:
                std::snprintf(buf, sizeof buf, "half-cauchy(%g)", b);
                break;
            case Kind::LogUniform:
                std::snprintf(buf, sizeof buf, "log-uniform");
                break;
        }
        return buf;
    }

    double log_density(double v) const {
        if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
        switch (kind) {
            case Kind::InverseGamma:
                return alpha * std::log(beta) - std::lgamma(alpha) - (alpha + 1.0) * std::log(v) -
                       beta / v;
            case Kind::HalfCauchy:
                return -std::log(M_PI * b) - 0.5 * std::log(v) - std::log1p(v / (b * b));
            case Kind::LogUniform:
                return -std::log(v);
        }
        throw Error("HyperPrior: bad kind");
    }
};

// Scale-dependent part of the ELBO for one group of D weights whose squared
// magnitudes (mu^2 + sigma^2) sum to S:
//   g(v) = -S/(2 sigma0^2 v) - (D/2) log(sigma0^2 v) + log p(v)
inline double scale_group_objective(const HyperPrior& hp, double weight_sq_sum,
                                    std::size_t group_size, double sigma0, double v) {
    const double s2 = sigma0 * sigma0;
    return -weight_sq_sum / (2.0 * s2 * v) -
           0.5 * static_cast<double>(group_size) * std::log(s2 * v) + hp.log_density(v);
}

// Closed-form maximizer of scale_group_objective over v > 0.
inline double scale_star(const HyperPrior& hp, double weight_sq_sum, std::size_t group_size,
                         double sigma0) {
    if (weight_sq_sum < 0.0) throw DomainError("scale_star: negative weight square sum");
    if (!(sigma0 > 0.0)) throw DomainError("scale_star: sigma0 must be positive");
    const double a = weight_sq_sum / (2.0 * sigma0 * sigma0);
    const double d = static_cast<double>(group_size);
    switch (hp.kind) {
        case HyperPrior::Kind::InverseGamma:
            return (hp.beta + a) / (hp.alpha + 1.0 + 0.5 * d);
        case HyperPrior::Kind::LogUniform:
            return a / (0.5 * d + 1.0);
        case HyperPrior::Kind::HalfCauchy: {
            // ((d+3)/2) v^2 + ((d+1) b^2 / 2 - a) v - a b^2 = 0, positive root
            const double qa = 0.5 * (d + 3.0);
            const double qb = 0.5 * (d + 1.0) * hp.b * hp.b - a;
            const double qc = -a * hp.b * hp.b;
            const double disc = std::sqrt(qb * qb - 4.0 * qa * qc);
            // rationalized form avoids cancellation when qb > 0
            return qb >= 0.0 ? -2.0 * qc / (qb + disc) : (disc - qb) / (2.0 * qa);
        }
    }
    throw Error("scale_star: bad kind");
}

// Mean-field Gaussian over every weight (sigma = softplus(rho)) plus point
// estimates of the squared prior scales.
struct VariationalState {
    std::vector<Tensor> mu, rho;
    std::vector<std::vector<double>> row_scale_sq;  // [weight matrix][real row]; ARD kinds
    std::vector<double> layer_scale_sq;             // [hidden layer]; ADD kinds, 1 where off

    Tensor sigma(std::size_t i) const {
        Tensor s = rho[i];
        for (double& v : s.values())
            v = v > 30.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
        return s;
    }
};

inline double softplus_inverse(double y) {
    if (!(y > 0.0)) throw DomainError("softplus_inverse: need a positive value");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

inline VariationalState init_variational(const NetworkConfig& cfg, PriorStructure ps,
                                         RngStream& rng, double init_sigma = 0.05) {
    cfg.validate();
    VariationalState st;
    WeightSet ws = initialize_weights(cfg, rng);
    st.mu = std::move(ws.w);
    const double rho0 = softplus_inverse(init_sigma);
    for (const Tensor& m : st.mu) st.rho.emplace_back(m.shape(), rho0);
    st.row_scale_sq.resize(cfg.layers());
    if (ps != PriorStructure::Add)
        for (std::size_t i = 0; i < cfg.layers(); ++i)
            st.row_scale_sq[i].assign(cfg.fan_in(i), 1.0);
    st.layer_scale_sq.assign(cfg.layers(), 1.0);
    return st;
}

namespace detail {

inline bool row_scaled(PriorStructure ps, const NetworkConfig& cfg, std::size_t i, std::size_t r) {
    return ps != PriorStructure::Add && i < cfg.layers() && r < cfg.fan_in(i);
}

inline bool layer_scaled(PriorStructure ps, const NetworkConfig& cfg, std::size_t i) {
    return ps != PriorStructure::Ard && i < cfg.layers() && cfg.is_residual(i);
}

// Prior variance of every entry of weight matrix i (rows share a value).
inline double prior_variance(const NetworkConfig& cfg, const VariationalState& st,
                             PriorStructure ps, double sigma0, std::size_t i, std::size_t r) {
    double v = sigma0 * sigma0;
    if (row_scaled(ps, cfg, i, r)) v *= std::max(st.row_scale_sq[i][r], kScaleFloor);
    if (layer_scaled(ps, cfg, i)) v *= std::max(st.layer_scale_sq[i], kScaleFloor);
    return v;
}

// Sum of log hyperprior densities over the active scale groups.
inline double hyper_log_density(const NetworkConfig& cfg, const VariationalState& st,
                                PriorStructure ps, const HyperPrior& hp) {
    double s = 0.0;
    for (std::size_t i = 0; i < cfg.layers(); ++i) {
        if (ps != PriorStructure::Add)
            for (double v : st.row_scale_sq[i]) s += hp.log_density(v);
        if (layer_scaled(ps, cfg, i)) s += hp.log_density(st.layer_scale_sq[i]);
    }
    return s;
}

struct ElboGraphParts {
    std::vector<NodeId> mu, rho, sigma;
    NodeId kl = -1;
};

inline std::string mu_key(std::size_t i) { return "mu" + std::to_string(i + 1); }
inline std::string rho_key(std::size_t i) { return "rho" + std::to_string(i + 1); }

inline ElboGraphParts build_state_and_kl(Graph& g, const NetworkConfig& cfg,
                                         const VariationalState& st, PriorStructure ps,
                                         double sigma0) {
    ElboGraphParts parts;
    NodeId kl = -1;
    for (std::size_t i = 0; i < st.mu.size(); ++i) {
        NodeId mu = g.parameter(mu_key(i), st.mu[i]);
        NodeId rho = g.parameter(rho_key(i), st.rho[i]);
        NodeId sig = g.softplus(rho);
        parts.mu.push_back(mu);
        parts.rho.push_back(rho);
        parts.sigma.push_back(sig);

        Tensor inv_pv(st.mu[i].shape());
        double log_pv_sum = 0.0;
        for (std::size_t r = 0; r < st.mu[i].rows(); ++r) {
            double pv = prior_variance(cfg, st, ps, sigma0, i, r);
            for (std::size_t c = 0; c < st.mu[i].cols(); ++c) inv_pv.at(r, c) = 1.0 / pv;
            log_pv_sum += static_cast<double>(st.mu[i].cols()) * std::log(pv);
        }
        // KL(q||p) = 1/2 [ sum (sigma^2+mu^2)/pv - D - sum log sigma^2 + sum log pv ]
        NodeId s2 = g.mul(sig, sig);
        NodeId quad = g.sum(g.mul(g.add(s2, g.mul(mu, mu)), g.constant(std::move(inv_pv))));
        NodeId logdet = g.sum(g.log(s2));
        NodeId c = g.constant(Tensor::scalar(log_pv_sum - static_cast<double>(st.mu[i].size())));
        NodeId kli = g.scale(g.add(g.sub(quad, logdet), c), 0.5);
        kl = kl < 0 ? kli : g.add(kl, kli);
    }
    parts.kl = kl;
    return parts;
}

inline std::vector<NodeId> sample_weight_nodes(Graph& g, const ElboGraphParts& parts,
                                               const VariationalState& st, RngStream& rng) {
    std::vector<NodeId> w;
    for (std::size_t i = 0; i < st.mu.size(); ++i) {
        Tensor eps(st.mu[i].shape());
        for (double& v : eps.values()) v = rng.normal();
        w.push_back(g.add(parts.mu[i], g.mul(parts.sigma[i], g.constant(std::move(eps)))));
    }
    return w;
}

}  // namespace detail

struct ElboResult {
    double value = 0.0;
    double expected_loglik = 0.0;
    double kl = 0.0;
    double hyper_log_density = 0.0;
    GradientMap gradients;  // d value / d {mu*, rho*}; ascent direction
};

// Monte Carlo ELBO estimate: E_q[log p(y|x,W)] (mc_samples shared weight
// draws) - KL(q(W) || p(W | scales)) + sum log p(scales). The gradient, when
// requested, differentiates exactly this estimator (common random numbers).
inline ElboResult elbo(const NetworkConfig& cfg, const VariationalState& st, PriorStructure ps,
                       const HyperPrior& hp, const Tensor& x, const Tensor& y, double noise_var,
                       double sigma0, std::size_t mc_samples, RngStream& rng,
                       bool want_gradient = false) {
    if (mc_samples == 0) throw DomainError("elbo: mc_samples must be positive");
    detail::check_noise_var(noise_var);
    detail::require_targets(cfg, y, x.rows());
    Graph g;
    detail::ElboGraphParts parts = detail::build_state_and_kl(g, cfg, st, ps, sigma0);
    NodeId y_node = g.constant(y);
    NodeId ell = -1;
    for (std::size_t s = 0; s < mc_samples; ++s) {
        std::vector<NodeId> w = detail::sample_weight_nodes(g, parts, st, rng);
        NodeId ll = g.gaussian_loglik(build_forward(g, cfg, w, x), y_node, noise_var);
        ell = ell < 0 ? ll : g.add(ell, ll);
    }
    ell = g.scale(ell, 1.0 / static_cast<double>(mc_samples));
    double hyper = detail::hyper_log_density(cfg, st, ps, hp);
    NodeId obj = g.add(g.sub(ell, parts.kl), g.constant(Tensor::scalar(hyper)));
    ElboResult r;
    r.value = g.value(obj)[0];
    r.expected_loglik = g.value(ell)[0];
    r.kl = g.value(parts.kl)[0];
    r.hyper_log_density = hyper;
    if (want_gradient) r.gradients = g.gradient(obj);
    return r;
}

// Per-datum variant used by the E-step: one fresh weight draw per data row,
// log-likelihood scaled by data_scale (dataset size / batch size) to keep the
// minibatch estimator unbiased for the full-data ELBO.
inline ElboResult elbo_per_datum(const NetworkConfig& cfg, const VariationalState& st,
                                 PriorStructure ps, const HyperPrior& hp, const Tensor& x,
                                 const Tensor& y, double noise_var, double sigma0,
                                 double data_scale, RngStream& rng) {
    detail::check_noise_var(noise_var);
    detail::require_targets(cfg, y, x.rows());
    Graph g;
    detail::ElboGraphParts parts = detail::build_state_and_kl(g, cfg, st, ps, sigma0);
    NodeId ell = -1;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        Tensor xr({1, x.cols()});
        Tensor yr({1, y.cols()});
        for (std::size_t c = 0; c < x.cols(); ++c) xr.at(0, c) = x.at(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) yr.at(0, c) = y.at(r, c);
        std::vector<NodeId> w = detail::sample_weight_nodes(g, parts, st, rng);
        NodeId ll = g.gaussian_loglik(build_forward(g, cfg, w, xr), g.constant(std::move(yr)),
                                      noise_var);
        ell = ell < 0 ? ll : g.add(ell, ll);
    }
    ell = g.scale(ell, data_scale);
    double hyper = detail::hyper_log_density(cfg, st, ps, hp);
    NodeId obj = g.add(g.sub(ell, parts.kl), g.constant(Tensor::scalar(hyper)));
    ElboResult r;
    r.value = g.value(obj)[0];
    r.expected_loglik = g.value(ell)[0];
    r.kl = g.value(parts.kl)[0];
    r.hyper_log_density = hyper;
    r.gradients = g.gradient(obj);
    return r;
}

// Joint scale objective of one ARD-ADD layer block: rows scaled by u_r, the
// whole matrix (bias row included) by t.
inline double ard_add_block_objective(const HyperPrior& hp, double sigma0,
                                      const std::vector<double>& row_sq, double bias_sq,
                                      std::size_t fan_out, bool has_bias,
                                      const std::vector<double>& u, double t) {
    double j = hp.log_density(t);
    for (std::size_t r = 0; r < row_sq.size(); ++r)
        j += scale_group_objective(hp, row_sq[r] / t, fan_out, sigma0, u[r]) -
             0.5 * static_cast<double>(fan_out) * std::log(t);
    if (has_bias)
        j += -bias_sq / (2.0 * sigma0 * sigma0 * t) -
             0.5 * static_cast<double>(fan_out) * std::log(sigma0 * sigma0 * t);
    return j;
}

// M-step: closed-form update of every scale group given the current q.
// ARD-ADD layers alternate the two closed forms until the block converges.
inline void m_step(const NetworkConfig& cfg, VariationalState& st, PriorStructure ps,
                   const HyperPrior& hp, double sigma0) {
    for (std::size_t i = 0; i < cfg.layers(); ++i) {
        const Tensor& mu = st.mu[i];
        Tensor sig = st.sigma(i);
        const std::size_t fan_in = cfg.fan_in(i);
        const std::size_t fan_out = cfg.fan_out(i);
        std::vector<double> row_sq(fan_in, 0.0);
        for (std::size_t r = 0; r < fan_in; ++r)
            for (std::size_t c = 0; c < fan_out; ++c)
                row_sq[r] += mu.at(r, c) * mu.at(r, c) + sig.at(r, c) * sig.at(r, c);
        double bias_sq = 0.0;
        if (cfg.bias)
            for (std::size_t c = 0; c < fan_out; ++c)
                bias_sq += mu.at(fan_in, c) * mu.at(fan_in, c) +
                           sig.at(fan_in, c) * sig.at(fan_in, c);

        const bool has_rows = ps != PriorStructure::Add;
        const bool has_layer = detail::layer_scaled(ps, cfg, i);
        if (has_rows && !has_layer) {
            for (std::size_t r = 0; r < fan_in; ++r)
                st.row_scale_sq[i][r] =
                    std::max(scale_star(hp, row_sq[r], fan_out, sigma0), kScaleFloor);
        } else if (!has_rows && has_layer) {
            double total = bias_sq;
            for (double v : row_sq) total += v;
            st.layer_scale_sq[i] =
                std::max(scale_star(hp, total, cfg.rows(i) * fan_out, sigma0), kScaleFloor);
        } else if (has_rows && has_layer) {
            // coordinate ascent on (u_1..u_fanin, t)
            std::vector<double>& u = st.row_scale_sq[i];
            double t = st.layer_scale_sq[i];
            for (int sweep = 0; sweep < 50; ++sweep) {
                double delta = 0.0;
                for (std::size_t r = 0; r < fan_in; ++r) {
                    double nu = std::max(scale_star(hp, row_sq[r] / t, fan_out, sigma0),
                                         kScaleFloor);
                    delta = std::max(delta, std::abs(nu - u[r]) / std::max(1.0, std::abs(nu)));
                    u[r] = nu;
                }
                double s_eff = bias_sq;
                for (std::size_t r = 0; r < fan_in; ++r) s_eff += row_sq[r] / u[r];
                double nt = std::max(scale_star(hp, s_eff, cfg.rows(i) * fan_out, sigma0),
                                     kScaleFloor);
                delta = std::max(delta, std::abs(nt - t) / std::max(1.0, std::abs(nt)));
                t = nt;
                if (delta < 1e-10) break;
            }
            st.layer_scale_sq[i] = t;
        }
    }
}

// One EM step on a minibatch: M-step first (closed-form scales), then one
// Adam ascent step on (mu, rho) along the per-datum ELBO gradient.
inline ElboResult em_step(const NetworkConfig& cfg, VariationalState& st, PriorStructure ps,
                          const HyperPrior& hp, const Tensor& x, const Tensor& y,
                          double noise_var, double sigma0, double data_scale, Adam& opt,
                          RngStream& rng) {
    m_step(cfg, st, ps, hp, sigma0);
    ElboResult r = elbo_per_datum(cfg, st, ps, hp, x, y, noise_var, sigma0, data_scale, rng);
    std::map<std::string, Tensor*> params;
    for (std::size_t i = 0; i < st.mu.size(); ++i) {
        params[detail::mu_key(i)] = &st.mu[i];
        params[detail::rho_key(i)] = &st.rho[i];
    }
    opt.step(r.gradients, params);
    return r;
}

struct Predictive {
    Tensor mean;      // [N x output_dim]
    Tensor variance;  // [N x output_dim], observation noise included
};

// Posterior predictive by Monte Carlo over q: mean of the sampled network
// outputs, variance = unbiased MC variance (0 when mc_samples == 1) plus the
// observation noise variance.
inline Predictive predictive_distribution(const NetworkConfig& cfg, const VariationalState& st,
                                          const Tensor& x, std::size_t mc_samples,
                                          double noise_var, RngStream& rng) {
    if (mc_samples == 0) throw DomainError("predictive_distribution: mc_samples must be positive");
    detail::check_noise_var(noise_var);
    Tensor mean({x.rows(), cfg.output_dim}, 0.0);
    Tensor m2({x.rows(), cfg.output_dim}, 0.0);
    WeightSet ws;
    ws.w.resize(st.mu.size());
    for (std::size_t s = 0; s < mc_samples; ++s) {
        for (std::size_t i = 0; i < st.mu.size(); ++i) {
            Tensor w = st.mu[i];
            Tensor sig = st.sigma(i);
            for (std::size_t j = 0; j < w.size(); ++j) w[j] += sig[j] * rng.normal();
            ws.w[i] = std::move(w);
        }
        Tensor out = forward(cfg, ws, x);
        // Welford update
        for (std::size_t j = 0; j < out.size(); ++j) {
            double d = out[j] - mean[j];
            mean[j] += d / static_cast<double>(s + 1);
            m2[j] += d * (out[j] - mean[j]);
        }
    }
    Tensor var({x.rows(), cfg.output_dim}, 0.0);
    for (std::size_t j = 0; j < var.size(); ++j)
        var[j] = noise_var +
                 (mc_samples > 1 ? m2[j] / static_cast<double>(mc_samples - 1) : 0.0);
    return {std::move(mean), std::move(var)};
}

inline std::vector<Tensor> posterior_moment_map(const NetworkConfig& cfg,
                                                const VariationalState& st) {
    std::vector<Tensor> sd;
    for (std::size_t i = 0; i < st.mu.size(); ++i) sd.push_back(st.sigma(i));
    return posterior_moment_map(cfg, st.mu, &sd);
}

}  // namespace shrinkage
