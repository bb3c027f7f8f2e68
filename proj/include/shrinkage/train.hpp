#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shrinkage/config.hpp"
#include "shrinkage/dataset.hpp"
#include "shrinkage/objectives.hpp"
#include "shrinkage/optimizer.hpp"
#include "shrinkage/varem.hpp"

namespace shrinkage {

// Everything needed to train one model on one split, resolved from the
// experiment configuration.
struct ModelPlan {
    NetworkConfig net;
    std::string kind;  // lb | iw | ta | map | em-ard | em-add | em-ard-add
    bool em = false;
    bool map = false;
    std::optional<NoiseStructure> noise;  // MC kinds only
    PriorStructure prior = PriorStructure::Ard;
    HyperPrior hyper;
    double sigma0 = 1.0;
    bool decay = false;
    std::size_t samples = 10;       // MC objective samples during training
    double init_sigma = 0.05;
    // observation variance assumed while training, standardized target units
    double train_noise_var = 1.0;
};

inline ModelPlan make_plan(const ExperimentConfig& cfg, std::size_t input_dim) {
    ModelPlan p;
    p.net = cfg.make_network(input_dim);
    p.kind = cfg.model;
    p.em = cfg.is_em();
    p.map = cfg.model == "map";
    if (!p.em && !p.map) p.noise = cfg.make_structure();
    if (p.em) p.prior = cfg.prior_structure();
    p.hyper = cfg.make_hyper();
    p.sigma0 = cfg.sigma0;
    p.decay = cfg.weight_decay || p.map;
    p.samples = cfg.samples;
    p.init_sigma = cfg.init_sigma;
    return p;
}

struct TrainSettings {
    std::size_t epochs = 400;
    std::size_t batch = 32;
    double lr = 1e-3;
    std::size_t eval_every = 10;
    std::size_t patience = 10;
    std::size_t val_samples = 20;
    std::size_t sd_grid = 30;
    double sd_min = 1e-3, sd_max = 10.0;

    static TrainSettings from(const ExperimentConfig& cfg) {
        TrainSettings t;
        t.epochs = cfg.epochs;
        t.batch = cfg.batch;
        t.lr = cfg.lr;
        t.eval_every = cfg.eval_every;
        t.patience = cfg.patience;
        t.val_samples = cfg.val_samples;
        t.sd_grid = cfg.sd_grid;
        t.sd_min = cfg.sd_min;
        t.sd_max = cfg.sd_max;
        return t;
    }

    std::vector<double> sd_grid_values() const {
        std::vector<double> g(sd_grid);
        if (sd_grid == 1) {
            g[0] = sd_min;
            return g;
        }
        const double l0 = std::log(sd_min), l1 = std::log(sd_max);
        for (std::size_t i = 0; i < sd_grid; ++i)
            g[i] = std::exp(l0 + (l1 - l0) * static_cast<double>(i) /
                                     static_cast<double>(sd_grid - 1));
        // Keep every value inside [sd_min, sd_max]: the log/exp round trip can
        // land the endpoints a few ulps outside the closed interval.
        g.front() = sd_min;
        g.back() = sd_max;
        return g;
    }
};

// Importance-weight histogram on [0,1].
struct Histogram {
    double lo = 0.0, hi = 1.0;
    std::vector<std::size_t> counts;

    explicit Histogram(std::size_t bins = 40, double lo_ = 0.0, double hi_ = 1.0)
        : lo(lo_), hi(hi_), counts(bins, 0) {}

    void add(double v) {
        if (counts.empty()) return;
        double t = (v - lo) / (hi - lo);
        auto idx = static_cast<long long>(t * static_cast<double>(counts.size()));
        idx = std::max<long long>(0, std::min<long long>(idx, counts.size() - 1));
        ++counts[static_cast<std::size_t>(idx)];
    }

    std::size_t occupied() const {
        std::size_t n = 0;
        for (std::size_t c : counts) n += c > 0 ? 1 : 0;
        return n;
    }

    std::size_t total() const {
        std::size_t n = 0;
        for (std::size_t c : counts) n += c;
        return n;
    }
};

// A trained model: point weights or a variational state.
struct FittedModel {
    bool em = false;
    WeightSet ws;
    VariationalState vs;
};

// Monte Carlo predictions plus per-datum moments. The predictive density is
// a mixture of per-draw Gaussians for MC/MAP models; EM models moment-match
// to one Gaussian per datum (mean, MC variance + observation variance),
// mirroring predictive_distribution.
struct PredictionSet {
    std::vector<std::vector<double>> draws;  // [samples][row]
    std::vector<double> mean, var_mc;        // per row; var_mc unbiased, 0 when samples == 1
    bool moment_form = false;
};

namespace detail {

inline PredictionSet make_prediction_set(const ModelPlan& plan, const FittedModel& model,
                                         const Tensor& x, std::size_t s, RngStream& rng) {
    PredictionSet ps;
    ps.moment_form = plan.em;
    if (plan.em) {
        WeightSet ws;
        ws.w.resize(model.vs.mu.size());
        for (std::size_t k = 0; k < s; ++k) {
            for (std::size_t i = 0; i < model.vs.mu.size(); ++i) {
                Tensor w = model.vs.mu[i];
                Tensor sig = model.vs.sigma(i);
                for (std::size_t j = 0; j < w.size(); ++j) w[j] += sig[j] * rng.normal();
                ws.w[i] = std::move(w);
            }
            ps.draws.emplace_back(forward(plan.net, ws, x).values());
        }
    } else if (plan.noise) {
        for (std::size_t k = 0; k < s; ++k) {
            MaskSample m = sample_masks(plan.net, *plan.noise, rng);
            ps.draws.emplace_back(forward(plan.net, model.ws, x, &*plan.noise, &m).values());
        }
    } else {
        ps.draws.emplace_back(forward(plan.net, model.ws, x).values());
    }
    const std::size_t n = ps.draws[0].size();
    ps.mean.assign(n, 0.0);
    ps.var_mc.assign(n, 0.0);
    for (std::size_t k = 0; k < ps.draws.size(); ++k)
        for (std::size_t i = 0; i < n; ++i) {
            double d = ps.draws[k][i] - ps.mean[i];
            ps.mean[i] += d / static_cast<double>(k + 1);
            ps.var_mc[i] += d * (ps.draws[k][i] - ps.mean[i]);
        }
    for (double& v : ps.var_mc) v = ps.draws.size() > 1
                                        ? v / static_cast<double>(ps.draws.size() - 1)
                                        : 0.0;
    return ps;
}

// Mean per-datum predictive log-likelihood at observation sd, standardized
// units. Mixture form: log((1/S) sum_s N(y_i; draw_si, sd^2)) with a sorted
// log-sum-exp; moment form: log N(y_i; mean_i, var_mc_i + sd^2).
inline double predictive_loglik(const PredictionSet& ps, const Tensor& y, double sd) {
    const double var = sd * sd;
    double total = 0.0;
    if (ps.moment_form) {
        for (std::size_t i = 0; i < y.size(); ++i) {
            double v = ps.var_mc[i] + var;
            double d = y[i] - ps.mean[i];
            total += -0.5 * std::log(2.0 * M_PI * v) - d * d / (2.0 * v);
        }
    } else {
        const double log_norm = -0.5 * std::log(2.0 * M_PI * var);
        const double log_s = std::log(static_cast<double>(ps.draws.size()));
        std::vector<double> terms(ps.draws.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            for (std::size_t s = 0; s < ps.draws.size(); ++s) {
                double d = y[i] - ps.draws[s][i];
                terms[s] = log_norm - d * d / (2.0 * var);
            }
            total += log_sum_exp_sorted(terms) - log_s;
        }
    }
    return total / static_cast<double>(y.size());
}

}  // namespace detail

struct ValScore {
    double loglik = -std::numeric_limits<double>::infinity();  // mean per-datum, standardized
    double sd = 1.0;                                           // best grid sd, standardized
};

// Grid search the observation noise on held-out data; returns the best mean
// per-datum predictive log-likelihood and the sd achieving it.
inline ValScore score_on_grid(const PredictionSet& ps, const Tensor& y,
                              const std::vector<double>& grid) {
    ValScore best;
    for (double sd : grid) {
        double ll = detail::predictive_loglik(ps, y, sd);
        if (ll > best.loglik) {
            best.loglik = ll;
            best.sd = sd;
        }
    }
    return best;
}

struct PhaseOutcome {
    FittedModel model;
    std::size_t best_epoch = 0;  // epoch count at the best validation score
    ValScore best;
    bool stopped_early = false;
    std::size_t epochs_run = 0;
};

// Trains for up to settings.epochs epochs. With validation data, evaluates
// every eval_every epochs (and at the last), tracking the best epoch/sd and
// stopping after `patience` evaluations without improvement. The histogram,
// when given, collects the normalized per-sample objective weights seen
// during the final epoch (MC objectives only). EM models re-estimate the
// training observation variance once per epoch (variational M-step); MC and
// MAP models train at the fixed plan.train_noise_var, whose scale only
// rebalances gradients the adaptive optimizer renormalizes anyway.
inline PhaseOutcome train_phase(const ModelPlan& plan, const Tensor& x, const Tensor& y,
                                const Tensor* x_val, const Tensor* y_val,
                                const TrainSettings& settings, std::uint64_t seed,
                                Histogram* hist = nullptr) {
    const std::size_t n = x.rows();
    if (n == 0) throw DomainError("train_phase: empty training set");
    RngStream root(seed);
    RngStream init_rng = root.split(0);
    RngStream shuffle_rng = root.split(1);
    RngStream objective_rng = root.split(2);
    RngStream eval_root = root.split(3);
    RngStream noise_rng = root.split(4);

    PhaseOutcome out;
    out.model.em = plan.em;
    if (plan.em)
        out.model.vs = init_variational(plan.net, plan.prior, init_rng, plan.init_sigma);
    else
        out.model.ws = initialize_weights(plan.net, init_rng);

    Adam opt(settings.lr);
    double noise_var = plan.train_noise_var;
    const std::vector<double> grid = settings.sd_grid_values();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::size_t evals_since_best = 0;
    for (std::size_t epoch = 1; epoch <= settings.epochs; ++epoch) {
        for (std::size_t i = n - 1; i > 0; --i) {
            std::size_t j = std::min<std::size_t>(
                static_cast<std::size_t>(shuffle_rng.uniform() * static_cast<double>(i + 1)), i);
            std::swap(order[i], order[j]);
        }
        const bool final_epoch = epoch == settings.epochs;
        for (std::size_t start = 0; start < n; start += settings.batch) {
            const std::size_t b = std::min(settings.batch, n - start);
            Tensor xb({b, x.cols()});
            Tensor yb({b, y.cols()});
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t c = 0; c < x.cols(); ++c)
                    xb.at(i, c) = x.at(order[start + i], c);
                for (std::size_t c = 0; c < y.cols(); ++c)
                    yb.at(i, c) = y.at(order[start + i], c);
            }
            if (plan.em) {
                em_step(plan.net, out.model.vs, plan.prior, plan.hyper, xb, yb, noise_var,
                        plan.sigma0, static_cast<double>(n) / static_cast<double>(b), opt,
                        objective_rng);
            } else {
                ObjectiveResult r;
                if (plan.map) {
                    r = noiseless_objective(plan.net, out.model.ws, xb, yb, plan.train_noise_var);
                } else if (plan.kind == "lb") {
                    r = mc_lower_bound(plan.net, out.model.ws, *plan.noise, xb, yb, plan.samples,
                                       plan.train_noise_var, objective_rng);
                } else if (plan.kind == "iw") {
                    r = importance_weighted(plan.net, out.model.ws, *plan.noise, xb, yb,
                                            plan.samples, plan.train_noise_var, objective_rng);
                } else if (plan.kind == "ta") {
                    r = tail_adaptive(plan.net, out.model.ws, *plan.noise, xb, yb, plan.samples,
                                      plan.train_noise_var, objective_rng);
                } else {
                    throw ConfigError("train_phase: unknown kind '" + plan.kind + "'");
                }
                if (plan.decay) {
                    // The decay penalty is a once-per-dataset prior term, so
                    // scale the minibatch data term up to full-data size before
                    // adding it; otherwise the penalty is applied once per
                    // batch and over-regularizes by a factor of n/b.
                    const double full = static_cast<double>(n) / static_cast<double>(b);
                    r.value *= full;
                    for (auto& g : r.gradients)
                        for (double& v : g.second.values()) v *= full;
                    r = with_weight_decay(std::move(r), out.model.ws, plan.sigma0);
                }
                if (hist && final_epoch)
                    for (double w : r.weights) hist->add(w);
                std::map<std::string, Tensor*> params;
                for (std::size_t i = 0; i < out.model.ws.w.size(); ++i)
                    params[weight_key(i)] = &out.model.ws.w[i];
                opt.step(r.gradients, params);
            }
        }
        out.epochs_run = epoch;
        if (plan.em) {
            // Closed-form M-step for the observation variance: the ELBO is
            // maximized over it by the expected mean squared residual under q,
            // estimated here with one shared reparametrized weight draw.
            // Floored so a near-exact fit cannot degenerate the likelihood.
            WeightSet draw;
            draw.w.resize(out.model.vs.mu.size());
            for (std::size_t i = 0; i < out.model.vs.mu.size(); ++i) {
                Tensor w = out.model.vs.mu[i];
                const Tensor sig = out.model.vs.sigma(i);
                for (std::size_t j = 0; j < w.size(); ++j) w[j] += sig[j] * noise_rng.normal();
                draw.w[i] = std::move(w);
            }
            const Tensor pred = forward(plan.net, draw, x);
            double sq = 0.0;
            for (std::size_t i = 0; i < pred.size(); ++i)
                sq += (pred[i] - y[i]) * (pred[i] - y[i]);
            noise_var = std::max(1e-6, sq / static_cast<double>(pred.size()));
        }
        if (x_val && (epoch % settings.eval_every == 0 || final_epoch)) {
            RngStream eval_rng = eval_root.split(epoch);
            PredictionSet ps = detail::make_prediction_set(plan, out.model, *x_val,
                                                           settings.val_samples, eval_rng);
            ValScore score = score_on_grid(ps, *y_val, grid);
            if (score.loglik > out.best.loglik) {
                out.best = score;
                out.best_epoch = epoch;
                evals_since_best = 0;
            } else if (++evals_since_best >= settings.patience) {
                out.stopped_early = true;
                break;
            }
        }
    }
    if (!x_val) out.best_epoch = out.epochs_run;
    return out;
}

struct TestMetrics {
    double rmse = 0.0;    // original units
    double loglik = 0.0;  // mean per-datum predictive log-likelihood, original units
};

// Test-set evaluation in original units. The RMSE is computed both as
// y_sd * standardized-RMSE and directly in original units; the two must agree
// to 1e-9 relative (cheap internal consistency check).
inline TestMetrics evaluate_test(const ModelPlan& plan, const FittedModel& model,
                                 const Tensor& x_std, const std::vector<double>& y_orig,
                                 const Standardizer& sc, std::size_t samples, double sd_std,
                                 std::uint64_t seed) {
    RngStream rng{seed};
    PredictionSet ps = detail::make_prediction_set(plan, model, x_std, samples, rng);

    double sq_std = 0.0, sq_orig = 0.0;
    Tensor y_std({y_orig.size(), 1});
    for (std::size_t i = 0; i < y_orig.size(); ++i) {
        y_std.at(i, 0) = (y_orig[i] - sc.y_mean) / sc.y_sd;
        double d_std = ps.mean[i] - y_std.at(i, 0);
        double d_orig = sc.y_to_original(ps.mean[i]) - y_orig[i];
        sq_std += d_std * d_std;
        sq_orig += d_orig * d_orig;
    }
    const double n = static_cast<double>(y_orig.size());
    TestMetrics m;
    m.rmse = std::sqrt(sq_orig / n);
    const double rmse_via_std = sc.y_sd * std::sqrt(sq_std / n);
    if (std::abs(m.rmse - rmse_via_std) > 1e-9 * (1.0 + m.rmse))
        throw NumericError("evaluate_test: unit round-trip mismatch, " + std::to_string(m.rmse) +
                           " vs " + std::to_string(rmse_via_std));
    // log N(y_orig; m_orig, (sd*y_sd)^2) = log N(y_std; m_std, sd^2) - log y_sd
    m.loglik = detail::predictive_loglik(ps, y_std, sd_std) - std::log(sc.y_sd);
    return m;
}

}  // namespace shrinkage
