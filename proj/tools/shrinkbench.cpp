// shrinkbench: train and benchmark multiplicative-noise and EM-shrinkage
// regression networks, plus a few verification utilities.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shrinkage/benchmark.hpp"
#include "shrinkage/serialize.hpp"
#include "shrinkage/verify.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "configuration file (key = value sections)");
    cmd->add_option("--set", opts.sets, "override a config key, e.g. --set model.kind=ta")
        ->type_name("KEY=VALUE");
    // shorthands for the most commonly overridden keys
    auto alias = [&opts, cmd](const char* flag, const char* key, const char* help) {
        cmd->add_option_function<std::string>(
               flag,
               [&opts, key](const std::string& v) { opts.sets.push_back(std::string(key) + "=" + v); },
               help)
            ->type_name("VALUE");
    };
    alias("--dataset", "data.name", "dataset name (data.name)");
    alias("--data-dir", "data.dir", "data directory (data.dir)");
    alias("--model", "model.kind", "model kind (model.kind)");
    alias("--seed", "protocol.seed", "root seed (protocol.seed)");
    alias("--out-dir", "output.dir", "output directory (output.dir)");
}

shrinkage::ExperimentConfig resolve(const CommonOpts& opts) {
    shrinkage::KeyValueConfig kv;
    if (!opts.config_path.empty()) kv = shrinkage::KeyValueConfig::parse_file(opts.config_path);
    for (const std::string& s : opts.sets) kv.apply_override(s);
    return shrinkage::ExperimentConfig::from(kv);
}

bool wants_format(const shrinkage::ExperimentConfig& cfg, const std::string& fmt) {
    return cfg.formats.find(fmt) != std::string::npos;
}

int cmd_train(const CommonOpts& opts, std::size_t split_idx, const std::string& save_path) {
    using namespace shrinkage;
    ExperimentConfig cfg = resolve(opts);
    Dataset d = load_csv(cfg.data_path(), cfg.target);
    std::printf("dataset %s: %zu rows, %zu features\n", d.name.c_str(), d.size(), d.dim());
    auto splits = make_splits(d.size(), cfg.splits, cfg.test_fraction,
                              RngStream(cfg.seed).split(0).seed());
    if (split_idx >= splits.size())
        throw ConfigError("train: split index " + std::to_string(split_idx) + " out of range (" +
                          std::to_string(splits.size()) + " splits)");
    SingleRun run = run_split(cfg, d, splits[split_idx], split_idx);
    const SplitOutcome& o = run.outcome;
    if (!o.ok) {
        std::printf("split %zu failed: %s\n", o.split, o.error.c_str());
        return 1;
    }
    std::printf("split %zu (%s): rmse %.6g, loglik %.6g\n", o.split, cfg.model.c_str(), o.rmse,
                o.loglik);
    std::printf("  best epoch %zu of %zu, observation sd %.6g (standardized), val loglik %.6g\n",
                o.best_epoch, o.epochs, o.best_sd, o.val_loglik);
    if (run.plan.em) {
        RngStream elbo_rng = RngStream(cfg.seed).split(2).split(split_idx);
        Tensor xt = run.scaler.x_rows(d, splits[split_idx].train);
        Tensor yt = run.scaler.y_rows(d, splits[split_idx].train);
        ElboResult e = elbo(run.plan.net, run.model.vs, run.plan.prior, run.plan.hyper, xt, yt,
                            run.plan.train_noise_var, run.plan.sigma0, cfg.elbo_samples,
                            elbo_rng);
        std::printf("  train elbo %.6g (loglik %.6g, kl %.6g, hyper %.6g; %zu draws)\n", e.value,
                    e.expected_loglik, e.kl, e.hyper_log_density, cfg.elbo_samples);
    }
    if (!save_path.empty()) {
        if (run.plan.em)
            save_state(save_path, run.model.vs);
        else
            save_weights(save_path, run.model.ws);
        std::printf("saved state to %s\n", save_path.c_str());
    }
    return 0;
}

int cmd_benchmark(const CommonOpts& opts) {
    using namespace shrinkage;
    ExperimentConfig cfg = resolve(opts);
    Dataset d = load_csv(cfg.data_path(), cfg.target);
    std::printf("dataset %s: %zu rows, %zu features; model %s, %zu splits\n", d.name.c_str(),
                d.size(), d.dim(), cfg.model.c_str(), cfg.splits);
    ResultTable table = run_experiment(cfg, d);
    std::printf("%zu/%zu splits ok (%zu failed)\n", table.splits.size() - table.failed(),
                table.splits.size(), table.failed());
    std::printf("rmse    %.6g +/- %.6g\n", table.rmse_mean, table.rmse_se);
    std::printf("loglik  %.6g +/- %.6g\n", table.loglik_mean, table.loglik_se);
    const std::string base = report_basename(cfg);
    if (wants_format(cfg, "csv")) {
        write_report_csv(table, base + ".csv");
        std::printf("wrote %s.csv\n", base.c_str());
    }
    if (wants_format(cfg, "json")) {
        write_report_json(cfg, table, base + ".json");
        std::printf("wrote %s.json\n", base.c_str());
    }
    if (!cfg.is_em() && cfg.model != "map") {
        write_histogram_csv(table.hist, base + "_weights.csv");
        std::printf("wrote %s_weights.csv\n", base.c_str());
    }
    return 0;
}

int cmd_verify_gsm(std::uint64_t seed, std::size_t samples, double level) {
    using namespace shrinkage;
    std::vector<GsmCheck> checks = run_gsm_equivalence_suite(seed, samples, level);
    std::size_t failed = 0;
    std::printf("%-34s %12s %10s  %s\n", "check", "statistic", "p-value", "result");
    for (const GsmCheck& c : checks) {
        if (std::isnan(c.p_value))
            std::printf("%-34s %12.5g %10s  %s\n", c.name.c_str(), c.statistic, "-",
                        c.pass ? "pass" : "FAIL");
        else
            std::printf("%-34s %12.5g %10.4g  %s\n", c.name.c_str(), c.statistic, c.p_value,
                        c.pass ? "pass" : "FAIL");
        if (!c.detail.empty()) std::printf("    %s\n", c.detail.c_str());
        failed += c.pass ? 0 : 1;
    }
    std::printf("%zu/%zu checks passed\n", checks.size() - failed, checks.size());
    return failed == 0 ? 0 : 1;
}

// Toy-network oracle: exact noise-marginalized likelihood by enumeration vs
// the Monte Carlo estimators, on a fixed 2-4-1 ReLU net with weight-wise
// Bernoulli masks (8 mask bits).
int cmd_enumerate_map(std::uint64_t seed, std::size_t samples, std::size_t reps,
                      std::size_t batch, double drop) {
    using namespace shrinkage;
    NetworkConfig net;
    net.input_dim = 2;
    net.hidden = {4};
    net.output_dim = 1;
    NoiseStructure st = NoiseStructure::weight_wise(NoiseFamily::bernoulli(1.0 - drop));

    RngStream root(seed);
    RngStream wrng = root.split(0);
    WeightSet ws = initialize_weights(net, wrng);
    RngStream drng = root.split(1);
    Tensor x({batch, 2});
    for (double& v : x.values()) v = drng.normal();
    Tensor y_mean = forward(net, ws, x);
    Tensor y({batch, 1});
    for (std::size_t i = 0; i < batch; ++i) y.at(i, 0) = y_mean[i] + drng.normal(0.0, 1.0);

    const double noise_var = 1.0;
    const double exact = enumerate_log_marginal(net, ws, st, x, y, noise_var);
    std::printf("exact log marginal (256 mask configurations): %.10g\n", exact);

    RngStream mc = root.split(2);
    std::vector<double> lb(reps), iw(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        RngStream rep_lb = mc.split(2 * r);
        RngStream rep_iw = mc.split(2 * r + 1);
        lb[r] = mc_lower_bound(net, ws, st, x, y, samples, noise_var, rep_lb, false).value;
        iw[r] = importance_weighted(net, ws, st, x, y, samples, noise_var, rep_iw, false).value;
    }
    std::printf("%zu repetitions at S=%zu:\n", reps, samples);
    std::printf("  lower bound  %.10g +/- %.3g   (gap to exact %+.4g)\n", mean_of(lb), sem_of(lb),
                mean_of(lb) - exact);
    std::printf("  importance   %.10g +/- %.3g   (gap to exact %+.4g)\n", mean_of(iw), sem_of(iw),
                mean_of(iw) - exact);
    return 0;
}

int cmd_export_heatmap(const CommonOpts& opts, std::size_t split_idx, std::string out_path) {
    using namespace shrinkage;
    ExperimentConfig cfg = resolve(opts);
    if (cfg.hidden.size() < 2)
        throw ConfigError("export-heatmap: needs a hidden-to-hidden layer (>= 2 hidden layers)");
    Dataset d = load_csv(cfg.data_path(), cfg.target);
    auto splits = make_splits(d.size(), cfg.splits, cfg.test_fraction,
                              RngStream(cfg.seed).split(0).seed());
    if (split_idx >= splits.size())
        throw ConfigError("export-heatmap: split index out of range");
    SingleRun run = run_split(cfg, d, splits[split_idx], split_idx);
    if (!run.outcome.ok)
        throw NumericError("export-heatmap: split failed: " + run.outcome.error);
    std::vector<Tensor> maps = run.plan.em ? posterior_moment_map(run.plan.net, run.model.vs)
                                           : posterior_moment_map(run.plan.net, run.model.ws);
    if (out_path.empty()) out_path = report_basename(cfg) + "_heatmap.csv";
    write_heatmap_csv(maps, out_path);
    std::printf("split %zu: rmse %.6g, loglik %.6g\n", run.outcome.split, run.outcome.rmse,
                run.outcome.loglik);
    std::printf("wrote %s (%zu hidden-to-hidden matrices)\n", out_path.c_str(), maps.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiplicative-noise regularization and shrinkage-prior benchmarks"};
    app.require_subcommand(1);

    CommonOpts train_opts;
    std::size_t train_split = 0;
    std::string train_save;
    CLI::App* train = app.add_subcommand("train", "train one model on one split");
    add_common(train, train_opts);
    train->add_option("--split", train_split, "split index (default 0)");
    train->add_option("--save", train_save, "write the trained state to this file");

    CommonOpts bench_opts;
    CLI::App* bench = app.add_subcommand("benchmark", "run the full split protocol");
    add_common(bench, bench_opts);

    std::uint64_t gsm_seed = 1;
    std::size_t gsm_samples = 100000;
    double gsm_level = 0.01;
    CLI::App* gsm = app.add_subcommand("verify-gsm", "noise/marginal equivalence suite");
    gsm->add_option("--seed", gsm_seed, "seed (default 1)");
    gsm->add_option("--samples", gsm_samples, "draws per check (default 100000)");
    gsm->add_option("--level", gsm_level, "test level (default 0.01)");

    std::uint64_t enum_seed = 1;
    std::size_t enum_samples = 1000, enum_reps = 20, enum_batch = 16;
    double enum_drop = 0.5;
    CLI::App* enm = app.add_subcommand("enumerate-map",
                                       "exact marginal vs MC objectives on a toy network");
    enm->add_option("--seed", enum_seed, "seed (default 1)");
    enm->add_option("--samples", enum_samples, "MC samples per estimate (default 1000)");
    enm->add_option("--reps", enum_reps, "independent estimates (default 20)");
    enm->add_option("--batch", enum_batch, "toy batch size (default 16)");
    enm->add_option("--drop", enum_drop, "Bernoulli drop rate (default 0.5)");

    CommonOpts heat_opts;
    std::size_t heat_split = 0;
    std::string heat_out;
    CLI::App* heat = app.add_subcommand("export-heatmap",
                                        "train one split and dump posterior moment maps");
    add_common(heat, heat_opts);
    heat->add_option("--split", heat_split, "split index (default 0)");
    heat->add_option("--out", heat_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train_opts, train_split, train_save);
        if (bench->parsed()) return cmd_benchmark(bench_opts);
        if (gsm->parsed()) return cmd_verify_gsm(gsm_seed, gsm_samples, gsm_level);
        if (enm->parsed())
            return cmd_enumerate_map(enum_seed, enum_samples, enum_reps, enum_batch, enum_drop);
        if (heat->parsed()) return cmd_export_heatmap(heat_opts, heat_split, heat_out);
    } catch (const shrinkage::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
