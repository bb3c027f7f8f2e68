#pragma once

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "shrinkage/stats.hpp"
#include "shrinkage/train.hpp"

namespace shrinkage {

struct SplitOutcome {
    std::size_t split = 0;
    bool ok = false;
    std::string error;
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double loglik = std::numeric_limits<double>::quiet_NaN();
    double best_sd = 0.0;       // standardized units
    double val_loglik = 0.0;    // best validation score, standardized units
    std::size_t best_epoch = 0;
    std::size_t epochs = 0;     // epochs run in the validation phase
    Histogram hist;             // per-sample objective weights, refit final epoch
};

// One split end to end, keeping the fitted model (the `train` and
// `export-heatmap` subcommands want it; `benchmark` keeps outcomes only).
struct SingleRun {
    ModelPlan plan;
    FittedModel model;
    Standardizer scaler;
    SplitOutcome outcome;
};

// Protocol for one split: standardize on the train rows, carve a validation
// slice, train with early stopping and the observation-noise grid search,
// refit on the full train set for the selected epoch count, then score the
// test rows. Divergent training (non-finite values) is recorded as a failed
// split rather than thrown.
inline SingleRun run_split(const ExperimentConfig& cfg, const Dataset& d,
                           const SplitIndices& split, std::size_t split_idx) {
    SingleRun run;
    run.outcome.split = split_idx;
    run.outcome.hist = Histogram(cfg.histogram_bins);
    run.plan = make_plan(cfg, d.dim());
    run.scaler = Standardizer::fit(d, split.train);

    // stream layout: exproot.split(0) seeds make_splits, .split(1).split(k)
    // owns everything below for split k
    RngStream sroot = RngStream(cfg.seed).split(1).split(split_idx);

    std::vector<std::size_t> shuffled = split.train;
    RngStream carve = sroot.split(0);
    for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
        std::size_t j = std::min<std::size_t>(
            static_cast<std::size_t>(carve.uniform() * static_cast<double>(i + 1)), i);
        std::swap(shuffled[i], shuffled[j]);
    }
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(shuffled.size()) * cfg.val_fraction));
    if (n_val >= shuffled.size())
        throw DomainError("run_split: validation slice leaves no training rows");
    std::vector<std::size_t> val(shuffled.begin(), shuffled.begin() + n_val);
    std::vector<std::size_t> fit(shuffled.begin() + n_val, shuffled.end());
    std::sort(val.begin(), val.end());
    std::sort(fit.begin(), fit.end());

    const TrainSettings settings = TrainSettings::from(cfg);
    try {
        Tensor xf = run.scaler.x_rows(d, fit), yf = run.scaler.y_rows(d, fit);
        Tensor xv = run.scaler.x_rows(d, val), yv = run.scaler.y_rows(d, val);
        PhaseOutcome a = train_phase(run.plan, xf, yf, &xv, &yv, settings,
                                     sroot.split(1).seed());
        run.outcome.epochs = a.epochs_run;
        if (a.best_epoch == 0)
            throw NumericError("run_split: no finite validation score");

        TrainSettings refit = settings;
        refit.epochs = a.best_epoch;
        Tensor xt = run.scaler.x_rows(d, split.train);
        Tensor yt = run.scaler.y_rows(d, split.train);
        PhaseOutcome b = train_phase(run.plan, xt, yt, nullptr, nullptr, refit,
                                     sroot.split(2).seed(), &run.outcome.hist);

        Tensor x_test = run.scaler.x_rows(d, split.test);
        std::vector<double> y_test;
        y_test.reserve(split.test.size());
        for (std::size_t idx : split.test) y_test.push_back(d.y[idx]);
        TestMetrics m = evaluate_test(run.plan, b.model, x_test, y_test, run.scaler,
                                      cfg.test_samples, a.best.sd, sroot.split(3).seed());

        run.model = std::move(b.model);
        run.outcome.ok = true;
        run.outcome.rmse = m.rmse;
        run.outcome.loglik = m.loglik;
        run.outcome.best_sd = a.best.sd;
        run.outcome.val_loglik = a.best.loglik;
        run.outcome.best_epoch = a.best_epoch;
    } catch (const NumericError& e) {
        run.outcome.ok = false;
        run.outcome.error = e.what();
    } catch (const DomainError& e) {
        run.outcome.ok = false;
        run.outcome.error = e.what();
    }
    return run;
}

struct ResultTable {
    std::vector<SplitOutcome> splits;  // ordered by split index
    Histogram hist;                    // merged over splits
    double rmse_mean = std::numeric_limits<double>::quiet_NaN();
    double rmse_se = std::numeric_limits<double>::quiet_NaN();
    double loglik_mean = std::numeric_limits<double>::quiet_NaN();
    double loglik_se = std::numeric_limits<double>::quiet_NaN();

    std::size_t failed() const {
        std::size_t f = 0;
        for (const auto& s : splits) f += s.ok ? 0 : 1;
        return f;
    }

    void aggregate() {
        std::vector<double> rmse, ll;
        for (const auto& s : splits)
            if (s.ok) {
                rmse.push_back(s.rmse);
                ll.push_back(s.loglik);
            }
        if (rmse.empty()) return;
        rmse_mean = mean_of(rmse);
        rmse_se = sem_of(rmse);
        loglik_mean = mean_of(ll);
        loglik_se = sem_of(ll);
    }
};

// The full protocol: every split trained independently (parallel across
// hardware threads; each split is single-threaded and seeded from its own
// index, so the table is identical for any worker count).
inline ResultTable run_experiment(const ExperimentConfig& cfg, const Dataset& d,
                                  std::size_t workers = 0) {
    if (cfg.splits == 0) throw ConfigError("run_experiment: protocol.splits must be >= 1");
    const std::vector<SplitIndices> splits = make_splits(
        d.size(), cfg.splits, cfg.test_fraction, RngStream(cfg.seed).split(0).seed());

    ResultTable table;
    table.splits.resize(splits.size());
    if (workers == 0)
        workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<std::size_t>(workers, splits.size());

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto work = [&] {
        for (;;) {
            std::size_t k = next.fetch_add(1);
            if (k >= splits.size()) return;
            try {
                table.splits[k] = run_split(cfg, d, splits[k], k).outcome;
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    table.hist = Histogram(cfg.histogram_bins);
    for (const auto& s : table.splits)
        if (s.hist.counts.size() == table.hist.counts.size())
            for (std::size_t b = 0; b < s.hist.counts.size(); ++b)
                table.hist.counts[b] += s.hist.counts[b];
    table.aggregate();
    return table;
}

namespace detail {

inline std::string g17(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') out += '"';
    }
    out += '"';
    return out;
}

inline std::ofstream open_out(const std::string& path) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

}  // namespace detail

// Per-split rows plus one trailing aggregate row. Doubles are printed with 17
// significant digits so a reparse reproduces them exactly.
inline void write_report_csv(const ResultTable& t, const std::string& path) {
    std::ofstream out = detail::open_out(path);
    out << "split,rmse,loglik,rmse_se,loglik_se,best_epoch,best_sd,epochs,status\n";
    for (const auto& s : t.splits) {
        out << s.split << ',';
        if (s.ok)
            out << detail::g17(s.rmse) << ',' << detail::g17(s.loglik) << ",,,"
                << s.best_epoch << ',' << detail::g17(s.best_sd) << ',' << s.epochs << ",ok\n";
        else
            out << ",,,,,,," << detail::csv_escape("failed: " + s.error) << "\n";
    }
    out << "aggregate," << detail::g17(t.rmse_mean) << ',' << detail::g17(t.loglik_mean) << ','
        << detail::g17(t.rmse_se) << ',' << detail::g17(t.loglik_se) << ",,,,"
        << t.splits.size() - t.failed() << "/" << t.splits.size() << " ok\n";
    if (!out) throw IoError("failed while writing " + path);
}

inline void write_report_json(const ExperimentConfig& cfg, const ResultTable& t,
                              const std::string& path) {
    nlohmann::json j;
    j["config"] = cfg.echo();
    auto& rows = j["splits"] = nlohmann::json::array();
    for (const auto& s : t.splits) {
        nlohmann::json row;
        row["split"] = s.split;
        row["status"] = s.ok ? "ok" : "failed";
        if (s.ok) {
            row["rmse"] = s.rmse;
            row["loglik"] = s.loglik;
            row["best_epoch"] = s.best_epoch;
            row["best_sd"] = s.best_sd;
            row["val_loglik"] = s.val_loglik;
            row["epochs"] = s.epochs;
        } else {
            row["error"] = s.error;
        }
        rows.push_back(std::move(row));
    }
    j["summary"] = {{"splits", t.splits.size()},
                    {"failed", t.failed()},
                    {"rmse_mean", t.rmse_mean},
                    {"rmse_se", t.rmse_se},
                    {"loglik_mean", t.loglik_mean},
                    {"loglik_se", t.loglik_se}};
    j["histogram"] = {{"lo", t.hist.lo}, {"hi", t.hist.hi}, {"counts", t.hist.counts}};
    std::ofstream out = detail::open_out(path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed while writing " + path);
}

// Importance-weight histogram rows: bin_lo,bin_hi,count.
inline void write_histogram_csv(const Histogram& h, const std::string& path) {
    std::ofstream out = detail::open_out(path);
    out << "bin_lo,bin_hi,count\n";
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        out << detail::g17(h.lo + width * static_cast<double>(b)) << ','
            << detail::g17(h.lo + width * static_cast<double>(b + 1)) << ',' << h.counts[b]
            << "\n";
    if (!out) throw IoError("failed while writing " + path);
}

// Hidden-to-hidden posterior moment maps as matrix,row,col,value rows; the
// matrix column holds the weight-matrix index (1-based past the input layer).
inline void write_heatmap_csv(const std::vector<Tensor>& maps, const std::string& path) {
    std::ofstream out = detail::open_out(path);
    out << "matrix,row,col,value\n";
    for (std::size_t m = 0; m < maps.size(); ++m)
        for (std::size_t r = 0; r < maps[m].rows(); ++r)
            for (std::size_t c = 0; c < maps[m].cols(); ++c)
                out << m + 1 << ',' << r << ',' << c << ',' << detail::g17(maps[m].at(r, c))
                    << "\n";
    if (!out) throw IoError("failed while writing " + path);
}

inline std::string report_basename(const ExperimentConfig& cfg) {
    return cfg.out_dir + "/" + cfg.data_name + "_" + cfg.model;
}

}  // namespace shrinkage
