#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "shrinkage/error.hpp"
#include "shrinkage/rng.hpp"
#include "shrinkage/tensor.hpp"

namespace shrinkage {

struct Dataset {
    std::string name;
    std::vector<std::string> feature_names;
    Tensor x;               // [n x d]
    std::vector<double> y;  // [n]

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.cols(); }
};

// Loads a headered CSV; every column except `target` becomes a feature, in
// file order. Throws IoError with the offending line/cell on malformed input.
inline Dataset load_csv(const std::string& path, const std::string& target = "y") {
    std::ifstream in(path);
    if (!in) throw IoError("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("load_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> columns;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) columns.push_back(cell);
    }
    auto target_it = std::find(columns.begin(), columns.end(), target);
    if (target_it == columns.end())
        throw IoError("load_csv: target column '" + target + "' not found in " + path);
    const std::size_t target_idx = target_it - columns.begin();

    std::vector<double> xs, ys;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col >= columns.size())
                throw IoError("load_csv: extra cell at " + path + ":" + std::to_string(lineno));
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw IoError("load_csv: non-numeric cell '" + cell + "' at " + path + ":" +
                              std::to_string(lineno));
            (col == target_idx ? ys : xs).push_back(v);
            ++col;
        }
        if (col != columns.size())
            throw IoError("load_csv: expected " + std::to_string(columns.size()) +
                          " cells, got " + std::to_string(col) + " at " + path + ":" +
                          std::to_string(lineno));
    }
    if (ys.empty()) throw IoError("load_csv: no data rows in " + path);

    Dataset d;
    d.name = path;
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (i != target_idx) d.feature_names.push_back(columns[i]);
    d.x = Tensor({ys.size(), columns.size() - 1}, std::move(xs));
    d.y = std::move(ys);
    return d;
}

struct SplitIndices {
    std::vector<std::size_t> train, test;
};

// `count` deterministic train/test splits: split k shuffles 0..n-1 with the
// k-th child stream of `seed` (Fisher-Yates) and takes the first
// max(1, floor(n * test_fraction)) positions as the test set.
inline std::vector<SplitIndices> make_splits(std::size_t n, std::size_t count,
                                             double test_fraction, std::uint64_t seed) {
    if (n < 10) throw DomainError("make_splits: need at least 10 rows");
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
        throw DomainError("make_splits: test_fraction must lie in (0,1)");
    RngStream root(seed);
    std::vector<SplitIndices> out;
    out.reserve(count);
    const std::size_t n_test =
        std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(n) * test_fraction));
    for (std::size_t k = 0; k < count; ++k) {
        RngStream r = root.split(k);
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        for (std::size_t i = n - 1; i > 0; --i) {
            std::size_t j = std::min<std::size_t>(
                static_cast<std::size_t>(r.uniform() * static_cast<double>(i + 1)), i);
            std::swap(perm[i], perm[j]);
        }
        SplitIndices s;
        s.test.assign(perm.begin(), perm.begin() + n_test);
        s.train.assign(perm.begin() + n_test, perm.end());
        std::sort(s.test.begin(), s.test.end());
        std::sort(s.train.begin(), s.train.end());
        out.push_back(std::move(s));
    }
    return out;
}

// Column-wise standardization fitted on training rows only (population
// standard deviations; constant columns keep scale 1).
struct Standardizer {
    std::vector<double> x_mean, x_sd;
    double y_mean = 0.0, y_sd = 1.0;

    static Standardizer fit(const Dataset& d, const std::vector<std::size_t>& rows) {
        if (rows.empty()) throw DomainError("Standardizer: no rows to fit");
        Standardizer s;
        const std::size_t dim = d.dim();
        s.x_mean.assign(dim, 0.0);
        s.x_sd.assign(dim, 0.0);
        const double n = static_cast<double>(rows.size());
        for (std::size_t r : rows) {
            for (std::size_t c = 0; c < dim; ++c) s.x_mean[c] += d.x.at(r, c);
            s.y_mean += d.y[r];
        }
        for (std::size_t c = 0; c < dim; ++c) s.x_mean[c] /= n;
        s.y_mean /= n;
        double ysq = 0.0;
        for (std::size_t r : rows) {
            for (std::size_t c = 0; c < dim; ++c) {
                double dlt = d.x.at(r, c) - s.x_mean[c];
                s.x_sd[c] += dlt * dlt;
            }
            ysq += (d.y[r] - s.y_mean) * (d.y[r] - s.y_mean);
        }
        for (std::size_t c = 0; c < dim; ++c) {
            s.x_sd[c] = std::sqrt(s.x_sd[c] / n);
            if (s.x_sd[c] < 1e-12) s.x_sd[c] = 1.0;
        }
        s.y_sd = std::sqrt(ysq / n);
        if (s.y_sd < 1e-12) s.y_sd = 1.0;
        return s;
    }

    Tensor x_rows(const Dataset& d, const std::vector<std::size_t>& rows) const {
        Tensor out({rows.size(), d.dim()});
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t c = 0; c < d.dim(); ++c)
                out.at(i, c) = (d.x.at(rows[i], c) - x_mean[c]) / x_sd[c];
        return out;
    }

    Tensor y_rows(const Dataset& d, const std::vector<std::size_t>& rows) const {
        Tensor out({rows.size(), 1});
        for (std::size_t i = 0; i < rows.size(); ++i)
            out.at(i, 0) = (d.y[rows[i]] - y_mean) / y_sd;
        return out;
    }

    double y_to_original(double y_std) const { return y_std * y_sd + y_mean; }
};

}  // namespace shrinkage
