#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "shrinkage/error.hpp"

namespace shrinkage {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / M_SQRT2); }

// Kolmogorov distribution survival function Q(x) = 2 sum_k (-1)^{k-1} e^{-2k^2x^2}.
inline double kolmogorov_sf(double x) {
    if (x <= 0.0) return 1.0;
    if (x < 0.18) return 1.0;  // series converges slowly; Q is 1 to double precision
    double s = 0.0;
    for (int k = 1; k <= 128; ++k) {
        double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1) ? term : -term;
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n1 = 0;
    std::size_t n2 = 0;  // zero for one-sample tests
};

namespace detail {
inline double ks_p_value(double d, double effective_n) {
    double sq = std::sqrt(effective_n);
    return kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
}
}  // namespace detail

// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.size() < 8 || b.size() < 8)
        throw DomainError("ks_two_sample: need at least 8 samples per side");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double n1 = static_cast<double>(a.size());
    const double n2 = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
    }
    KsResult r;
    r.statistic = d;
    r.n1 = a.size();
    r.n2 = b.size();
    r.p_value = detail::ks_p_value(d, n1 * n2 / (n1 + n2));
    return r;
}

// One-sample KS test against a reference CDF.
inline KsResult ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf) {
    if (a.size() < 8) throw DomainError("ks_one_sample: need at least 8 samples");
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double f = cdf(a[i]);
        d = std::max(d, std::max(f - static_cast<double>(i) / n,
                                 static_cast<double>(i + 1) / n - f));
    }
    KsResult r;
    r.statistic = d;
    r.n1 = a.size();
    r.p_value = detail::ks_p_value(d, n);
    return r;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Unbiased sample variance.
inline double variance_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double stddev_of(const std::vector<double>& v) { return std::sqrt(variance_of(v)); }

// Standard error of the mean.
inline double sem_of(const std::vector<double>& v) {
    return stddev_of(v) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace shrinkage
