#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shrinkage/marginal.hpp"
#include "shrinkage/noise.hpp"
#include "shrinkage/stats.hpp"

namespace shrinkage {

// One check from the sampler/marginal verification suite.
struct GsmCheck {
    std::string name;
    std::string detail;
    double statistic = 0.0;  // KS statistic, |z|, max abs log-density gap, or ratio
    double p_value = std::numeric_limits<double>::quiet_NaN();  // NaN if not a test
    bool pass = false;
};

// Verifies, for every noise family, that the expanded (xi*z) and hierarchical
// (w | xi ~ N(0, sigma0^2 xi^2)) parametrizations sample the same marginal,
// and that the marginals match their closed forms where those exist.
// All randomness derives from `seed`; KS tests run at significance `level`.
inline std::vector<GsmCheck> run_gsm_equivalence_suite(std::uint64_t seed,
                                                       std::size_t n = 100000,
                                                       double level = 0.01) {
    const double sigma0 = 1.3;
    std::vector<GsmCheck> out;
    RngStream root(seed);

    struct Case {
        const char* name;
        NoiseFamily family;
    };
    const std::vector<Case> continuous = {
        {"gaussian(s=0.8)", NoiseFamily::gaussian(0.8)},
        {"rayleigh(s=0.7)", NoiseFamily::rayleigh(0.7)},
        {"inverse_nakagami(a=1.5,b=0.8)", NoiseFamily::inverse_nakagami(1.5, 0.8)},
        {"half_cauchy(b=0.6)", NoiseFamily::half_cauchy(0.6)},
    };

    // --- expanded vs hierarchical, all continuous families ------------------
    std::uint64_t stream_idx = 0;
    for (const auto& c : continuous) {
        RngStream r1 = root.split(stream_idx++);
        RngStream r2 = root.split(stream_idx++);
        std::vector<double> ex(n), hi(n);
        for (std::size_t i = 0; i < n; ++i) ex[i] = sample_gsm_expanded(c.family, sigma0, r1);
        for (std::size_t i = 0; i < n; ++i) hi[i] = sample_gsm_hierarchical(c.family, sigma0, r2);
        KsResult ks = ks_two_sample(ex, hi);
        GsmCheck chk;
        chk.name = std::string("expanded-vs-hierarchical ") + c.name;
        chk.detail = "two-sample KS, n=" + std::to_string(n);
        chk.statistic = ks.statistic;
        chk.p_value = ks.p_value;
        chk.pass = ks.p_value >= level;
        out.push_back(chk);
    }

    // --- expanded sampler vs direct sampler of the closed-form marginal -----
    {
        // Rayleigh(s) noise at sigma0 -> Laplace(scale s*sigma0)
        const NoiseFamily fam = NoiseFamily::rayleigh(0.7);
        const double b = 0.7 * sigma0;
        RngStream r1 = root.split(stream_idx++);
        RngStream r2 = root.split(stream_idx++);
        std::vector<double> ex(n), direct(n);
        for (std::size_t i = 0; i < n; ++i) ex[i] = sample_gsm_expanded(fam, sigma0, r1);
        for (std::size_t i = 0; i < n; ++i) {
            double u = r2.uniform() - 0.5;
            direct[i] = -b * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
        }
        KsResult ks = ks_two_sample(ex, direct);
        GsmCheck chk;
        chk.name = "rayleigh-gsm vs direct laplace";
        chk.detail = "two-sample KS against inverse-CDF Laplace(scale=" + std::to_string(b) + ")";
        chk.statistic = ks.statistic;
        chk.p_value = ks.p_value;
        chk.pass = ks.p_value >= level;
        out.push_back(chk);
    }
    {
        // InverseNakagami(a,b) noise at sigma0 -> Student-t(2a, sigma0*sqrt(b/a))
        const double a = 1.5, b = 0.8;
        const NoiseFamily fam = NoiseFamily::inverse_nakagami(a, b);
        const double dof = 2.0 * a;
        const double scale = sigma0 * std::sqrt(b / a);
        RngStream r1 = root.split(stream_idx++);
        RngStream r2 = root.split(stream_idx++);
        std::vector<double> ex(n), direct(n);
        for (std::size_t i = 0; i < n; ++i) ex[i] = sample_gsm_expanded(fam, sigma0, r1);
        for (std::size_t i = 0; i < n; ++i) {
            double z = r2.normal();
            double chi2 = r2.gamma(0.5 * dof, 2.0);
            direct[i] = scale * z / std::sqrt(chi2 / dof);
        }
        KsResult ks = ks_two_sample(ex, direct);
        GsmCheck chk;
        chk.name = "inverse-nakagami-gsm vs direct student-t";
        chk.detail = "two-sample KS against t(dof=3, scale=" + std::to_string(scale) + ")";
        chk.statistic = ks.statistic;
        chk.p_value = ks.p_value;
        chk.pass = ks.p_value >= level;
        out.push_back(chk);
    }

    // --- Bernoulli: exact spike mass + standard-normal slab ------------------
    {
        const double keep = 0.35;
        const NoiseFamily fam = NoiseFamily::bernoulli(keep);
        RngStream r1 = root.split(stream_idx++);
        std::vector<double> slab;
        std::size_t zeros = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double w = sample_gsm_expanded(fam, sigma0, r1);
            if (w == 0.0)
                ++zeros;
            else
                slab.push_back(w / sigma0);
        }
        const double expect = static_cast<double>(n) * (1.0 - keep);
        const double sd = std::sqrt(static_cast<double>(n) * keep * (1.0 - keep));
        double z = (static_cast<double>(zeros) - expect) / sd;
        GsmCheck spike;
        spike.name = "bernoulli spike mass";
        spike.detail = "exact zeros " + std::to_string(zeros) + " vs expected " +
                       std::to_string(static_cast<long long>(expect)) + ", |z| <= 6";
        spike.statistic = std::abs(z);
        spike.pass = std::abs(z) <= 6.0;
        out.push_back(spike);

        KsResult ks = ks_one_sample(slab, [](double x) { return normal_cdf(x); });
        GsmCheck norm;
        norm.name = "bernoulli slab normality";
        norm.detail = "one-sample KS of kept draws / sigma0 against N(0,1)";
        norm.statistic = ks.statistic;
        norm.p_value = ks.p_value;
        norm.pass = ks.p_value >= level;
        out.push_back(norm);
    }

    // --- closed forms vs adaptive quadrature ---------------------------------
    {
        struct Closed {
            const char* name;
            NoiseFamily family;
        };
        const std::vector<Closed> closed = {
            {"laplace (rayleigh noise)", NoiseFamily::rayleigh(0.7)},
            {"student-t (inverse-nakagami noise)", NoiseFamily::inverse_nakagami(1.5, 0.8)},
        };
        const double grid[] = {0.0, 0.1, -0.1, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0, 6.0};
        for (const auto& c : closed) {
            MarginalPrior m = induced_marginal(c.family, sigma0);
            double worst = 0.0;
            for (double w : grid) {
                double lc = marginal_log_density(m, w);
                double lq = marginal_log_density_quadrature(c.family, sigma0, w);
                worst = std::max(worst, std::abs(lc - lq));
            }
            GsmCheck chk;
            chk.name = std::string("closed form vs quadrature: ") + c.name;
            chk.detail = "max |log f_closed - log f_quad| over 12-point grid, tol 1e-8";
            chk.statistic = worst;
            chk.pass = worst <= 1e-8;
            out.push_back(chk);
        }
    }

    // --- horseshoe vs generalized hyperbolic: origin and tails ---------------
    {
        // Comparison pinned at sigma0=1: HalfCauchy(b=0.25) against
        // Gaussian(s=1). Both marginals have a logarithmic pole at the
        // origin with coefficient 1/(b sqrt(2 pi^3))..2/(b sqrt(2 pi^3))
        // (horseshoe) and 1/pi (gaussian product), so b=0.25 makes the
        // horseshoe pole strictly heavier; in the tails the horseshoe decays
        // polynomially while the Gaussian product decays exponentially,
        // measured as the fraction of |w| > 3 over n draws each.
        const NoiseFamily hs = NoiseFamily::half_cauchy(0.25);
        const NoiseFamily gh = NoiseFamily::gaussian(1.0);
        double lhs = marginal_log_density_quadrature(hs, 1.0, 0.01);
        double lgh = marginal_log_density_quadrature(gh, 1.0, 0.01);
        GsmCheck origin;
        origin.name = "horseshoe origin mass exceeds gaussian-noise marginal";
        origin.detail = "log density at w=0.01: horseshoe " + std::to_string(lhs) +
                        " vs gen-hyperbolic " + std::to_string(lgh);
        origin.statistic = lhs - lgh;
        origin.pass = lhs > lgh;
        out.push_back(origin);

        RngStream r1 = root.split(stream_idx++);
        RngStream r2 = root.split(stream_idx++);
        std::size_t tail_hs = 0, tail_gh = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (std::abs(sample_gsm_expanded(hs, 1.0, r1)) > 3.0) ++tail_hs;
        for (std::size_t i = 0; i < n; ++i)
            if (std::abs(sample_gsm_expanded(gh, 1.0, r2)) > 3.0) ++tail_gh;
        GsmCheck tails;
        tails.name = "horseshoe tail mass exceeds gaussian-noise marginal";
        tails.detail = "P(|w|>3) ~ " + std::to_string(tail_hs) + "/" + std::to_string(n) +
                       " vs " + std::to_string(tail_gh) + "/" + std::to_string(n);
        tails.statistic = static_cast<double>(tail_hs) /
                          std::max<double>(1.0, static_cast<double>(tail_gh));
        // true ratio is near 2.2 at these parameters; 1.5 keeps the check far
        // from the sampling noise of either count
        tails.pass = 2 * tail_hs > 3 * tail_gh;
        out.push_back(tails);
    }

    return out;
}

}  // namespace shrinkage
