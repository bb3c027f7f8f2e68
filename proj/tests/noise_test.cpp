// Tests for the multiplicative-noise families, the induced marginal priors,
// and the scale-mixture equivalence checks. Closed-form densities are pinned
// to hand-computed constants; the quadrature fallback is cross-checked
// against both the closed forms and direct Monte Carlo density estimates.
#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "shrinkage/marginal.hpp"
#include "shrinkage/noise.hpp"
#include "shrinkage/rng.hpp"
#include "shrinkage/stats.hpp"
#include "shrinkage/verify.hpp"
#include "support/oracles.hpp"

using shrinkage::DivergentExpectation;
using shrinkage::DomainError;
using shrinkage::MarginalPrior;
using shrinkage::NoiseFamily;
using shrinkage::RngStream;

namespace {

std::vector<double> draw_noise(const NoiseFamily& f, std::size_t n, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> out(n);
  for (double& v : out) v = f.sample(rng);
  return out;
}

std::vector<double> draw_expanded(const NoiseFamily& f, double sigma0, std::size_t n,
                                  std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> out(n);
  for (double& v : out) v = shrinkage::sample_gsm_expanded(f, sigma0, rng);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Noise family sampling
// ---------------------------------------------------------------------------

TEST(Noise, BernoulliKeepOneIsAlwaysOne) {
  NoiseFamily f = NoiseFamily::bernoulli(1.0);
  for (double v : draw_noise(f, 1000, 3)) EXPECT_EQ(v, 1.0);
}

TEST(Noise, BernoulliKeepZeroExpandedIsAlwaysZero) {
  NoiseFamily f = NoiseFamily::bernoulli(0.0);
  for (double v : draw_expanded(f, 1.0, 1000, 4)) EXPECT_EQ(v, 0.0);
}

TEST(Noise, BernoulliHalfHasMeanHalf) {
  auto xs = draw_noise(NoiseFamily::bernoulli(0.5), 100000, 5);
  EXPECT_NEAR(shrinkage::mean_of(xs), 0.5, 0.01);
  for (double v : xs) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Noise, RayleighSecondMomentMatches) {
  // E[xi^2] = 2 s^2 for Rayleigh(s).
  auto xs = draw_noise(NoiseFamily::rayleigh(1.0), 100000, 6);
  double m2 = 0.0;
  for (double v : xs) m2 += v * v;
  m2 /= static_cast<double>(xs.size());
  EXPECT_NEAR(m2, 2.0, 0.05);
}

TEST(Noise, BernoulliExpandedSpikeAndSlabShape) {
  // w = sigma0 * xi * z: zeros appear with probability 1-keep, and the
  // nonzero part must be exactly N(0, sigma0^2).
  const double keep = 0.7, sigma0 = 2.0;
  const std::size_t n = 100000;
  auto ws = draw_expanded(NoiseFamily::bernoulli(keep), sigma0, n, 7);

  std::vector<double> nonzero;
  for (double w : ws)
    if (w != 0.0) nonzero.push_back(w / sigma0);
  const double zero_frac = 1.0 - static_cast<double>(nonzero.size()) / static_cast<double>(n);
  const double se = std::sqrt(keep * (1.0 - keep) / static_cast<double>(n));
  EXPECT_NEAR(zero_frac, 1.0 - keep, 6.0 * se);

  auto ks = shrinkage::ks_one_sample(nonzero, [](double x) { return shrinkage::normal_cdf(x); });
  EXPECT_GT(ks.p_value, 0.01);
}

TEST(Noise, SamplingIsDeterministicPerSeed) {
  const NoiseFamily families[] = {
      NoiseFamily::bernoulli(0.5),     NoiseFamily::gaussian(1.3),
      NoiseFamily::rayleigh(0.8),      NoiseFamily::inverse_nakagami(2.0, 4.0),
      NoiseFamily::half_cauchy(1.0),
  };
  for (const auto& f : families) {
    auto a = draw_noise(f, 64, 99);
    auto b = draw_noise(f, 64, 99);
    auto c = draw_noise(f, 64, 100);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    EXPECT_FALSE(std::equal(a.begin(), a.end(), c.begin()));
  }
}

TEST(Noise, ExpandedAndHierarchicalAgreeInDistribution) {
  // Kolmogorov-Smirnov between the two constructions of the same marginal.
  const NoiseFamily families[] = {
      NoiseFamily::gaussian(1.0),
      NoiseFamily::rayleigh(1.0),
      NoiseFamily::inverse_nakagami(2.0, 4.0),
      NoiseFamily::half_cauchy(1.0),
  };
  for (const auto& f : families) {
    RngStream r1(11), r2(12);
    std::vector<double> a(20000), b(20000);
    for (double& v : a) v = shrinkage::sample_gsm_expanded(f, 1.5, r1);
    for (double& v : b) v = shrinkage::sample_gsm_hierarchical(f, 1.5, r2);
    auto ks = shrinkage::ks_two_sample(a, b);
    EXPECT_GT(ks.p_value, 0.005) << f.describe();
  }
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

TEST(Noise, ExpectedSquareValues) {
  EXPECT_DOUBLE_EQ(NoiseFamily::bernoulli(0.3).expected_sq(), 0.3);
  EXPECT_DOUBLE_EQ(NoiseFamily::gaussian(2.0).expected_sq(), 4.0);
  EXPECT_DOUBLE_EQ(NoiseFamily::rayleigh(3.0).expected_sq(), 18.0);
  // xi^2 ~ InverseGamma(a, b) => E[xi^2] = b/(a-1) for a > 1.
  EXPECT_DOUBLE_EQ(NoiseFamily::inverse_nakagami(2.0, 4.0).expected_sq(), 4.0);
  EXPECT_THROW(NoiseFamily::inverse_nakagami(1.0, 4.0).expected_sq(), DivergentExpectation);
  EXPECT_THROW(NoiseFamily::half_cauchy(1.0).expected_sq(), DivergentExpectation);
}

TEST(Noise, ExpectedInverseSquareValues) {
  // xi^-2 ~ Gamma(a, rate b) => E[xi^-2] = a/b.
  EXPECT_DOUBLE_EQ(NoiseFamily::inverse_nakagami(2.0, 4.0).expected_inv_sq(), 0.5);
  EXPECT_DOUBLE_EQ(NoiseFamily::inverse_nakagami(3.0, 1.5).expected_inv_sq(), 2.0);
  // A unit point mass has E[xi^-2] = 1; any spike at zero diverges.
  EXPECT_DOUBLE_EQ(NoiseFamily::bernoulli(1.0).expected_inv_sq(), 1.0);
  EXPECT_THROW(NoiseFamily::bernoulli(0.9).expected_inv_sq(), DivergentExpectation);
  EXPECT_THROW(NoiseFamily::gaussian(1.0).expected_inv_sq(), DivergentExpectation);
  EXPECT_THROW(NoiseFamily::rayleigh(1.0).expected_inv_sq(), DivergentExpectation);
  EXPECT_THROW(NoiseFamily::half_cauchy(1.0).expected_inv_sq(), DivergentExpectation);
}

TEST(Noise, ExpectedInverseSquareMatchesMonteCarlo) {
  NoiseFamily f = NoiseFamily::inverse_nakagami(2.0, 4.0);
  RngStream rng(21);
  const std::size_t n = 1000000;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = f.sample(rng);
    acc += 1.0 / (xi * xi);
  }
  const double mc = acc / static_cast<double>(n);
  // xi^-2 ~ Gamma(2, rate 4): mean 1/2, variance 2/16.
  const double se = std::sqrt(0.125 / static_cast<double>(n));
  EXPECT_NEAR(mc, 0.5, 6.0 * se);
}

TEST(Noise, ParameterValidation) {
  EXPECT_THROW(NoiseFamily::bernoulli(-0.1), DomainError);
  EXPECT_THROW(NoiseFamily::bernoulli(1.1), DomainError);
  EXPECT_THROW(NoiseFamily::gaussian(0.0), DomainError);
  EXPECT_THROW(NoiseFamily::rayleigh(-1.0), DomainError);
  EXPECT_THROW(NoiseFamily::inverse_nakagami(0.0, 1.0), DomainError);
  EXPECT_THROW(NoiseFamily::inverse_nakagami(1.0, 0.0), DomainError);
  EXPECT_THROW(NoiseFamily::half_cauchy(0.0), DomainError);
}

TEST(Noise, ShapeSpreadParameterization) {
  // (m, omega): a = m and b = m/omega, so that E[xi^-2] = a/b = omega.
  NoiseFamily f = NoiseFamily::inverse_nakagami_m_omega(2.0, 0.5);
  EXPECT_EQ(f.kind(), NoiseFamily::Kind::InverseNakagami);
  EXPECT_DOUBLE_EQ(f.shape_a(), 2.0);
  EXPECT_DOUBLE_EQ(f.scale_b(), 4.0);
  EXPECT_DOUBLE_EQ(f.expected_inv_sq(), 0.5);
  // Induced Student-t dof must be 2m.
  MarginalPrior m = shrinkage::induced_marginal(f, 1.0);
  EXPECT_DOUBLE_EQ(m.dof, 4.0);
}

TEST(Noise, LogDensityAbsBasics) {
  EXPECT_EQ(NoiseFamily::gaussian(1.0).log_density_abs(-1.0),
            -std::numeric_limits<double>::infinity());
  EXPECT_THROW(NoiseFamily::bernoulli(0.5).log_density_abs(1.0), DomainError);
  // Half-normal with unit scale at xi = 1: log(2) - 0.5*log(2*pi) - 1/2.
  EXPECT_NEAR(NoiseFamily::gaussian(1.0).log_density_abs(1.0), -0.72579135264472738, 1e-15);
  // Rayleigh(1) at xi = 1: log(xi) - xi^2/2 = -1/2.
  EXPECT_NEAR(NoiseFamily::rayleigh(1.0).log_density_abs(1.0), -0.5, 1e-15);
}

// ---------------------------------------------------------------------------
// Induced marginal priors
// ---------------------------------------------------------------------------

TEST(Marginal, InducedFamilyMapping) {
  using Kind = MarginalPrior::Kind;
  MarginalPrior sns = shrinkage::induced_marginal(NoiseFamily::bernoulli(0.7), 2.0);
  EXPECT_EQ(sns.kind, Kind::SpikeAndSlab);
  EXPECT_DOUBLE_EQ(sns.keep_prob, 0.7);
  EXPECT_DOUBLE_EQ(sns.sigma0, 2.0);

  MarginalPrior gh = shrinkage::induced_marginal(NoiseFamily::gaussian(1.5), 2.0);
  EXPECT_EQ(gh.kind, Kind::GeneralizedHyperbolic);

  MarginalPrior lap = shrinkage::induced_marginal(NoiseFamily::rayleigh(1.5), 2.0);
  EXPECT_EQ(lap.kind, Kind::Laplace);
  EXPECT_DOUBLE_EQ(lap.scale, 3.0);  // s * sigma0

  MarginalPrior st = shrinkage::induced_marginal(NoiseFamily::inverse_nakagami(2.0, 4.0), 3.0);
  EXPECT_EQ(st.kind, Kind::StudentT);
  EXPECT_DOUBLE_EQ(st.dof, 4.0);                      // 2a
  EXPECT_DOUBLE_EQ(st.scale, 3.0 * std::sqrt(2.0));   // sigma0 * sqrt(b/a)

  MarginalPrior hs = shrinkage::induced_marginal(NoiseFamily::half_cauchy(1.0), 2.0);
  EXPECT_EQ(hs.kind, Kind::Horseshoe);

  EXPECT_THROW(shrinkage::induced_marginal(NoiseFamily::gaussian(1.0), 0.0), DomainError);
}

TEST(Marginal, ClosedFormDensityValues) {
  // Laplace(scale 1) at 0: log(1/2).
  MarginalPrior lap1 = shrinkage::induced_marginal(NoiseFamily::rayleigh(1.0), 1.0);
  EXPECT_DOUBLE_EQ(shrinkage::marginal_log_density(lap1, 0.0), -0.69314718055994529);
  // Laplace(scale 2) at 2: log(1/4) - 1.
  MarginalPrior lap2 = shrinkage::induced_marginal(NoiseFamily::rayleigh(2.0), 1.0);
  EXPECT_NEAR(shrinkage::marginal_log_density(lap2, 2.0), -2.3862943611198908, 1e-14);
  // InverseNakagami(1/2, 1/2) induces a standard Cauchy (t with dof 1).
  MarginalPrior cauchy = shrinkage::induced_marginal(NoiseFamily::inverse_nakagami(0.5, 0.5), 1.0);
  EXPECT_NEAR(shrinkage::marginal_log_density(cauchy, 0.0), -1.1447298858494002, 1e-14);
  EXPECT_NEAR(shrinkage::marginal_log_density(cauchy, 1.0), -1.8378770664093453, 1e-14);
  // Student-t with dof 4, scale sqrt(2) at w = 1.5.
  MarginalPrior st = shrinkage::induced_marginal(NoiseFamily::inverse_nakagami(2.0, 4.0), 1.0);
  EXPECT_NEAR(shrinkage::marginal_log_density(st, 1.5), -1.9469932530531515, 1e-14);
  // Spike-and-slab off the spike: log(keep) + log N(w; 0, sigma0^2).
  MarginalPrior sns = shrinkage::induced_marginal(NoiseFamily::bernoulli(0.7), 1.0);
  EXPECT_NEAR(shrinkage::marginal_log_density(sns, 0.3), -1.320613477143405, 1e-14);
}

TEST(Marginal, ClosedFormDensityErrors) {
  MarginalPrior hs = shrinkage::induced_marginal(NoiseFamily::half_cauchy(1.0), 1.0);
  EXPECT_THROW(shrinkage::marginal_log_density(hs, 0.5), DomainError);
  MarginalPrior gh = shrinkage::induced_marginal(NoiseFamily::gaussian(1.0), 1.0);
  EXPECT_THROW(shrinkage::marginal_log_density(gh, 0.5), DomainError);
  MarginalPrior dead = shrinkage::induced_marginal(NoiseFamily::bernoulli(0.0), 1.0);
  EXPECT_THROW(shrinkage::marginal_log_density(dead, 0.5), DomainError);
}

// ---------------------------------------------------------------------------
// Quadrature marginals
// ---------------------------------------------------------------------------

TEST(MarginalQuadrature, MatchesClosedFormsWhereAvailable) {
  const double ws[] = {0.0, 0.2, 1.0, 2.5};
  // Rayleigh(s) -> Laplace(s * sigma0).
  for (double s : {0.7, 1.0, 1.6}) {
    NoiseFamily f = NoiseFamily::rayleigh(s);
    MarginalPrior m = shrinkage::induced_marginal(f, 1.2);
    for (double w : ws) {
      const double q = shrinkage::marginal_log_density_quadrature(f, 1.2, w);
      EXPECT_NEAR(q, shrinkage::marginal_log_density(m, w), 1e-7) << "s=" << s << " w=" << w;
    }
  }
  // InverseNakagami(a, b) -> Student-t(2a, sigma0 sqrt(b/a)).
  for (auto [a, b] : {std::pair{2.0, 4.0}, std::pair{0.5, 0.5}, std::pair{3.0, 1.0}}) {
    NoiseFamily f = NoiseFamily::inverse_nakagami(a, b);
    MarginalPrior m = shrinkage::induced_marginal(f, 1.0);
    for (double w : ws) {
      const double q = shrinkage::marginal_log_density_quadrature(f, 1.0, w);
      EXPECT_NEAR(q, shrinkage::marginal_log_density(m, w), 1e-7) << "a=" << a << " w=" << w;
    }
  }
}

TEST(MarginalQuadrature, PinnedValuesAtOrigin) {
  // Laplace(1) at the origin.
  EXPECT_NEAR(shrinkage::marginal_log_density_quadrature(NoiseFamily::rayleigh(1.0), 1.0, 0.0),
              -0.69314718055994529, 1e-8);
  // Standard Cauchy at 1.
  EXPECT_NEAR(
      shrinkage::marginal_log_density_quadrature(NoiseFamily::inverse_nakagami(0.5, 0.5), 1.0, 1.0),
      -1.8378770664093453, 1e-8);
}

TEST(MarginalQuadrature, RejectsDiscreteFamilies) {
  EXPECT_THROW(shrinkage::marginal_log_density_quadrature(NoiseFamily::bernoulli(0.5), 1.0, 0.3),
               DomainError);
  EXPECT_THROW(shrinkage::marginal_log_density_quadrature(NoiseFamily::rayleigh(1.0), -1.0, 0.3),
               DomainError);
}

TEST(MarginalQuadrature, DensitiesIntegrateToOne) {
  // Integrate 2 * exp(log density) over w in (0, W] with the substitution
  // w = tan(theta). W is chosen per family so the truncated tail mass is
  // below 5e-7: exp(-50) for the exponential-tailed marginals, ~K/(4 W^4)
  // with K ~ 48 for the dof-4 Student-t, and ~0.41/W for the Cauchy-tailed
  // horseshoe.
  const std::pair<NoiseFamily, double> cases[] = {
      {NoiseFamily::gaussian(1.0), 50.0},
      {NoiseFamily::rayleigh(1.0), 50.0},
      {NoiseFamily::inverse_nakagami(2.0, 4.0), 300.0},
      {NoiseFamily::half_cauchy(1.0), 2e6},
  };
  for (const auto& [f, w_max] : cases) {
    auto integrand = [&](double theta) {
      const double w = std::tan(theta);
      const double sec = 1.0 / std::cos(theta);
      return std::exp(shrinkage::marginal_log_density_quadrature(f, 1.0, w)) * sec * sec;
    };
    const double total = 2.0 * oracles::integrate_1d(integrand, 1e-10, std::atan(w_max));
    EXPECT_NEAR(total, 1.0, 1e-6) << f.describe();
  }
}

TEST(MarginalQuadrature, HorseshoeDensityRatioMatchesMonteCarlo) {
  // Estimate the horseshoe density near w = 1 and w = 3 by binning 10^7
  // sampled weights; the quadrature density ratio must agree within 10%.
  NoiseFamily f = NoiseFamily::half_cauchy(1.0);
  RngStream rng(31);
  const std::size_t n = 10000000;
  const double half_width = 0.2;
  std::size_t near1 = 0, near3 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::abs(shrinkage::sample_gsm_expanded(f, 1.0, rng));
    if (std::abs(w - 1.0) < half_width) ++near1;
    if (std::abs(w - 3.0) < half_width) ++near3;
  }
  ASSERT_GT(near3, 1000u);
  const double mc_ratio = static_cast<double>(near1) / static_cast<double>(near3);
  const double quad_ratio = std::exp(shrinkage::marginal_log_density_quadrature(f, 1.0, 1.0) -
                                     shrinkage::marginal_log_density_quadrature(f, 1.0, 3.0));
  EXPECT_NEAR(mc_ratio / quad_ratio, 1.0, 0.10);
}

// ---------------------------------------------------------------------------
// Full equivalence suite
// ---------------------------------------------------------------------------

TEST(GsmSuite, AllChecksPass) {
  auto checks = shrinkage::run_gsm_equivalence_suite(1, 100000, 0.01);
  EXPECT_EQ(checks.size(), 12u);
  for (const auto& c : checks) EXPECT_TRUE(c.pass) << c.name << ": " << c.detail;
}

TEST(GsmSuite, LaplaceMarginalMatchesDirectSampler) {
  // Rayleigh-mixture weights vs a textbook inverse-CDF Laplace sampler.
  RngStream r1(41), r2(42);
  const std::size_t n = 50000;
  std::vector<double> mixture(n), direct(n);
  NoiseFamily f = NoiseFamily::rayleigh(1.0);
  for (double& v : mixture) v = shrinkage::sample_gsm_expanded(f, 1.0, r1);
  for (double& v : direct) v = oracles::sample_laplace_direct(r2, 1.0);
  auto ks = shrinkage::ks_two_sample(mixture, direct);
  EXPECT_GT(ks.p_value, 0.005);
}

TEST(GsmSuite, StudentTMarginalMatchesDirectSampler) {
  RngStream r1(43), r2(44);
  const std::size_t n = 50000;
  std::vector<double> mixture(n), direct(n);
  NoiseFamily f = NoiseFamily::inverse_nakagami(2.0, 4.0);
  for (double& v : mixture) v = shrinkage::sample_gsm_expanded(f, 1.0, r1);
  for (double& v : direct) v = oracles::sample_student_t_direct(r2, 4.0, std::sqrt(2.0));
  auto ks = shrinkage::ks_two_sample(mixture, direct);
  EXPECT_GT(ks.p_value, 0.005);
}
