#pragma once

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <string>

#include "shrinkage/error.hpp"
#include "shrinkage/noise.hpp"

namespace shrinkage {

// Marginal prior on a weight after integrating its multiplicative scale out.
struct MarginalPrior {
    enum class Kind { SpikeAndSlab, GeneralizedHyperbolic, Laplace, StudentT, Horseshoe };

    Kind kind;
    // SpikeAndSlab: keep_prob + sigma0. Laplace: scale. StudentT: dof + scale.
    // Horseshoe / GeneralizedHyperbolic: sigma0 + noise scale (no closed form).
    double keep_prob = 1.0;
    double sigma0 = 1.0;
    double scale = 1.0;
    double dof = 1.0;

    std::string describe() const {
        char buf[96];
        switch (kind) {
            case Kind::SpikeAndSlab:
                std::snprintf(buf, sizeof buf, "SpikeAndSlab(keep=%g, sigma0=%g)", keep_prob, sigma0);
                break;
            case Kind::GeneralizedHyperbolic:
                std::snprintf(buf, sizeof buf, "GeneralizedHyperbolic(sigma0=%g, s=%g)", sigma0, scale);
                break;
            case Kind::Laplace:
                std::snprintf(buf, sizeof buf, "Laplace(scale=%g)", scale);
                break;
            case Kind::StudentT:
                std::snprintf(buf, sizeof buf, "StudentT(dof=%g, scale=%g)", dof, scale);
                break;
            case Kind::Horseshoe:
                std::snprintf(buf, sizeof buf, "Horseshoe(sigma0=%g, b=%g)", sigma0, scale);
                break;
        }
        return buf;
    }
};

// The marginal family induced by a noise family at global scale sigma0:
//   Bernoulli(pi)            -> spike-and-slab, slab N(0, sigma0^2)
//   Gaussian(s)              -> generalized hyperbolic (no simple closed form)
//   Rayleigh(s)              -> Laplace with scale s * sigma0
//   InverseNakagami(a, b)    -> Student-t, dof 2a, scale sigma0 * sqrt(b/a)
//   HalfCauchy(b)            -> horseshoe
inline MarginalPrior induced_marginal(const NoiseFamily& family, double sigma0) {
    if (!(sigma0 > 0.0) || !std::isfinite(sigma0))
        throw DomainError("induced_marginal: sigma0 must be positive, got " +
                          std::to_string(sigma0));
    MarginalPrior m{MarginalPrior::Kind::SpikeAndSlab};
    m.sigma0 = sigma0;
    switch (family.kind()) {
        case NoiseFamily::Kind::Bernoulli:
            m.kind = MarginalPrior::Kind::SpikeAndSlab;
            m.keep_prob = family.keep_prob();
            break;
        case NoiseFamily::Kind::Gaussian:
            m.kind = MarginalPrior::Kind::GeneralizedHyperbolic;
            m.scale = family.scale();
            break;
        case NoiseFamily::Kind::Rayleigh:
            m.kind = MarginalPrior::Kind::Laplace;
            m.scale = family.scale() * sigma0;
            break;
        case NoiseFamily::Kind::InverseNakagami:
            m.kind = MarginalPrior::Kind::StudentT;
            m.dof = 2.0 * family.shape_a();
            m.scale = sigma0 * std::sqrt(family.scale_b() / family.shape_a());
            break;
        case NoiseFamily::Kind::HalfCauchy:
            m.kind = MarginalPrior::Kind::Horseshoe;
            m.scale = family.scale_b();
            break;
    }
    return m;
}

// Closed-form log density where one exists. The spike-and-slab value is the
// continuous slab component (keep_prob * N(w; 0, sigma0^2)); the point mass
// at zero has no density. Horseshoe and generalized hyperbolic throw: use
// marginal_log_density_quadrature for those.
inline double marginal_log_density(const MarginalPrior& m, double w) {
    switch (m.kind) {
        case MarginalPrior::Kind::SpikeAndSlab: {
            if (m.keep_prob <= 0.0)
                throw DomainError("marginal_log_density: slab has zero mass for " + m.describe());
            double v = m.sigma0 * m.sigma0;
            return std::log(m.keep_prob) - 0.5 * std::log(2.0 * M_PI * v) - w * w / (2.0 * v);
        }
        case MarginalPrior::Kind::Laplace:
            return -std::log(2.0 * m.scale) - std::abs(w) / m.scale;
        case MarginalPrior::Kind::StudentT: {
            double nu = m.dof;
            double t = w / m.scale;
            return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                   0.5 * std::log(nu * M_PI) - std::log(m.scale) -
                   0.5 * (nu + 1.0) * std::log1p(t * t / nu);
        }
        case MarginalPrior::Kind::Horseshoe:
        case MarginalPrior::Kind::GeneralizedHyperbolic:
            throw DomainError("marginal_log_density: no closed form for " + m.describe() +
                              "; use marginal_log_density_quadrature");
    }
    throw Error("marginal_log_density: bad kind");
}

// log of integral_0^inf N(w; 0, sigma0^2 xi^2) p(|xi|) dxi, computed with
// adaptive exp-sinh quadrature. Continuous noise families only. Throws
// QuadratureError if the estimated absolute error exceeds 1e-8.
inline double marginal_log_density_quadrature(const NoiseFamily& family, double sigma0, double w) {
    if (family.discrete())
        throw DomainError("marginal_log_density_quadrature: " + family.describe() +
                          " is discrete; quadrature needs a continuous mixing density");
    if (!(sigma0 > 0.0) || !std::isfinite(sigma0))
        throw DomainError("marginal_log_density_quadrature: sigma0 must be positive");

    const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
    // Integrate over u = xi / c with c = max(|w| / sigma0, 1): the Gaussian
    // kernel peaks near u = 1 for every w, so the adaptive nodes always
    // resolve the bump even deep in the tails where xi ~ |w|.
    const double c = std::max(std::abs(w) / sigma0, 1.0);
    auto integrand = [&](double u) {
        double xi = c * u;
        double sd = sigma0 * xi;
        double log_norm = -half_log_2pi - std::log(sd) - w * w / (2.0 * sd * sd);
        double v = std::exp(log_norm + family.log_density_abs(xi)) * c;
        return std::isfinite(v) ? v : 0.0;
    };

    boost::math::quadrature::exp_sinh<double> integrator;
    double err = 0.0, l1 = 0.0;
    double density = integrator.integrate(integrand, 1e-12, &err, &l1);
    // boost reports a relative error estimate; convert to absolute
    double abs_err = err * l1;
    if (!std::isfinite(density) || abs_err > 1e-8)
        throw QuadratureError("marginal_log_density_quadrature: tolerance 1e-8 not reached for " +
                              family.describe() + " at w=" + std::to_string(w) +
                              " (estimated error " + std::to_string(abs_err) + ")");
    if (density <= 0.0)
        throw QuadratureError("marginal_log_density_quadrature: underflow to " +
                              std::to_string(density) + " for " + family.describe() + " at w=" +
                              std::to_string(w));
    return std::log(density);
}

}  // namespace shrinkage
