#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "shrinkage/error.hpp"
#include "shrinkage/rng.hpp"

namespace shrinkage {

// Distribution of one multiplicative noise/scale variable xi. The scale acts
// on a weight as w = sigma0 * xi * z with z standard normal (expanded form),
// equivalently w | xi ~ N(0, sigma0^2 xi^2) (hierarchical form).
class NoiseFamily {
  public:
    enum class Kind { Bernoulli, Gaussian, Rayleigh, InverseNakagami, HalfCauchy };

    static NoiseFamily bernoulli(double keep_prob) {
        if (keep_prob < 0.0 || keep_prob > 1.0)
            throw DomainError("NoiseFamily: Bernoulli keep probability must lie in [0,1], got " +
                              std::to_string(keep_prob));
        NoiseFamily f(Kind::Bernoulli);
        f.keep_prob_ = keep_prob;
        return f;
    }

    static NoiseFamily gaussian(double s) {
        require_positive(s, "Gaussian scale");
        NoiseFamily f(Kind::Gaussian);
        f.scale_ = s;
        return f;
    }

    static NoiseFamily rayleigh(double s) {
        require_positive(s, "Rayleigh scale");
        NoiseFamily f(Kind::Rayleigh);
        f.scale_ = s;
        return f;
    }

    // Parametrized by the inverse-gamma law of xi^2: shape a, scale b.
    static NoiseFamily inverse_nakagami(double a, double b) {
        require_positive(a, "InverseNakagami shape");
        require_positive(b, "InverseNakagami scale");
        NoiseFamily f(Kind::InverseNakagami);
        f.a_ = a;
        f.b_ = b;
        return f;
    }

    // Conventional (m, omega) parametrization: 1/xi ~ Nakagami(m, omega),
    // i.e. xi^{-2} ~ Gamma(m, omega/m), so xi^2 ~ inverse-gamma(m, m/omega).
    static NoiseFamily inverse_nakagami_m_omega(double m, double omega) {
        require_positive(m, "Nakagami shape");
        require_positive(omega, "Nakagami spread");
        return inverse_nakagami(m, m / omega);
    }

    static NoiseFamily half_cauchy(double b) {
        require_positive(b, "half-Cauchy scale");
        NoiseFamily f(Kind::HalfCauchy);
        f.b_ = b;
        return f;
    }

    Kind kind() const { return kind_; }
    bool discrete() const { return kind_ == Kind::Bernoulli; }
    double keep_prob() const { return keep_prob_; }
    double scale() const { return scale_; }
    double shape_a() const { return a_; }
    double scale_b() const { return b_; }

    std::string describe() const {
        char buf[96];
        switch (kind_) {
            case Kind::Bernoulli:
                std::snprintf(buf, sizeof buf, "Bernoulli(keep=%g)", keep_prob_);
                break;
            case Kind::Gaussian:
                std::snprintf(buf, sizeof buf, "Gaussian(s=%g)", scale_);
                break;
            case Kind::Rayleigh:
                std::snprintf(buf, sizeof buf, "Rayleigh(s=%g)", scale_);
                break;
            case Kind::InverseNakagami:
                std::snprintf(buf, sizeof buf, "InverseNakagami(a=%g,b=%g)", a_, b_);
                break;
            case Kind::HalfCauchy:
                std::snprintf(buf, sizeof buf, "HalfCauchy(b=%g)", b_);
                break;
        }
        return buf;
    }

    double sample(RngStream& rng) const {
        switch (kind_) {
            case Kind::Bernoulli: return rng.bernoulli(keep_prob_);
            case Kind::Gaussian: return rng.normal(0.0, scale_);
            case Kind::Rayleigh: return rng.rayleigh(scale_);
            case Kind::InverseNakagami: return std::sqrt(rng.inverse_gamma(a_, b_));
            case Kind::HalfCauchy: return rng.half_cauchy(b_);
        }
        throw Error("NoiseFamily: bad kind");
    }

    // log density of |xi| on (0, inf) for the continuous families; the
    // Gaussian case folds the two half-lines together (only xi^2 matters
    // downstream). Discrete families have no density.
    double log_density_abs(double xi) const {
        if (xi <= 0.0) return -std::numeric_limits<double>::infinity();
        switch (kind_) {
            case Kind::Bernoulli:
                throw DomainError("log_density_abs: Bernoulli noise is discrete");
            case Kind::Gaussian:
                // half-normal
                return 0.5 * std::log(2.0 / M_PI) - std::log(scale_) -
                       xi * xi / (2.0 * scale_ * scale_);
            case Kind::Rayleigh:
                return std::log(xi) - 2.0 * std::log(scale_) - xi * xi / (2.0 * scale_ * scale_);
            case Kind::InverseNakagami:
                return std::log(2.0) + a_ * std::log(b_) - std::lgamma(a_) -
                       (2.0 * a_ + 1.0) * std::log(xi) - b_ / (xi * xi);
            case Kind::HalfCauchy:
                return std::log(2.0 / M_PI) - std::log(b_) - std::log1p(xi * xi / (b_ * b_));
        }
        throw Error("NoiseFamily: bad kind");
    }

    // E[xi^2]; throws DivergentExpectation when the moment does not exist.
    double expected_sq() const {
        switch (kind_) {
            case Kind::Bernoulli: return keep_prob_;
            case Kind::Gaussian: return scale_ * scale_;
            case Kind::Rayleigh: return 2.0 * scale_ * scale_;
            case Kind::InverseNakagami:
                if (a_ <= 1.0)
                    throw DivergentExpectation("expected_sq: diverges for " + describe() +
                                               " (needs shape > 1)");
                return b_ / (a_ - 1.0);
            case Kind::HalfCauchy:
                throw DivergentExpectation("expected_sq: diverges for " + describe());
        }
        throw Error("NoiseFamily: bad kind");
    }

    // E[xi^{-2}]; finite only for InverseNakagami (= a/b) and for the
    // degenerate Bernoulli(keep=1).
    double expected_inv_sq() const {
        switch (kind_) {
            case Kind::Bernoulli:
                if (keep_prob_ >= 1.0) return 1.0;
                throw DivergentExpectation(
                    "expected_inv_sq: diverges for " + describe() +
                    " (mass at zero; keep probability below one)");
            case Kind::InverseNakagami:
                return a_ / b_;  // xi^{-2} ~ Gamma(a, rate b)
            case Kind::Gaussian:
            case Kind::Rayleigh:
            case Kind::HalfCauchy:
                throw DivergentExpectation("expected_inv_sq: diverges for " + describe());
        }
        throw Error("NoiseFamily: bad kind");
    }

  private:
    explicit NoiseFamily(Kind k) : kind_(k) {}

    static void require_positive(double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw DomainError(std::string("NoiseFamily: ") + what + " must be positive, got " +
                              std::to_string(v));
    }

    Kind kind_;
    double keep_prob_ = 1.0;
    double scale_ = 1.0;
    double a_ = 1.0;
    double b_ = 1.0;
};

// One draw from the expanded parametrization: w = sigma0 * xi * z.
inline double sample_gsm_expanded(const NoiseFamily& family, double sigma0, RngStream& rng) {
    double xi = family.sample(rng);
    return sigma0 * xi * rng.normal();
}

// One draw from the hierarchical parametrization: xi first, then
// w ~ N(0, sigma0^2 xi^2). Distributionally identical to the expanded form.
inline double sample_gsm_hierarchical(const NoiseFamily& family, double sigma0, RngStream& rng) {
    double xi = family.sample(rng);
    return rng.normal(0.0, sigma0 * std::abs(xi));
}

}  // namespace shrinkage
