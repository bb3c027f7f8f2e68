#pragma once

#include <cmath>
#include <map>
#include <string>

#include "shrinkage/graph.hpp"
#include "shrinkage/tensor.hpp"

namespace shrinkage {

// Adam, oriented for ascent (objectives here are maximized). State is keyed
// by parameter name so the same instance can drive any GradientMap-shaped
// parameter set.
class Adam {
  public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    double learning_rate() const { return lr_; }

    void step(const GradientMap& grads, const std::map<std::string, Tensor*>& params) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (const auto& [key, target] : params) {
            auto git = grads.find(key);
            if (git == grads.end())
                throw ConfigError("Adam: missing gradient for parameter '" + key + "'");
            const Tensor& g = git->second;
            if (!g.same_shape(*target))
                throw ShapeError("Adam: gradient shape " + g.shape_str() +
                                 " does not match parameter '" + key + "' " +
                                 target->shape_str());
            Slot& s = slots_[key];
            if (s.m.size() == 0) {
                s.m = Tensor(g.shape(), 0.0);
                s.v = Tensor(g.shape(), 0.0);
            }
            for (std::size_t i = 0; i < g.size(); ++i) {
                s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
                s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
                double mhat = s.m[i] / c1;
                double vhat = s.v[i] / c2;
                (*target)[i] += lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    void reset() {
        slots_.clear();
        t_ = 0;
    }

  private:
    struct Slot {
        Tensor m, v;
    };

    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, Slot> slots_;
};

}  // namespace shrinkage
