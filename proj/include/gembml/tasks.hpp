#pragma once

#include <cmath>
#include <string>

#include "gembml/nn.hpp"
#include "gembml/rng.hpp"

namespace gembml {

enum class SinusoidSetting { Default, Challenging, Easy };

inline const char* to_string(SinusoidSetting s) {
    switch (s) {
        case SinusoidSetting::Default: return "default";
        case SinusoidSetting::Challenging: return "challenging";
        case SinusoidSetting::Easy: return "easy";
    }
    return "?";
}

inline SinusoidSetting sinusoid_setting_from_string(const std::string& s) {
    if (s == "default") return SinusoidSetting::Default;
    if (s == "challenging") return SinusoidSetting::Challenging;
    if (s == "easy") return SinusoidSetting::Easy;
    throw std::invalid_argument("unknown sinusoid setting: " + s);
}

struct SinusoidParams {
    double amplitude = 0.0;
    double phase = 0.0;
    double frequency = 1.0;
    double noise_std = 0.0;
};

struct Provenance {
    std::string generator;
    uint64_t seed = 0;
    Vec raw_params;
};

/// One task's data split into a train and a validation part. The split is by
/// index prefix after generation, so different k_split values on the same seed
/// share their leading train points.
struct SplitTask {
    Dataset train;
    Dataset val;
    Provenance prov;
};

/// y = A sin(w x + b) + eps with x ~ U[-5, 5] i.i.d. Parameter ranges per
/// setting:
///   default:      A in [0.1, 5], b in [0, pi],   w = 1,          noise-free
///   challenging:  A in [0.1, 5], b in [0, 2pi],  w in [0.5, 2],  eps ~ N(0, (0.01 A)^2)
///   easy:         A in [0.1, 5], b in [0, 2pi],  w in [0.5, 1],  noise-free
/// Draw order is fixed (A, b, w, then per point x_i, then per point eps_i) so
/// tasks are pure functions of (setting, seed, K).
inline SplitTask sample_sinusoid(SinusoidSetting setting, uint64_t rng_seed, int K, int k_split) {
    require(K >= 1, "sample_sinusoid: K must be >= 1");
    require(k_split >= 0 && k_split <= K, "sample_sinusoid: k_split out of range");
    Rng rng(rng_seed);
    std::uniform_real_distribution<double> ud(0.0, 1.0);

    SinusoidParams p;
    p.amplitude = 0.1 + 4.9 * ud(rng);
    switch (setting) {
        case SinusoidSetting::Default:
            p.phase = M_PI * ud(rng);
            p.frequency = 1.0;
            p.noise_std = 0.0;
            break;
        case SinusoidSetting::Challenging:
            p.phase = 2.0 * M_PI * ud(rng);
            p.frequency = 0.5 + 1.5 * ud(rng);
            p.noise_std = 0.01 * p.amplitude;
            break;
        case SinusoidSetting::Easy:
            p.phase = 2.0 * M_PI * ud(rng);
            p.frequency = 0.5 + 0.5 * ud(rng);
            p.noise_std = 0.0;
            break;
    }

    std::normal_distribution<double> nd(0.0, 1.0);
    SplitTask t;
    t.prov = {std::string("sinusoid_") + to_string(setting), rng_seed,
              {p.amplitude, p.phase, p.frequency, p.noise_std}};
    for (int i = 0; i < K; ++i) {
        const double x = -5.0 + 10.0 * ud(rng);
        double y = p.amplitude * std::sin(p.frequency * x + p.phase);
        if (p.noise_std > 0.0) y += p.noise_std * nd(rng);
        Dataset& dst = (i < k_split) ? t.train : t.val;
        dst.push({x}, {y});
    }
    return t;
}

enum class DesignKind { Ones, Gaussian, Uniform };

/// Gaussian-linear task family: theta_tau ~ N(prior_mean, diag(prior_var)),
/// rows x_i from the design sampler, y_i = x_i . theta_tau + N(0, noise_var).
struct ConjugateTaskFamily {
    int dim = 1;
    DesignKind design = DesignKind::Gaussian;
    Vec prior_mean;
    Vec prior_var;
    double noise_var = 1.0;

    void validate() const {
        require(dim >= 1, "ConjugateTaskFamily: dim must be >= 1");
        require(prior_mean.size() == static_cast<size_t>(dim) &&
                    prior_var.size() == static_cast<size_t>(dim),
                "ConjugateTaskFamily: prior shape mismatch");
        for (double v : prior_var) require(v > 0.0, "ConjugateTaskFamily: prior_var must be positive");
        require(noise_var >= 0.0, "ConjugateTaskFamily: noise_var must be nonnegative");
    }
};

struct ConjugateTask {
    SplitTask task;
    Vec theta_true;  // diagnostics only; never fed to learners
};

inline ConjugateTask sample_conjugate_task(const ConjugateTaskFamily& family, uint64_t rng_seed,
                                           int m, int k_split) {
    family.validate();
    require(m >= 1, "sample_conjugate_task: m must be >= 1");
    require(k_split >= 0 && k_split <= m, "sample_conjugate_task: k_split out of range");
    Rng rng(rng_seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);

    ConjugateTask out;
    out.theta_true.resize(family.dim);
    for (int j = 0; j < family.dim; ++j)
        out.theta_true[j] = family.prior_mean[j] + std::sqrt(family.prior_var[j]) * nd(rng);

    out.task.prov = {"conjugate", rng_seed, out.theta_true};
    for (int i = 0; i < m; ++i) {
        Vec xi(family.dim);
        for (int j = 0; j < family.dim; ++j) {
            switch (family.design) {
                case DesignKind::Ones: xi[j] = 1.0; break;
                case DesignKind::Gaussian: xi[j] = nd(rng); break;
                case DesignKind::Uniform: xi[j] = ud(rng); break;
            }
        }
        double y = dot(xi, out.theta_true);
        if (family.noise_var > 0.0) y += std::sqrt(family.noise_var) * nd(rng);
        Dataset& dst = (i < k_split) ? out.task.train : out.task.val;
        dst.push(std::move(xi), {y});
    }
    return out;
}

}  // namespace gembml
