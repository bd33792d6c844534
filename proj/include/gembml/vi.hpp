#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gembml/gaussian.hpp"
#include "gembml/nn.hpp"
#include "gembml/rng.hpp"

namespace gembml {

enum class Optimizer { Sgd, Adam };

inline const char* to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

inline Optimizer optimizer_from_string(const std::string& s) {
    if (s == "sgd") return Optimizer::Sgd;
    if (s == "adam") return Optimizer::Adam;
    throw std::invalid_argument("unknown optimizer: " + s);
}

/// Inner-update hyperparameters (one posterior fit).
struct VIConfig {
    int steps = 1;
    double learning_rate = 1e-3;
    int mc_samples = 5;
    Optimizer optimizer = Optimizer::Sgd;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 0.0;  // 0 disables gradient clipping

    void validate() const {
        require(steps >= 1, "VIConfig: steps must be >= 1");
        require(learning_rate > 0.0, "VIConfig: learning_rate must be positive");
        require(mc_samples >= 1, "VIConfig: mc_samples must be >= 1");
    }
};

struct VIResult {
    DiagGaussian lambda;
    Vec elbo_trace;  // one entry per step, the sampled objective before that step's update
};

/// Monte Carlo ELBO with analytic KL:
///   mean over draws of -nll(sample(lambda, eps)) - KL(lambda || prior).
/// Deterministic given eps_draws. An empty dataset contributes zero likelihood.
inline double elbo_estimate(const DiagGaussian& lambda, const DiagGaussian& prior,
                            const ArchSpec& arch, const Dataset& data, double noise_var,
                            const std::vector<Vec>& eps_draws) {
    check_same_dim(lambda, prior);
    require(!eps_draws.empty(), "elbo_estimate: need at least one eps draw");
    double lik = 0.0;
    if (!data.empty()) {
        for (const auto& eps : eps_draws)
            lik += -nll(arch, sample(lambda, eps), data, noise_var);
        lik /= static_cast<double>(eps_draws.size());
    }
    return lik - kl(lambda, prior);
}

namespace detail {

struct AdamState {
    Vec m, v;
    long t = 0;
    void init(size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        t = 0;
    }
    // ascent step
    void apply(Vec& x, const Vec& g, const VIConfig& cfg) {
        ++t;
        const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
        const double corr1 = 1.0 - std::pow(b1, t), corr2 = 1.0 - std::pow(b2, t);
        for (size_t i = 0; i < x.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            x[i] += cfg.learning_rate * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + cfg.adam_eps);
        }
    }
};

}  // namespace detail

/// Stochastic-gradient variational inference: ascends the reparameterized ELBO
///   E_eps[log P(data | sample(lambda, eps))] - KL(lambda || prior)
/// from `init` for cfg.steps steps. The expectation gradient flows through the
/// sampling transform; the KL gradient is analytic. Reproducible given rng_seed.
/// When `trace_out` is non-null it receives the post-update lambda of every step.
inline VIResult vi_fit(const DiagGaussian& prior, const DiagGaussian& init, const ArchSpec& arch,
                       const Dataset& data, double noise_var, const VIConfig& cfg,
                       uint64_t rng_seed, std::vector<DiagGaussian>* trace_out = nullptr) {
    cfg.validate();
    check_same_dim(prior, init);
    if (!data.empty()) check_dataset(arch, data);
    const size_t d = prior.dim();

    VIResult res;
    res.lambda = init;
    res.elbo_trace.reserve(cfg.steps);
    Rng rng(rng_seed);

    detail::AdamState adam_mean, adam_lv;
    if (cfg.optimizer == Optimizer::Adam) {
        adam_mean.init(d);
        adam_lv.init(d);
    }

    Vec g_mean(d), g_lv(d);
    for (int step = 0; step < cfg.steps; ++step) {
        std::fill(g_mean.begin(), g_mean.end(), 0.0);
        std::fill(g_lv.begin(), g_lv.end(), 0.0);
        double lik_value = 0.0;
        if (!data.empty()) {
            for (int s = 0; s < cfg.mc_samples; ++s) {
                const Vec eps = standard_normal_vec(rng, d);
                const Vec theta = sample(res.lambda, eps);
                NllResult nr;
                try {
                    nr = nll_and_grad(arch, theta, data, noise_var);
                } catch (const numeric_error& e) {
                    throw numeric_error("vi_fit: step " + std::to_string(step) + ": " + e.what());
                }
                lik_value += -nr.nll;
                for (size_t i = 0; i < d; ++i) {
                    g_mean[i] += -nr.grad[i];
                    g_lv[i] += -nr.grad[i] * 0.5 * std::exp(0.5 * res.lambda.log_var[i]) * eps[i];
                }
            }
            const double inv = 1.0 / cfg.mc_samples;
            lik_value *= inv;
            for (size_t i = 0; i < d; ++i) {
                g_mean[i] *= inv;
                g_lv[i] *= inv;
            }
        }
        const PriorGrad klg = kl_grad_wrt_q(res.lambda, prior);
        for (size_t i = 0; i < d; ++i) {
            g_mean[i] -= klg.d_mean[i];
            g_lv[i] -= klg.d_log_var[i];
        }
        const double objective = lik_value - kl(res.lambda, prior);
        if (!std::isfinite(objective) || !all_finite(g_mean) || !all_finite(g_lv))
            throw numeric_error("vi_fit: non-finite objective at step " + std::to_string(step));
        res.elbo_trace.push_back(objective);

        if (cfg.clip_norm > 0.0) {
            const double n = std::sqrt(dot(g_mean, g_mean) + dot(g_lv, g_lv));
            if (n > cfg.clip_norm) {
                const double sc = cfg.clip_norm / n;
                for (size_t i = 0; i < d; ++i) {
                    g_mean[i] *= sc;
                    g_lv[i] *= sc;
                }
            }
        }
        if (cfg.optimizer == Optimizer::Sgd) {
            for (size_t i = 0; i < d; ++i) {
                res.lambda.mean[i] += cfg.learning_rate * g_mean[i];
                res.lambda.log_var[i] += cfg.learning_rate * g_lv[i];
            }
        } else {
            adam_mean.apply(res.lambda.mean, g_mean, cfg);
            adam_lv.apply(res.lambda.log_var, g_lv, cfg);
        }
        if (trace_out) trace_out->push_back(res.lambda);
    }
    return res;
}

}  // namespace gembml
