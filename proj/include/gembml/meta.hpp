#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gembml/gaussian.hpp"
#include "gembml/nn.hpp"
#include "gembml/parallel.hpp"
#include "gembml/rng.hpp"
#include "gembml/stats.hpp"
#include "gembml/tasks.hpp"
#include "gembml/vi.hpp"

namespace gembml {

enum class Method { GemBml, GemBmlPlus, Reptile, Pretrain, Fomaml };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::GemBml: return "gem_bml";
        case Method::GemBmlPlus: return "gem_bml_plus";
        case Method::Reptile: return "reptile";
        case Method::Pretrain: return "pretrain";
        case Method::Fomaml: return "fomaml";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "gem_bml") return Method::GemBml;
    if (s == "gem_bml_plus") return Method::GemBmlPlus;
    if (s == "reptile") return Method::Reptile;
    if (s == "pretrain") return Method::Pretrain;
    if (s == "fomaml") return Method::Fomaml;
    throw std::invalid_argument("unknown method: " + s);
}

inline bool is_delta_method(Method m) {
    return m == Method::Reptile || m == Method::Pretrain || m == Method::Fomaml;
}

/// The meta-parameters Theta. When fixed_variance is set, log_var is frozen at
/// ln(fixed_variance) and meta-updates touch the mean only (the delta regime
/// of Reptile / pre-train / foMAML and collapsed-variance GEM).
struct MetaParams {
    DiagGaussian theta;
    std::optional<double> fixed_variance;
};

struct MetaConfig {
    Method method = Method::GemBmlPlus;
    double meta_lr = 1e-3;
    int meta_batch_size = 5;
    int iterations = 1;
    VIConfig inner;       // train-time inner-update
    VIConfig inner_test;  // test-time inner-update
    uint64_t seed = 0;
    double noise_var = 1.0;     // likelihood noise of the generative model
    bool pooled_vi = false;     // second posterior from VI(Theta, D_tr ++ D_val) instead of VI(lambda_tr, D_val)
    double init_scale = 0.05;   // Theta mean init ~ U(-init_scale, init_scale)
    double init_logvar = -6.0;
    std::optional<double> fixed_variance;
    int checkpoint_every = 0;  // 0: final checkpoint only
    bool skip_on_failure = false;
    bool mc_predictor = false;  // meta-test: average predictions over posterior draws
    int mc_predictor_draws = 20;

    void validate() const {
        require(meta_lr > 0.0, "MetaConfig: meta_lr must be positive");
        require(meta_batch_size >= 1, "MetaConfig: meta_batch_size must be >= 1");
        require(iterations >= 0, "MetaConfig: iterations must be >= 0");
        require(noise_var > 0.0, "MetaConfig: noise_var must be positive");
        if (is_delta_method(method)) {
            require(inner.steps >= 0 && inner_test.steps >= 0,
                    "MetaConfig: point-adaptation steps must be >= 0");
        } else {
            inner.validate();
            inner_test.validate();
        }
        if (fixed_variance) require(*fixed_variance > 0.0, "MetaConfig: fixed_variance must be positive");
    }
};

struct MetaGradient {
    PriorGrad grad;  // descent direction: Theta <- Theta - meta_lr * grad ascends L
    DiagGaussian lambda_tr;
    DiagGaussian lambda_trval;
    Vec elbo_tr;
    Vec elbo_trval;
};

/// Inner-update procedure: fits a posterior given (KL-prior, initializer, data).
/// Swappable so tests can substitute exact conjugate posteriors; the meta-update
/// depends on the result values only (stop-gradient is structural).
using InnerSolver = std::function<VIResult(const DiagGaussian& prior, const DiagGaussian& init,
                                           const Dataset& data, const VIConfig& cfg,
                                           double noise_var, uint64_t seed)>;

inline InnerSolver make_vi_solver(const ArchSpec& arch) {
    return [arch](const DiagGaussian& prior, const DiagGaussian& init, const Dataset& data,
                  const VIConfig& cfg, double noise_var, uint64_t seed) {
        return vi_fit(prior, init, arch, data, noise_var, cfg, seed);
    };
}

/// Plain point-estimate descent on the NLL (no prior pull); the delta-regime
/// inner update shared by Reptile, pre-train, foMAML and collapsed GEM.
inline Vec adapt_point(const ArchSpec& arch, const Vec& start, const Dataset& data, int steps,
                       const VIConfig& cfg, double noise_var) {
    require(steps >= 0, "adapt_point: steps must be >= 0");
    Vec theta = start;
    if (data.empty() || steps == 0) return theta;
    detail::AdamState adam;
    if (cfg.optimizer == Optimizer::Adam) adam.init(theta.size());
    for (int s = 0; s < steps; ++s) {
        NllResult nr = nll_and_grad(arch, theta, data, noise_var);
        if (cfg.optimizer == Optimizer::Sgd) {
            for (size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.learning_rate * nr.grad[i];
        } else {
            Vec neg = nr.grad;
            for (auto& x : neg) x = -x;  // AdamState ascends
            adam.apply(theta, neg, cfg);
        }
    }
    return theta;
}

/// Posterior log-variance used to represent a collapsed (point-mass) posterior.
inline constexpr double kCollapsedLogVar = -20.0;

/// Meta-gradient from posterior snapshots alone; the entire meta-update surface
/// of the GEM subroutines. Returns the descent direction.
inline PriorGrad gem_gradient_from_posteriors(const DiagGaussian& lambda_tr,
                                              const DiagGaussian& lambda_trval,
                                              const DiagGaussian& theta, bool plus) {
    PriorGrad ascent = expected_prior_score(lambda_trval, theta);
    if (plus) {
        const PriorGrad sub = expected_prior_score(lambda_tr, theta);
        for (size_t i = 0; i < ascent.d_mean.size(); ++i) {
            ascent.d_mean[i] -= sub.d_mean[i];
            ascent.d_log_var[i] -= sub.d_log_var[i];
        }
    }
    return -ascent;
}

inline Dataset pooled_data(const SplitTask& task) {
    Dataset d = task.train;
    for (size_t i = 0; i < task.val.size(); ++i) d.push(task.val.x[i], task.val.y[i]);
    return d;
}

namespace detail {

inline void zero_log_var(PriorGrad& g) {
    std::fill(g.d_log_var.begin(), g.d_log_var.end(), 0.0);
}

/// Shared posterior computation for the two GEM subroutines.
/// Variational regime: lambda_tr = VI(Theta, D_tr); then either
/// VI(lambda_tr, D_val) (paper-literal chained form) or VI(Theta, D_tr++D_val)
/// (pooled form, cfg.pooled_vi). Collapsed regime (fixed_variance): the same
/// shapes with plain point descent and point-mass posteriors.
inline MetaGradient gem_posteriors(const MetaParams& theta, const SplitTask& task,
                                   const ArchSpec& arch, const MetaConfig& cfg, uint64_t task_seed,
                                   const InnerSolver& solver, bool plus) {
    MetaGradient out;
    if (theta.fixed_variance) {
        const Vec& mu0 = theta.theta.mean;
        Vec mu_tr = adapt_point(arch, mu0, task.train, cfg.inner.steps, cfg.inner, cfg.noise_var);
        Vec mu_trval = cfg.pooled_vi
                           ? adapt_point(arch, mu0, pooled_data(task), cfg.inner.steps, cfg.inner,
                                         cfg.noise_var)
                           : adapt_point(arch, mu_tr, task.val, cfg.inner.steps, cfg.inner,
                                         cfg.noise_var);
        out.lambda_tr = DiagGaussian(std::move(mu_tr), Vec(mu0.size(), kCollapsedLogVar));
        out.lambda_trval = DiagGaussian(std::move(mu_trval), Vec(mu0.size(), kCollapsedLogVar));
    } else {
        VIResult tr = solver(theta.theta, theta.theta, task.train, cfg.inner, cfg.noise_var,
                             derive_seed(task_seed, 1));
        VIResult trval = cfg.pooled_vi
                             ? solver(theta.theta, theta.theta, pooled_data(task), cfg.inner,
                                      cfg.noise_var, derive_seed(task_seed, 2))
                             : solver(tr.lambda, tr.lambda, task.val, cfg.inner, cfg.noise_var,
                                      derive_seed(task_seed, 2));
        out.lambda_tr = std::move(tr.lambda);
        out.elbo_tr = std::move(tr.elbo_trace);
        out.lambda_trval = std::move(trval.lambda);
        out.elbo_trval = std::move(trval.elbo_trace);
    }
    out.grad = gem_gradient_from_posteriors(out.lambda_tr, out.lambda_trval, theta.theta, plus);
    if (theta.fixed_variance) zero_log_var(out.grad);
    return out;
}

}  // namespace detail

inline MetaGradient gem_bml_gradient(const MetaParams& theta, const SplitTask& task,
                                     const ArchSpec& arch, const MetaConfig& cfg,
                                     uint64_t task_seed, const InnerSolver& solver) {
    require(task.train.size() + task.val.size() > 0, "gem_bml_gradient: task has no data");
    return detail::gem_posteriors(theta, task, arch, cfg, task_seed, solver, /*plus=*/false);
}

inline MetaGradient gem_bml_plus_gradient(const MetaParams& theta, const SplitTask& task,
                                          const ArchSpec& arch, const MetaConfig& cfg,
                                          uint64_t task_seed, const InnerSolver& solver) {
    require(task.train.size() + task.val.size() > 0, "gem_bml_plus_gradient: task has no data");
    return detail::gem_posteriors(theta, task, arch, cfg, task_seed, solver, /*plus=*/true);
}

inline MetaGradient reptile_gradient(const MetaParams& theta, const SplitTask& task,
                                     const ArchSpec& arch, const MetaConfig& cfg) {
    require(theta.fixed_variance.has_value(), "reptile_gradient: fixed_variance must be set");
    MetaGradient out;
    Vec mu = adapt_point(arch, theta.theta.mean, pooled_data(task), cfg.inner.steps, cfg.inner,
                         cfg.noise_var);
    out.grad = -delta_limit_score(mu, theta.theta);
    out.lambda_tr = theta.theta;
    out.lambda_trval = DiagGaussian(std::move(mu), Vec(theta.theta.dim(), kCollapsedLogVar));
    return out;
}

inline MetaGradient pretrain_gradient(const MetaParams& theta, const SplitTask& task,
                                      const ArchSpec& arch, const MetaConfig& cfg) {
    require(theta.fixed_variance.has_value(), "pretrain_gradient: fixed_variance must be set");
    MetaGradient out;
    out.grad = PriorGrad::zeros(theta.theta.dim());
    out.grad.d_mean = nll_and_grad(arch, theta.theta.mean, pooled_data(task), cfg.noise_var).grad;
    out.lambda_tr = theta.theta;
    out.lambda_trval = theta.theta;
    return out;
}

inline MetaGradient fomaml_gradient(const MetaParams& theta, const SplitTask& task,
                                    const ArchSpec& arch, const MetaConfig& cfg) {
    require(theta.fixed_variance.has_value(), "fomaml_gradient: fixed_variance must be set");
    require(!task.train.empty() && !task.val.empty(), "fomaml_gradient: needs train and val data");
    MetaGradient out;
    Vec adapted = adapt_point(arch, theta.theta.mean, task.train, cfg.inner.steps, cfg.inner,
                              cfg.noise_var);
    out.grad = PriorGrad::zeros(theta.theta.dim());
    out.grad.d_mean = nll_and_grad(arch, adapted, task.val, cfg.noise_var).grad;
    out.lambda_tr = DiagGaussian(std::move(adapted), Vec(theta.theta.dim(), kCollapsedLogVar));
    out.lambda_trval = out.lambda_tr;
    return out;
}

inline MetaGradient meta_gradient(const MetaParams& theta, const SplitTask& task,
                                  const ArchSpec& arch, const MetaConfig& cfg, uint64_t task_seed,
                                  const InnerSolver& solver) {
    switch (cfg.method) {
        case Method::GemBml: return gem_bml_gradient(theta, task, arch, cfg, task_seed, solver);
        case Method::GemBmlPlus:
            return gem_bml_plus_gradient(theta, task, arch, cfg, task_seed, solver);
        case Method::Reptile: return reptile_gradient(theta, task, arch, cfg);
        case Method::Pretrain: return pretrain_gradient(theta, task, arch, cfg);
        case Method::Fomaml: return fomaml_gradient(theta, task, arch, cfg);
    }
    throw std::logic_error("meta_gradient: unreachable");
}

using TaskSampler = std::function<SplitTask(uint64_t seed)>;

struct DiagRow {
    int iteration = 0;
    int task_index = 0;
    Method method = Method::GemBml;
    double elbo_tr = std::numeric_limits<double>::quiet_NaN();
    double elbo_trval = std::numeric_limits<double>::quiet_NaN();
    double grad_norm_mean = 0.0;
    double grad_norm_logvar = 0.0;
};

struct MetaTrainResult {
    MetaParams theta;
    std::vector<std::pair<int, MetaParams>> checkpoints;  // (iteration, Theta after it)
    std::vector<DiagRow> diagnostics;
};

inline MetaParams init_meta_params(const ArchSpec& arch, const MetaConfig& cfg) {
    const size_t d = parameter_count(arch);
    Rng rng(derive_seed(cfg.seed, 0x1417));
    std::uniform_real_distribution<double> ud(-cfg.init_scale, cfg.init_scale);
    Vec mean(d);
    for (auto& m : mean) m = ud(rng);
    const double lv = cfg.fixed_variance ? std::log(*cfg.fixed_variance) : cfg.init_logvar;
    MetaParams p;
    p.theta = DiagGaussian(std::move(mean), Vec(d, lv));
    p.fixed_variance = cfg.fixed_variance;
    return p;
}

/// Outer loop. Per iteration: sample a batch of tasks (seeds derived from
/// (run seed, iteration, task index)), compute per-task meta-gradients (in
/// parallel when jobs > 1; the Theta update is an ordered reduction so results
/// are identical for any worker count), then Theta <- Theta - meta_lr * sum.
inline MetaTrainResult meta_train(const TaskSampler& sampler, const MetaConfig& cfg,
                                  const ArchSpec& arch, const MetaParams& init,
                                  const InnerSolver& solver, int jobs = 1) {
    cfg.validate();
    MetaTrainResult res;
    res.theta = init;
    const size_t d = res.theta.theta.dim();

    std::vector<MetaGradient> grads(cfg.meta_batch_size);
    std::vector<bool> ok(cfg.meta_batch_size);
    for (int it = 0; it < cfg.iterations; ++it) {
        parallel_for_indexed(static_cast<size_t>(cfg.meta_batch_size), jobs, [&](size_t b) {
            const uint64_t task_seed = derive_seed(cfg.seed, 0x7A5C, static_cast<uint64_t>(it), b);
            const SplitTask task = sampler(task_seed);
            try {
                grads[b] = meta_gradient(res.theta, task, arch, cfg,
                                         derive_seed(cfg.seed, 0x1AA0, static_cast<uint64_t>(it), b),
                                         solver);
                ok[b] = true;
            } catch (const numeric_error& e) {
                ok[b] = false;
                if (!cfg.skip_on_failure)
                    throw numeric_error("iteration " + std::to_string(it) + ", task " +
                                        std::to_string(b) + ": " + e.what());
            }
        });
        for (int b = 0; b < cfg.meta_batch_size; ++b) {
            if (!ok[b]) continue;
            const MetaGradient& g = grads[b];
            for (size_t i = 0; i < d; ++i) {
                res.theta.theta.mean[i] -= cfg.meta_lr * g.grad.d_mean[i];
                if (!res.theta.fixed_variance)
                    res.theta.theta.log_var[i] -= cfg.meta_lr * g.grad.d_log_var[i];
            }
            DiagRow row;
            row.iteration = it;
            row.task_index = b;
            row.method = cfg.method;
            if (!g.elbo_tr.empty()) row.elbo_tr = g.elbo_tr.back();
            if (!g.elbo_trval.empty()) row.elbo_trval = g.elbo_trval.back();
            row.grad_norm_mean = g.grad.norm_mean();
            row.grad_norm_logvar = g.grad.norm_log_var();
            res.diagnostics.push_back(row);
        }
        if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0)
            res.checkpoints.emplace_back(it + 1, res.theta);
    }
    if (res.checkpoints.empty() || res.checkpoints.back().first != cfg.iterations)
        res.checkpoints.emplace_back(cfg.iterations, res.theta);
    return res;
}

struct MetaTestResult {
    std::vector<Vec> per_task_mse;  // n_tasks rows of (steps+1) entries
    Vec mean_mse;                   // per adaptation-step count 0..steps
    Vec ci95_half;
};

inline double mse_of_predictor(const ArchSpec& arch, const Vec& params, const Dataset& val) {
    double s = 0.0;
    detail::MlpWorkspace ws;
    ws.resize(arch);
    for (size_t k = 0; k < val.size(); ++k) {
        detail::forward_pass(arch, params, val.x[k], ws);
        for (int j = 0; j < arch.output_size(); ++j) s += sq(ws.post.back()[j] - val.y[k][j]);
    }
    return s / static_cast<double>(val.size());
}

inline double mse_mc_predictor(const ArchSpec& arch, const DiagGaussian& lambda, const Dataset& val,
                               int draws, uint64_t seed) {
    Rng rng(seed);
    detail::MlpWorkspace ws;
    ws.resize(arch);
    double s = 0.0;
    std::vector<Vec> thetas(draws);
    for (int i = 0; i < draws; ++i) thetas[i] = sample(lambda, standard_normal_vec(rng, lambda.dim()));
    for (size_t k = 0; k < val.size(); ++k) {
        Vec avg(arch.output_size(), 0.0);
        for (int i = 0; i < draws; ++i) {
            detail::forward_pass(arch, thetas[i], val.x[k], ws);
            for (int j = 0; j < arch.output_size(); ++j) avg[j] += ws.post.back()[j];
        }
        for (int j = 0; j < arch.output_size(); ++j) s += sq(avg[j] / draws - val.y[k][j]);
    }
    return s / static_cast<double>(val.size());
}

/// Meta-test: adapt on each task's train split with cfg.inner_test and report
/// the posterior-mean predictor's validation MSE after 0..steps updates.
inline MetaTestResult meta_test(const MetaParams& theta, const std::vector<SplitTask>& tasks,
                                const MetaConfig& cfg, const ArchSpec& arch, uint64_t base_seed,
                                int jobs = 1) {
    const int steps = cfg.inner_test.steps;
    MetaTestResult res;
    res.per_task_mse.assign(tasks.size(), Vec(static_cast<size_t>(steps) + 1, 0.0));

    parallel_for_indexed(tasks.size(), jobs, [&](size_t t) {
        const SplitTask& task = tasks[t];
        require(!task.val.empty(), "meta_test: task has empty validation split");
        Vec& row = res.per_task_mse[t];
        const uint64_t seed = derive_seed(base_seed, 0x7E57, t);
        auto record = [&](int s, const DiagGaussian& lam) {
            row[s] = cfg.mc_predictor
                         ? mse_mc_predictor(arch, lam, task.val, cfg.mc_predictor_draws,
                                            derive_seed(seed, 0xACED, static_cast<uint64_t>(s)))
                         : mse_of_predictor(arch, lam.mean, task.val);
        };
        record(0, theta.theta);
        if (steps == 0) return;
        if (theta.fixed_variance) {
            Vec point = theta.theta.mean;
            for (int s = 1; s <= steps; ++s) {
                point = adapt_point(arch, point, task.train, 1, cfg.inner_test, cfg.noise_var);
                record(s, DiagGaussian(point, Vec(point.size(), kCollapsedLogVar)));
            }
        } else {
            std::vector<DiagGaussian> trace;
            vi_fit(theta.theta, theta.theta, arch, task.train, cfg.noise_var, cfg.inner_test, seed,
                   &trace);
            for (int s = 1; s <= steps; ++s) record(s, trace[static_cast<size_t>(s) - 1]);
        }
    });

    res.mean_mse.resize(static_cast<size_t>(steps) + 1);
    res.ci95_half.resize(static_cast<size_t>(steps) + 1);
    for (int s = 0; s <= steps; ++s) {
        Vec col(tasks.size());
        for (size_t t = 0; t < tasks.size(); ++t) col[t] = res.per_task_mse[t][s];
        const MeanCI ci = mean_ci95(col);
        res.mean_mse[s] = ci.mean;
        res.ci95_half[s] = ci.half_width;
    }
    return res;
}

}  // namespace gembml
