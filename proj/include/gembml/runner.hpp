#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "gembml/config.hpp"
#include "gembml/csv.hpp"
#include "gembml/json_io.hpp"
#include "gembml/meta.hpp"
#include "gembml/oracle.hpp"
#include "gembml/stats.hpp"

namespace gembml::runner {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 check/acceptance failure, 2 usage/config error,
// 3 numeric failure.
enum ExitCode { kOk = 0, kCheckFailed = 1, kUsage = 2, kNumeric = 3 };

namespace fs = std::filesystem;

inline std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Collects output file names and writes manifest.json atomically at run end.
class ManifestScope {
public:
    ManifestScope(const RunConfig& cfg, fs::path out_dir)
        : cfg_(cfg), out_dir_(std::move(out_dir)), start_(iso_timestamp()) {
        fs::create_directories(out_dir_);
    }
    fs::path file(const std::string& name) {
        files_.push_back(name);
        return out_dir_ / name;
    }
    void finish() {
        json j{{"experiment", cfg_.experiment},
               {"config", cfg_.raw.entries()},
               {"config_hash", cfg_.raw.hash()},
               {"version", kVersion},
               {"started", start_},
               {"finished", iso_timestamp()},
               {"outputs", files_}};
        write_file_atomic(out_dir_ / "manifest.json", j.dump(2) + "\n");
    }

private:
    const RunConfig& cfg_;
    fs::path out_dir_;
    std::string start_;
    std::vector<std::string> files_;
};

inline TaskSampler make_sinusoid_sampler(SinusoidSetting setting, int K, int k_split) {
    return [=](uint64_t seed) { return sample_sinusoid(setting, seed, K, k_split); };
}

inline std::vector<SplitTask> sample_test_tasks(const RunConfig& cfg, int n, uint64_t tag) {
    std::vector<SplitTask> tasks(n);
    for (int i = 0; i < n; ++i)
        tasks[i] = sample_sinusoid(cfg.setting, derive_seed(cfg.seed, tag, static_cast<uint64_t>(i)),
                                   cfg.task_k, cfg.task_k_split);
    return tasks;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    double max_err = 0.0;
    double tol = 0.0;
    bool pass() const { return max_err <= tol; }
};

/// Componentwise gradient comparison: relative error above the magnitude
/// threshold, absolute below it.
inline double grad_disagreement(const Vec& analytic, const Vec& fd, double abs_floor = 1e-6) {
    require(analytic.size() == fd.size(), "grad_disagreement: size mismatch");
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double mag = std::max(std::abs(analytic[i]), std::abs(fd[i]));
        const double diff = std::abs(analytic[i] - fd[i]);
        if (mag >= abs_floor)
            worst = std::max(worst, diff / mag);
        else if (diff > abs_floor)
            worst = std::max(worst, diff);
    }
    return worst;
}

inline Vec random_params(const ArchSpec& arch, uint64_t seed, double scale) {
    Rng rng(seed);
    std::uniform_real_distribution<double> ud(-scale, scale);
    Vec p(parameter_count(arch));
    for (auto& x : p) x = ud(rng);
    return p;
}

inline Dataset random_dataset(const ArchSpec& arch, int K, uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Dataset d;
    for (int k = 0; k < K; ++k) {
        Vec x(arch.input_size()), y(arch.output_size());
        for (auto& v : x) v = 2.0 * nd(rng);
        for (auto& v : y) v = nd(rng);
        d.push(std::move(x), std::move(y));
    }
    return d;
}

inline std::vector<CheckResult> gradient_checks(bool inject_fault) {
    std::vector<CheckResult> out;
    const double fd_eps = 1e-5;

    auto mlp_check = [&](const std::string& name, const ArchSpec& arch, uint64_t seed,
                         double noise_var) {
        const Vec params = random_params(arch, seed, 0.6);
        const Dataset data = random_dataset(arch, 8, derive_seed(seed, 77));
        Vec analytic = nll_and_grad(arch, params, data, noise_var).grad;
        if (inject_fault && out.empty())
            for (auto& g : analytic) g = -g;
        const Vec fd = finite_diff_grad(
            [&](const Vec& p) { return nll(arch, p, data, noise_var); }, params, fd_eps);
        out.push_back({name, grad_disagreement(analytic, fd), 1e-4});
    };
    mlp_check("mlp_relu_1_8_8_1", ArchSpec({1, 8, 8, 1}, Activation::Relu), 11, 1.0);
    mlp_check("mlp_relu_1_40_40_1", ArchSpec({1, 40, 40, 1}, Activation::Relu), 12, 1.0);
    mlp_check("mlp_tanh_2_10_3", ArchSpec({2, 10, 3}, Activation::Tanh), 13, 0.5);
    mlp_check("mlp_identity_3_4_2", ArchSpec({3, 4, 2}, Activation::Identity), 14, 2.0);

    {
        // single linear neuron, data {(1,2)}, w=0: nll = 2 + ln(2*pi)/2, dnll/dw = -2
        ArchSpec arch({1, 1}, Activation::Identity);
        Dataset d;
        d.push({1.0}, {2.0});
        const NllResult r = nll_and_grad(arch, {0.0, 0.0}, d, 1.0);
        const double err = std::max(std::abs(r.nll - (2.0 + 0.5 * kLog2Pi)),
                                    std::max(std::abs(r.grad[0] + 2.0), std::abs(r.grad[1] + 2.0)));
        out.push_back({"mlp_hand_linear", err, 1e-12});
    }
    {
        // expected_prior_score == d/dTheta of -KL(q || p(Theta)) by finite differences
        Rng rng(21);
        std::normal_distribution<double> nd(0.0, 1.0);
        double worst = 0.0;
        for (int rep = 0; rep < 5; ++rep) {
            const size_t dim = 4;
            DiagGaussian q(standard_normal_vec(rng, dim), standard_normal_vec(rng, dim));
            DiagGaussian p(standard_normal_vec(rng, dim), standard_normal_vec(rng, dim));
            const PriorGrad score = expected_prior_score(q, p);
            Vec packed(p.mean);
            packed.insert(packed.end(), p.log_var.begin(), p.log_var.end());
            const Vec fd = finite_diff_grad(
                [&](const Vec& v) {
                    DiagGaussian pp(Vec(v.begin(), v.begin() + dim), Vec(v.begin() + dim, v.end()));
                    return -kl(q, pp);
                },
                packed, 1e-6);
            Vec an(score.d_mean);
            an.insert(an.end(), score.d_log_var.begin(), score.d_log_var.end());
            worst = std::max(worst, grad_disagreement(an, fd));
        }
        out.push_back({"gaussian_score_vs_kl_fd", worst, 1e-6});
    }
    {
        DiagGaussian p(Vec{0.3, -1.2}, Vec{0.2, -0.5});
        const PriorGrad g = expected_prior_score(p, p);
        out.push_back({"gaussian_score_self_zero",
                       std::max(g.norm_mean(), g.norm_log_var()), 0.0});
    }
    {
        // oracle marginal gradient vs Richardson-extrapolated finite differences
        Rng rng(31);
        std::uniform_real_distribution<double> ud(-1.0, 1.0);
        oracle::MatrixXd X(4, 2);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 2; ++j) X(i, j) = 2.0 * ud(rng);
        oracle::ConjugateModel model{X, 0.7, DiagGaussian(Vec{0.2, -0.4}, Vec{0.1, -0.3})};
        const Vec y{1.0, -0.5, 0.3, 2.0};
        const PriorGrad an = oracle::exact_marginal_grad(model, y);
        Vec packed(model.prior.mean);
        packed.insert(packed.end(), model.prior.log_var.begin(), model.prior.log_var.end());
        auto f = [&](const Vec& v) {
            oracle::ConjugateModel m2 = model;
            m2.prior = DiagGaussian(Vec(v.begin(), v.begin() + 2), Vec(v.begin() + 2, v.end()));
            return oracle::exact_log_marginal(m2, y);
        };
        const double h = 1e-3;
        const Vec d1 = finite_diff_grad(f, packed, h);
        const Vec d2 = finite_diff_grad(f, packed, h / 2.0);
        Vec fd(d1.size());
        for (size_t i = 0; i < fd.size(); ++i) fd[i] = (4.0 * d2[i] - d1[i]) / 3.0;
        Vec anv(an.d_mean);
        anv.insert(anv.end(), an.d_log_var.begin(), an.d_log_var.end());
        out.push_back({"oracle_marginal_grad_fd", grad_disagreement(anv, fd), 1e-8});
    }
    return out;
}

inline int run_gradcheck(const RunConfig& cfg) {
    ManifestScope ms(cfg, cfg.out_dir);
    const bool inject = cfg.raw.get_bool("gradcheck.inject_fault", false);
    const auto checks = gradient_checks(inject);
    CsvWriter csv(ms.file("gradcheck.csv"), {"check", "max_err", "tol", "pass"});
    const CheckResult* first_fail = nullptr;
    for (const auto& c : checks) {
        csv.row({c.name, format_double(c.max_err), format_double(c.tol), c.pass() ? "1" : "0"});
        if (!c.pass() && !first_fail) first_fail = &c;
        std::cout << (c.pass() ? "[PASS] " : "[FAIL] ") << c.name << " max_err=" << c.max_err
                  << " tol=" << c.tol << "\n";
    }
    ms.finish();
    if (first_fail) {
        std::cout << "gradcheck failed: " << first_fail->name << "\n";
        return kCheckFailed;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// grad-error-study (GEM vs backprop-through-VI estimator on the exact model)
// ---------------------------------------------------------------------------

inline oracle::ConjugateModel random_conjugate_model(uint64_t seed, int p, int m_min, int m_max,
                                                     Vec* y_out) {
    Rng rng(seed);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    const int m = m_min + static_cast<int>(ud(rng) * (m_max - m_min + 1 - 1e-12));
    oracle::MatrixXd X(m, p);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j) X(i, j) = -2.0 + 4.0 * ud(rng);
    Vec mu(p), lv(p);
    for (int j = 0; j < p; ++j) {
        mu[j] = -1.0 + 2.0 * ud(rng);
        lv[j] = std::log(0.3) + ud(rng) * (std::log(3.0) - std::log(0.3));
    }
    const double noise_var = 0.3 + 1.7 * ud(rng);
    oracle::ConjugateModel model{X, noise_var, DiagGaussian(mu, lv)};
    Vec theta(p), y(m);
    for (int j = 0; j < p; ++j) theta[j] = mu[j] + std::exp(0.5 * lv[j]) * nd(rng);
    for (int i = 0; i < m; ++i) {
        double v = 0.0;
        for (int j = 0; j < p; ++j) v += X(i, j) * theta[j];
        y[i] = v + std::sqrt(noise_var) * nd(rng);
    }
    *y_out = y;
    return model;
}

struct GradErrorSummary {
    std::vector<int> t_grid;
    Vec gem_median;
    Vec elbo_median;
};

inline GradErrorSummary grad_error_study(int n_problems, const std::vector<int>& t_grid,
                                         double eta, uint64_t seed) {
    GradErrorSummary s;
    s.t_grid = t_grid;
    std::vector<Vec> gem(t_grid.size()), elbo(t_grid.size());
    for (int prob = 0; prob < n_problems; ++prob) {
        Vec y;
        const auto model = random_conjugate_model(derive_seed(seed, 0x6E5, prob), 1, 3, 12, &y);
        const auto [lrm, lrl] = oracle::stable_vi_rates(model, eta);
        const auto pts = oracle::grad_error_curve(model, y, t_grid, lrm, lrl);
        for (size_t i = 0; i < pts.size(); ++i) {
            gem[i].push_back(pts[i].gem_error);
            elbo[i].push_back(pts[i].elbo_error);
        }
    }
    for (size_t i = 0; i < t_grid.size(); ++i) {
        s.gem_median.push_back(median(gem[i]));
        s.elbo_median.push_back(median(elbo[i]));
    }
    return s;
}

inline int run_grad_error_study(const RunConfig& cfg) {
    ManifestScope ms(cfg, cfg.out_dir);
    const int n_problems = static_cast<int>(cfg.raw.get_int("study.problems", 100));
    const std::vector<int> t_grid = cfg.raw.get_int_list("study.t_grid", {1, 2, 5, 10, 50, 200});
    const double eta = cfg.raw.get_double("study.eta", 0.8);

    CsvWriter csv(ms.file("grad_error.csv"), {"problem", "T", "gem_error", "elbo_error"});
    std::vector<Vec> gem(t_grid.size()), elbo(t_grid.size());
    for (int prob = 0; prob < n_problems; ++prob) {
        Vec y;
        const auto model = random_conjugate_model(derive_seed(cfg.seed, 0x6E5, prob), 1, 3, 12, &y);
        const auto [lrm, lrl] = oracle::stable_vi_rates(model, eta);
        const auto pts = oracle::grad_error_curve(model, y, t_grid, lrm, lrl);
        for (size_t i = 0; i < pts.size(); ++i) {
            csv.row({std::to_string(prob), std::to_string(pts[i].T),
                     format_double(pts[i].gem_error), format_double(pts[i].elbo_error)});
            gem[i].push_back(pts[i].gem_error);
            elbo[i].push_back(pts[i].elbo_error);
        }
    }
    json med = json::array();
    for (size_t i = 0; i < t_grid.size(); ++i)
        med.push_back({{"T", t_grid[i]},
                       {"gem_median", median(gem[i])},
                       {"elbo_median", median(elbo[i])},
                       {"gem_le_elbo", median(gem[i]) <= median(elbo[i])}});
    json summary{{"study", "grad_error"},
                 {"seed", cfg.seed},
                 {"problems", n_problems},
                 {"eta", eta},
                 {"medians", med},
                 {"largest_T_gem_median", median(gem.back())},
                 {"largest_T_elbo_median", median(elbo.back())}};
    write_file_atomic(ms.file("grad_error_summary.json"), summary.dump(2) + "\n");
    ms.finish();
    std::cout << "grad-error-study: " << n_problems << " problems, largest-T gem median "
              << median(gem.back()) << ", elbo median " << median(elbo.back()) << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// sine experiment
// ---------------------------------------------------------------------------

inline void write_tasks_csv(const fs::path& path, const std::vector<SplitTask>& tasks, int n) {
    CsvWriter csv(path, {"task", "x", "y", "split"});
    for (int t = 0; t < n && t < static_cast<int>(tasks.size()); ++t) {
        for (size_t i = 0; i < tasks[t].train.size(); ++i)
            csv.row({std::to_string(t), format_double(tasks[t].train.x[i][0]),
                     format_double(tasks[t].train.y[i][0]), "train"});
        for (size_t i = 0; i < tasks[t].val.size(); ++i)
            csv.row({std::to_string(t), format_double(tasks[t].val.x[i][0]),
                     format_double(tasks[t].val.y[i][0]), "val"});
    }
}

struct SineOutputs {
    MetaTrainResult train;
    MetaTestResult test;
};

inline SineOutputs sine_experiment(const RunConfig& cfg) {
    const TaskSampler sampler = make_sinusoid_sampler(cfg.setting, cfg.task_k, cfg.task_k_split);
    const MetaParams init = init_meta_params(cfg.arch, cfg.meta);
    const InnerSolver solver = make_vi_solver(cfg.arch);
    SineOutputs out;
    out.train = meta_train(sampler, cfg.meta, cfg.arch, init, solver, cfg.jobs);
    const auto test_tasks = sample_test_tasks(cfg, cfg.test_tasks, 0x7E57A5);
    out.test = meta_test(out.train.theta, test_tasks, cfg.meta, cfg.arch,
                         derive_seed(cfg.seed, 0x7E57), cfg.jobs);
    return out;
}

inline void write_train_diag_csv(const fs::path& path, const std::vector<DiagRow>& rows) {
    CsvWriter csv(path, {"iteration", "task_index", "method", "elbo_tr", "elbo_trval",
                         "grad_norm_mean", "grad_norm_logvar"});
    for (const auto& r : rows)
        csv.row({std::to_string(r.iteration), std::to_string(r.task_index), to_string(r.method),
                 format_double(r.elbo_tr), format_double(r.elbo_trval),
                 format_double(r.grad_norm_mean), format_double(r.grad_norm_logvar)});
}

inline void write_test_mse_csv(const fs::path& path, const MetaTestResult& res) {
    CsvWriter csv(path, {"step", "mean_mse", "ci95_lo", "ci95_hi"});
    for (size_t s = 0; s < res.mean_mse.size(); ++s)
        csv.row({std::to_string(s), format_double(res.mean_mse[s]),
                 format_double(res.mean_mse[s] - res.ci95_half[s]),
                 format_double(res.mean_mse[s] + res.ci95_half[s])});
}

inline int run_sine(const RunConfig& cfg) {
    ManifestScope ms(cfg, cfg.out_dir);
    const SineOutputs out = sine_experiment(cfg);
    write_train_diag_csv(ms.file("train_diag.csv"), out.train.diagnostics);
    for (const auto& [it, theta] : out.train.checkpoints) {
        char name[48];
        std::snprintf(name, sizeof(name), "ckpt_%06d.json", it);
        write_checkpoint(ms.file(name), it, theta, cfg.raw.hash(), cfg.seed);
    }
    write_test_mse_csv(ms.file("test_mse.csv"), out.test);
    if (cfg.dump_tasks > 0)
        write_tasks_csv(ms.file("tasks.csv"),
                        sample_test_tasks(cfg, std::min(cfg.dump_tasks, cfg.test_tasks), 0x7E57A5),
                        cfg.dump_tasks);
    ms.finish();
    std::cout << "sine: method " << to_string(cfg.meta.method) << ", "
              << cfg.meta.iterations << " iterations; 0-step MSE " << out.test.mean_mse.front()
              << ", " << (out.test.mean_mse.size() - 1) << "-step MSE " << out.test.mean_mse.back()
              << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// theory studies
// ---------------------------------------------------------------------------

inline std::vector<DiagGaussian> sample_posterior_perturbations(const oracle::FullGaussian& post,
                                                                int n, uint64_t seed,
                                                                double shift_scale = 0.25,
                                                                double logvar_range = 0.25) {
    std::vector<DiagGaussian> out;
    out.reserve(n);
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(-logvar_range, logvar_range);
    const int p = static_cast<int>(post.mean.size());
    for (int i = 0; i < n; ++i) {
        Vec mu(p), lv(p);
        for (int j = 0; j < p; ++j) {
            mu[j] = post.mean(j) + shift_scale * std::sqrt(post.cov(j, j)) * nd(rng);
            lv[j] = std::log(post.cov(j, j)) + ud(rng);
        }
        out.emplace_back(std::move(mu), std::move(lv));
    }
    return out;
}

inline int run_theory(const RunConfig& cfg) {
    const std::string study = cfg.raw.get_string("theory.study", "");
    if (study != "variance_ratio" && study != "pinsker" && study != "l2_check" &&
        study != "predictive_optimality") {
        std::cerr << "unknown theory study: '" << study
                  << "' (expected variance_ratio | pinsker | l2_check | predictive_optimality)\n";
        return kUsage;
    }
    ManifestScope ms(cfg, cfg.out_dir);
    bool gate_ok = true;
    json summary{{"study", study}, {"seed", cfg.seed}};

    if (study == "variance_ratio") {
        const int k = static_cast<int>(cfg.raw.get_int("study.k", 5));
        const int m = static_cast<int>(cfg.raw.get_int("study.m", 10));
        const int n_tasks = static_cast<int>(cfg.raw.get_int("study.n_tasks", 500));
        const int n_reps = static_cast<int>(cfg.raw.get_int("study.n_replicates", 500));
        const double pm = cfg.raw.get_double("study.prior_mean", 1.5);
        const double pv = cfg.raw.get_double("study.prior_var", 0.002);
        const double nv = cfg.raw.get_double("study.noise_var", 1.0);
        const auto res = oracle::variance_ratio_study(k, m, n_tasks, n_reps, cfg.seed, pm, pv, nv);
        CsvWriter csv(ms.file("variance_ratio.csv"),
                      {"k", "m", "n_tasks", "n_replicates", "ratio", "ci_lo", "ci_hi", "predicted"});
        csv.row({std::to_string(k), std::to_string(m), std::to_string(n_tasks),
                 std::to_string(n_reps), format_double(res.ratio), format_double(res.ci_lo),
                 format_double(res.ci_hi), format_double(res.predicted)});
        summary["ratio"] = res.ratio;
        summary["ci"] = {res.ci_lo, res.ci_hi};
        summary["predicted"] = res.predicted;
        std::cout << "variance_ratio: k=" << k << " m=" << m << " ratio " << res.ratio << " (CI ["
                  << res.ci_lo << ", " << res.ci_hi << "], predicted " << res.predicted << ")\n";
    } else if (study == "pinsker") {
        const int n_models = static_cast<int>(cfg.raw.get_int("study.models", 500));
        const int per_model = static_cast<int>(cfg.raw.get_int("study.perturbations_per", 20));
        CsvWriter csv(ms.file("pinsker.csv"),
                      {"model", "q_index", "error", "kl", "m_const", "bound", "violation"});
        int violations = 0;
        double max_ratio = 0.0;
        for (int mi = 0; mi < n_models; ++mi) {
            Vec y;
            const int p = 1 + mi % 3;
            const auto model =
                random_conjugate_model(derive_seed(cfg.seed, 0x9147, mi), p, 1, 9, &y);
            const auto post = oracle::exact_posterior(model, y);
            const auto qs = sample_posterior_perturbations(post, per_model,
                                                           derive_seed(cfg.seed, 0x9148, mi));
            const auto reports = oracle::pinsker_bound_study(model, y, qs);
            for (size_t qi = 0; qi < reports.size(); ++qi) {
                const auto& r = reports[qi];
                const bool viol = r.error > r.bound + 1e-9;
                violations += viol;
                if (r.bound > 0) max_ratio = std::max(max_ratio, r.error / r.bound);
                csv.row({std::to_string(mi), std::to_string(qi), format_double(r.error),
                         format_double(r.kl), format_double(r.m_const), format_double(r.bound),
                         viol ? "1" : "0"});
            }
        }
        const auto ex = oracle::pinsker_shift_example(0.1);
        summary["violations"] = violations;
        summary["max_error_to_bound_ratio"] = max_ratio;
        summary["shift_example"] = {{"error", ex.error},
                                    {"bound", ex.bound},
                                    {"gap", std::abs(ex.error - ex.bound)}};
        gate_ok = violations == 0 && std::abs(ex.error - ex.bound) <= 1e-12;
        std::cout << "pinsker: " << violations << " violations over " << n_models * per_model
                  << " perturbed posteriors; max error/bound " << max_ratio << "\n";
    } else if (study == "l2_check") {
        const int cases = static_cast<int>(cfg.raw.get_int("study.cases", 1000));
        CsvWriter csv(ms.file("l2_check.csv"), {"case", "m", "k", "residual"});
        double worst = 0.0;
        for (int i = 0; i < cases; ++i) {
            Vec y;
            const int p = 1 + i % 3;
            const auto model = random_conjugate_model(derive_seed(cfg.seed, 0x12C, i), p, 1, 9, &y);
            Rng rng(derive_seed(cfg.seed, 0x12D, i));
            // include the empty-set edges on a fixed schedule
            int k = static_cast<int>(rng() % (y.size() + 1));
            if (i % 17 == 0) k = 0;
            if (i % 23 == 0) k = static_cast<int>(y.size());
            const Vec ytr(y.begin(), y.begin() + k);
            const Vec yval(y.begin() + k, y.end());
            const double resid = oracle::l2_decomposition_check(model, ytr, yval);
            worst = std::max(worst, std::abs(resid));
            csv.row({std::to_string(i), std::to_string(y.size()), std::to_string(k),
                     format_double(resid)});
        }
        summary["max_abs_residual"] = worst;
        gate_ok = worst <= 1e-9;
        std::cout << "l2_check: max |residual| " << worst << " over " << cases << " splits\n";
    } else {  // predictive_optimality
        const int n_tasks = static_cast<int>(cfg.raw.get_int("study.n_tasks", 10000));
        Vec y_unused;
        const auto model =
            random_conjugate_model(derive_seed(cfg.seed, 0x0D7, 0), 1, 8, 8, &y_unused);
        const std::vector<oracle::CandidateRule> rules{{"mean_shift_0.5", 0.5, 1.0},
                                                       {"var_inflate_4x", 0.0, 4.0},
                                                       {"identity_distortion", 0.0, 1.0}};
        const auto scores = oracle::posterior_predictive_optimality_check(
            model, n_tasks, rules, model.m() / 2, derive_seed(cfg.seed, 0x0B7));
        CsvWriter csv(ms.file("predictive_optimality.csv"), {"rule", "mean_score", "p_vs_exact"});
        for (const auto& s : scores) {
            csv.row({s.name, format_double(s.mean_score), format_double(s.p_value_vs_exact)});
            std::cout << "  " << s.name << ": mean score " << s.mean_score << " (p "
                      << s.p_value_vs_exact << ")\n";
        }
        summary["scores"] = json::array();
        for (const auto& s : scores)
            summary["scores"].push_back(
                {{"rule", s.name}, {"mean_score", s.mean_score}, {"p", s.p_value_vs_exact}});
        gate_ok = scores[1].p_value_vs_exact < 0.01 && scores[2].p_value_vs_exact < 0.01 &&
                  scores[0].mean_score >= scores[1].mean_score &&
                  scores[0].mean_score >= scores[2].mean_score;
    }

    summary["pass"] = gate_ok;
    write_file_atomic(ms.file(study + "_summary.json"), summary.dump(2) + "\n");
    ms.finish();
    return gate_ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// neighborhood study
// ---------------------------------------------------------------------------

inline int run_neighborhood(const RunConfig& cfg) {
    const std::string ckpt = cfg.raw.get_string("neighborhood.checkpoint", "");
    if (ckpt.empty() || !fs::exists(ckpt)) {
        std::cerr << "neighborhood: missing checkpoint (neighborhood.checkpoint = " << ckpt << ")\n";
        return kUsage;
    }
    ManifestScope ms(cfg, cfg.out_dir);
    const MetaParams trained = read_checkpoint(ckpt);
    const int n_comb = static_cast<int>(cfg.raw.get_int("neighborhood.combinations", 100));
    const int n_anchors = static_cast<int>(cfg.raw.get_int("neighborhood.anchors", 20));
    const int n_test = static_cast<int>(cfg.raw.get_int("neighborhood.test_tasks", 100));
    const double factor = cfg.raw.get_double("neighborhood.factor", 2.0);

    // anchor points: per-task adapted means from the trained initializer
    std::vector<Vec> anchors;
    for (int a = 0; a < n_anchors; ++a) {
        const SplitTask task = sample_sinusoid(cfg.setting, derive_seed(cfg.seed, 0xA2C, a),
                                               cfg.task_k, cfg.task_k_split);
        if (trained.fixed_variance) {
            anchors.push_back(adapt_point(cfg.arch, trained.theta.mean, task.train,
                                          cfg.meta.inner_test.steps, cfg.meta.inner_test,
                                          cfg.meta.noise_var));
        } else {
            anchors.push_back(vi_fit(trained.theta, trained.theta, cfg.arch, task.train,
                                     cfg.meta.noise_var, cfg.meta.inner_test,
                                     derive_seed(cfg.seed, 0xA2D, a))
                                  .lambda.mean);
        }
    }

    const auto test_tasks = sample_test_tasks(cfg, n_test, 0x7E57A5);
    CsvWriter csv(ms.file("neighborhood.csv"),
                  {"initializer", "step", "mean_mse", "ci95_lo", "ci95_hi"});
    auto emit = [&](const std::string& name, const MetaTestResult& r) {
        for (size_t s = 0; s < r.mean_mse.size(); ++s)
            csv.row({name, std::to_string(s), format_double(r.mean_mse[s]),
                     format_double(r.mean_mse[s] - r.ci95_half[s]),
                     format_double(r.mean_mse[s] + r.ci95_half[s])});
    };

    const MetaTestResult base =
        meta_test(trained, test_tasks, cfg.meta, cfg.arch, derive_seed(cfg.seed, 0x7E57), cfg.jobs);
    emit("trained", base);

    Vec final_mses;
    Rng wrng(derive_seed(cfg.seed, 0xD12));
    std::exponential_distribution<double> ed(1.0);
    for (int c = 0; c < n_comb; ++c) {
        Vec w(anchors.size());
        double tot = 0.0;
        for (auto& wi : w) {
            wi = ed(wrng);
            tot += wi;
        }
        Vec mixed(trained.theta.dim(), 0.0);
        for (size_t a = 0; a < anchors.size(); ++a)
            for (size_t i = 0; i < mixed.size(); ++i) mixed[i] += (w[a] / tot) * anchors[a][i];
        MetaParams init = trained;
        init.theta.mean = mixed;
        const MetaTestResult r = meta_test(init, test_tasks, cfg.meta, cfg.arch,
                                           derive_seed(cfg.seed, 0x7E57), cfg.jobs);
        char name[32];
        std::snprintf(name, sizeof(name), "comb_%04d", c);
        emit(name, r);
        final_mses.push_back(r.mean_mse.back());
    }

    const double comb_mean_final = mean(final_mses);
    const bool retained = comb_mean_final <= factor * base.mean_mse.back();
    json summary{{"study", "neighborhood"},
                 {"seed", cfg.seed},
                 {"trained_final_mse", base.mean_mse.back()},
                 {"trained_initial_mse", base.mean_mse.front()},
                 {"combinations_mean_final_mse", comb_mean_final},
                 {"factor", factor},
                 {"retained_good_performance", retained}};
    write_file_atomic(ms.file("neighborhood_summary.json"), summary.dump(2) + "\n");
    ms.finish();
    std::cout << "neighborhood: trained final MSE " << base.mean_mse.back()
              << ", combinations mean final MSE " << comb_mean_final
              << (retained ? " (retained)" : " (not retained)") << "\n";
    return kOk;
}

}  // namespace gembml::runner
