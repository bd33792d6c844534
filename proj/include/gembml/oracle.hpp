#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gembml/gaussian.hpp"
#include "gembml/rng.hpp"
#include "gembml/stats.hpp"

namespace gembml::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd to_eigen(const Vec& v) {
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Vec from_eigen(const VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

/// Gaussian-linear model y = X theta + eps with a diagonal Gaussian prior on
/// theta and i.i.d. observation noise. Everything downstream of it is exact,
/// which is what makes it the ground truth for the gradient estimators.
struct ConjugateModel {
    MatrixXd X;        // m x p design
    double noise_var;  // sigma_n^2 > 0
    DiagGaussian prior;

    int p() const { return static_cast<int>(X.cols()); }
    int m() const { return static_cast<int>(X.rows()); }
    void validate() const {
        require(noise_var > 0.0, "ConjugateModel: noise_var must be positive");
        require(prior.dim() == static_cast<size_t>(X.cols()), "ConjugateModel: prior/design mismatch");
    }
    Vec prior_var() const {
        Vec v(prior.dim());
        for (size_t i = 0; i < v.size(); ++i) v[i] = std::exp(prior.log_var[i]);
        return v;
    }
};

struct FullGaussian {
    VectorXd mean;
    MatrixXd cov;
};

inline FullGaussian exact_posterior(const ConjugateModel& model, const Vec& y) {
    model.validate();
    require(static_cast<int>(y.size()) == model.m(), "exact_posterior: y length mismatch");
    const int p = model.p();
    MatrixXd prec = MatrixXd::Zero(p, p);
    VectorXd rhs(p);
    const Vec pv = model.prior_var();
    for (int j = 0; j < p; ++j) {
        prec(j, j) = 1.0 / pv[j];
        rhs(j) = model.prior.mean[j] / pv[j];
    }
    if (model.m() > 0) {
        prec += model.X.transpose() * model.X / model.noise_var;
        rhs += model.X.transpose() * to_eigen(y) / model.noise_var;
    }
    Eigen::LLT<MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) throw numeric_error("exact_posterior: precision not SPD");
    FullGaussian post;
    post.cov = llt.solve(MatrixXd::Identity(p, p));
    post.mean = llt.solve(rhs);
    return post;
}

/// Prior-predictive covariance X diag(prior_var) X^T + noise_var I.
inline MatrixXd predictive_cov(const ConjugateModel& model) {
    const Vec pv = model.prior_var();
    MatrixXd S = model.X * to_eigen(pv).asDiagonal() * model.X.transpose();
    S += model.noise_var * MatrixXd::Identity(model.m(), model.m());
    return S;
}

inline double mvn_log_pdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
    const int n = static_cast<int>(x.size());
    if (n == 0) return 0.0;
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw numeric_error("mvn_log_pdf: covariance not SPD");
    const VectorXd r = x - mean;
    const VectorXd w = llt.solve(r);
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * n * kLog2Pi - 0.5 * logdet - 0.5 * r.dot(w);
}

/// log P(y; Theta) = log N(y; X mu0, X Sigma0 X^T + noise_var I). Zero for m=0.
inline double exact_log_marginal(const ConjugateModel& model, const Vec& y) {
    model.validate();
    require(static_cast<int>(y.size()) == model.m(), "exact_log_marginal: y length mismatch");
    if (model.m() == 0) return 0.0;
    return mvn_log_pdf(to_eigen(y), model.X * to_eigen(model.prior.mean), predictive_cov(model));
}

/// Analytic gradient of exact_log_marginal with respect to the prior's
/// (mean, log-variance). With S the predictive covariance, r = y - X mu0 and
/// a = S^{-1} r:
///   d/dmu0      = X^T a
///   d/dlogvar_j = var_j * ( (x_j . a)^2 - x_j . S^{-1} x_j ) / 2
inline PriorGrad exact_marginal_grad(const ConjugateModel& model, const Vec& y) {
    model.validate();
    require(static_cast<int>(y.size()) == model.m(), "exact_marginal_grad: y length mismatch");
    const int p = model.p();
    PriorGrad g = PriorGrad::zeros(p);
    if (model.m() == 0) return g;
    Eigen::LLT<MatrixXd> llt(predictive_cov(model));
    if (llt.info() != Eigen::Success) throw numeric_error("exact_marginal_grad: covariance not SPD");
    const VectorXd r = to_eigen(y) - model.X * to_eigen(model.prior.mean);
    const VectorXd a = llt.solve(r);
    const Vec pv = model.prior_var();
    const VectorXd dmu = model.X.transpose() * a;
    for (int j = 0; j < p; ++j) {
        const VectorXd xj = model.X.col(j);
        const double xa = xj.dot(a);
        const double xSx = xj.dot(llt.solve(xj));
        g.d_mean[j] = dmu(j);
        g.d_log_var[j] = pv[j] * 0.5 * (xa * xa - xSx);
    }
    return g;
}

/// Full-covariance generalization of expected_prior_score: only the diagonal
/// of the posterior covariance enters because the prior factorizes.
inline PriorGrad expected_prior_score_full(const FullGaussian& posterior, const DiagGaussian& prior) {
    const int p = static_cast<int>(prior.dim());
    require(posterior.mean.size() == p, "expected_prior_score_full: dimension mismatch");
    PriorGrad g = PriorGrad::zeros(p);
    for (int j = 0; j < p; ++j) {
        const double inv_vp = std::exp(-prior.log_var[j]);
        const double dm = posterior.mean(j) - prior.mean[j];
        g.d_mean[j] = dm * inv_vp;
        g.d_log_var[j] = 0.5 * ((posterior.cov(j, j) + dm * dm) * inv_vp - 1.0);
    }
    return g;
}

/// KL(q || p) where q has full covariance and p is the diagonal reference.
inline double kl_full_vs_full(const FullGaussian& q, const FullGaussian& p) {
    const int n = static_cast<int>(q.mean.size());
    Eigen::LLT<MatrixXd> lltp(p.cov);
    if (lltp.info() != Eigen::Success) throw numeric_error("kl_full: covariance not SPD");
    const MatrixXd pinv_q = lltp.solve(q.cov);
    const VectorXd dm = p.mean - q.mean;
    double logdet_p = 0.0, logdet_q = 0.0;
    Eigen::LLT<MatrixXd> lltq(q.cov);
    if (lltq.info() != Eigen::Success) throw numeric_error("kl_full: q covariance not SPD");
    for (int i = 0; i < n; ++i) {
        logdet_p += 2.0 * std::log(lltp.matrixL()(i, i));
        logdet_q += 2.0 * std::log(lltq.matrixL()(i, i));
    }
    return 0.5 * (pinv_q.trace() + dm.dot(lltp.solve(dm)) - n + logdet_p - logdet_q);
}

inline FullGaussian to_full(const DiagGaussian& q) {
    const int n = static_cast<int>(q.dim());
    FullGaussian f;
    f.mean = to_eigen(q.mean);
    f.cov = MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) f.cov(i, i) = std::exp(q.log_var[i]);
    return f;
}

/// ELBO with the likelihood expectation taken analytically:
///   E_q[log N(y; X theta, sn2 I)] - KL(q || prior).
inline double analytic_elbo(const ConjugateModel& model, const Vec& y, const FullGaussian& q) {
    model.validate();
    const int m = model.m();
    double lik = 0.0;
    if (m > 0) {
        const VectorXd r = to_eigen(y) - model.X * q.mean;
        const double quad = r.squaredNorm() + (model.X * q.cov * model.X.transpose()).trace();
        lik = -quad / (2.0 * model.noise_var) - 0.5 * m * std::log(2.0 * M_PI * model.noise_var);
    }
    FullGaussian prior_full = to_full(model.prior);
    return lik - kl_full_vs_full(q, prior_full);
}

inline double analytic_elbo_diag(const ConjugateModel& model, const Vec& y, const DiagGaussian& q) {
    return analytic_elbo(model, y, to_full(q));
}

// ---------------------------------------------------------------------------
// Deterministic VI recursion on the conjugate model (diagonal q) and the two
// meta-gradient estimators evaluated along it. lambda starts at the prior;
// every expectation is closed form, so trajectories are exactly reproducible.
// ---------------------------------------------------------------------------

struct UnrolledVI {
    const ConjugateModel* model;
    VectorXd y;
    VectorXd c;      // diag(X^T X)
    MatrixXd XtX;
    VectorXd Xty;
    double lr_mean;  // per-coordinate step sizes (shared scalars)
    double lr_lv;

    Vec mu, lv;          // current lambda
    MatrixXd J;          // d lambda / d Theta, (2p) x (2p), order (mu..., lv...)

    UnrolledVI(const ConjugateModel& mdl, const Vec& yv, double lr_mean_, double lr_lv_)
        : model(&mdl), y(to_eigen(yv)), lr_mean(lr_mean_), lr_lv(lr_lv_) {
        const int p = mdl.p();
        XtX = mdl.X.transpose() * mdl.X;
        Xty = mdl.X.transpose() * y;
        c = XtX.diagonal();
        mu = mdl.prior.mean;
        lv = mdl.prior.log_var;
        J = MatrixXd::Identity(2 * p, 2 * p);
    }

    // gradient of the analytic ELBO with respect to lambda = (mu, lv)
    void elbo_grad_lambda(Vec& gmu, Vec& glv) const {
        const int p = model->p();
        const VectorXd mud = to_eigen(mu);
        const VectorXd gm = (Xty - XtX * mud) / model->noise_var;
        gmu.resize(p);
        glv.resize(p);
        for (int j = 0; j < p; ++j) {
            const double Lj = model->prior.log_var[j];
            gmu[j] = gm(j) - (mu[j] - model->prior.mean[j]) * std::exp(-Lj);
            glv[j] = -c(j) * std::exp(lv[j]) / (2.0 * model->noise_var) -
                     0.5 * (std::exp(lv[j] - Lj) - 1.0);
        }
    }

    void step() {
        const int p = model->p();
        Vec gmu, glv;
        elbo_grad_lambda(gmu, glv);

        // Jacobian blocks of the update map F(lambda, Theta) = lambda + lr * grad
        MatrixXd A = MatrixXd::Identity(2 * p, 2 * p);
        MatrixXd B = MatrixXd::Zero(2 * p, 2 * p);
        for (int i = 0; i < p; ++i) {
            const double Li = model->prior.log_var[i];
            for (int j = 0; j < p; ++j) A(i, j) += lr_mean * (-XtX(i, j) / model->noise_var);
            A(i, i) += lr_mean * (-std::exp(-Li));
            B(i, i) = lr_mean * std::exp(-Li);                                  // dFmu/dM
            B(i, p + i) = lr_mean * (mu[i] - model->prior.mean[i]) * std::exp(-Li);  // dFmu/dL
            A(p + i, p + i) += lr_lv * (-c(i) * std::exp(lv[i]) / (2.0 * model->noise_var) -
                                        0.5 * std::exp(lv[i] - Li));
            B(p + i, p + i) = lr_lv * 0.5 * std::exp(lv[i] - Li);               // dFl/dL
        }
        J = A * J + B;
        for (int i = 0; i < p; ++i) {
            mu[i] += lr_mean * gmu[i];
            lv[i] += lr_lv * glv[i];
        }
        if (!all_finite(mu) || !all_finite(lv))
            throw numeric_error("UnrolledVI: divergent recursion (learning rate too large)");
    }

    DiagGaussian lambda() const { return DiagGaussian(mu, lv); }

    /// The backprop-through-the-unroll estimator:
    ///   d/dTheta ELBO(lambda_T(Theta); Theta) = J^T dELBO/dlambda + dELBO/dTheta,
    /// where the partial with respect to Theta is the expected prior score.
    PriorGrad elbo_gradient() const {
        const int p = model->p();
        Vec gmu, glv;
        elbo_grad_lambda(gmu, glv);
        VectorXd u(2 * p);
        for (int j = 0; j < p; ++j) {
            u(j) = gmu[j];
            u(p + j) = glv[j];
        }
        const VectorXd path = J.transpose() * u;
        PriorGrad part = expected_prior_score(lambda(), model->prior);
        for (int j = 0; j < p; ++j) {
            part.d_mean[j] += path(j);
            part.d_log_var[j] += path(p + j);
        }
        return part;
    }

    PriorGrad gem_gradient() const { return expected_prior_score(lambda(), model->prior); }
};

/// Stable default step sizes: eta over the mean-block curvature, and eta over
/// the log-variance curvature at the optimum (which is exactly 1/2).
inline std::pair<double, double> stable_vi_rates(const ConjugateModel& model, double eta) {
    double hmax = 0.0;
    const Vec pv = model.prior_var();
    const MatrixXd XtX = model.X.transpose() * model.X;
    for (int j = 0; j < model.p(); ++j)
        hmax = std::max(hmax, XtX(j, j) / model.noise_var + 1.0 / pv[j]);
    return {eta / hmax, eta / 0.5};
}

inline PriorGrad elbo_gradient_estimate(const ConjugateModel& model, const Vec& y, int T,
                                        double lr_mean, double lr_lv) {
    require(T >= 0, "elbo_gradient_estimate: T must be >= 0");
    UnrolledVI vi(model, y, lr_mean, lr_lv);
    for (int t = 0; t < T; ++t) vi.step();
    return vi.elbo_gradient();
}

struct GradErrorPoint {
    int T;
    double gem_error;
    double elbo_error;
};

/// Both estimators evaluated on the same deterministic lambda trajectory,
/// errors against the exact marginal gradient.
inline std::vector<GradErrorPoint> grad_error_curve(const ConjugateModel& model, const Vec& y,
                                                    const std::vector<int>& Ts, double lr_mean,
                                                    double lr_lv) {
    const PriorGrad exact = exact_marginal_grad(model, y);
    auto err = [&](const PriorGrad& g) {
        double s = 0.0;
        for (size_t i = 0; i < g.d_mean.size(); ++i) {
            s += sq(g.d_mean[i] - exact.d_mean[i]);
            s += sq(g.d_log_var[i] - exact.d_log_var[i]);
        }
        return std::sqrt(s);
    };
    UnrolledVI vi(model, y, lr_mean, lr_lv);
    std::vector<GradErrorPoint> out;
    int done = 0;
    std::vector<int> sorted = Ts;
    std::sort(sorted.begin(), sorted.end());
    for (int T : sorted) {
        for (; done < T; ++done) vi.step();
        out.push_back({T, err(vi.gem_gradient()), err(vi.elbo_gradient())});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Theory studies
// ---------------------------------------------------------------------------

struct BoundReport {
    double error = 0.0;      // || score(Q) - exact gradient ||
    double kl = 0.0;         // KL(Q || exact posterior)
    double m_const = 0.0;    // sqrt(E_P || prior score ||^2)
    double bound = 0.0;      // sqrt(2) * M * sqrt(KL)
};

/// sqrt of the second moment of the prior score under the exact posterior;
/// Gaussian fourth moments give it in closed form.
inline double score_second_moment_sqrt(const ConjugateModel& model, const FullGaussian& post) {
    double msq = 0.0;
    const Vec pv = model.prior_var();
    for (int j = 0; j < model.p(); ++j) {
        const double mj = post.mean(j) - model.prior.mean[j];
        const double sj = post.cov(j, j);
        const double e2 = sj + mj * mj;
        const double e4 = mj * mj * mj * mj + 6.0 * mj * mj * sj + 3.0 * sj * sj;
        msq += e2 / (pv[j] * pv[j]);
        msq += 0.25 * (e4 / (pv[j] * pv[j]) - 2.0 * e2 / pv[j] + 1.0);
    }
    return std::sqrt(msq);
}

inline std::vector<BoundReport> pinsker_bound_study(const ConjugateModel& model, const Vec& y,
                                                    const std::vector<DiagGaussian>& perturbations) {
    const FullGaussian post = exact_posterior(model, y);
    const PriorGrad exact = exact_marginal_grad(model, y);
    const double M = score_second_moment_sqrt(model, post);
    std::vector<BoundReport> out;
    out.reserve(perturbations.size());
    for (const auto& q : perturbations) {
        require(q.dim() == static_cast<size_t>(model.p()), "pinsker_bound_study: dimension mismatch");
        const PriorGrad g = expected_prior_score(q, model.prior);
        double errsq = 0.0;
        for (int j = 0; j < model.p(); ++j) {
            errsq += sq(g.d_mean[j] - exact.d_mean[j]);
            errsq += sq(g.d_log_var[j] - exact.d_log_var[j]);
        }
        BoundReport r;
        r.error = std::sqrt(errsq);
        r.kl = kl_full_vs_full(to_full(q), post);
        r.m_const = M;
        r.bound = std::sqrt(2.0) * M * std::sqrt(std::max(0.0, r.kl));
        out.push_back(r);
    }
    return out;
}

/// The generic-integrand case of the bound with f(Z) = Z, P = N(0,1),
/// Q = N(shift, 1): error and bound coincide exactly at |shift|.
inline BoundReport pinsker_shift_example(double shift) {
    BoundReport r;
    r.error = std::abs(shift);           // |E_Q Z - E_P Z|
    r.kl = 0.5 * shift * shift;          // KL(N(shift,1) || N(0,1))
    r.m_const = 1.0;                     // sqrt(E_P Z^2)
    r.bound = std::sqrt(2.0) * r.m_const * std::sqrt(r.kl);
    return r;
}

struct VarianceRatioResult {
    double ratio = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double predicted = 0.0;  // m / (m - k)
    int n_tasks = 0;
    int n_replicates = 0;
};

/// Monte Carlo comparison of the two empirical-Bayes estimators' variances on
/// the 1-D all-ones-design family. Per replicate, the prior-mean estimate
/// maximizing sum_tau L^[1] (resp. L^[2]) is closed form with the variance
/// parameters held at truth:
///   L1: mean over tasks of ybar_m
///   L2: mean over tasks of (a_m ybar_m - a_k ybar_k) / (a_m - a_k),
/// a_j = j / (j v* + noise_var). Returns var(L2)/var(L1) across replicates
/// with a bootstrap percentile interval.
inline VarianceRatioResult variance_ratio_study(int k, int m, int n_tasks, int n_replicates,
                                                uint64_t rng_seed, double prior_mean = 1.5,
                                                double prior_var = 0.002, double noise_var = 1.0) {
    require(k >= 0 && k < m, "variance_ratio_study: need 0 <= k < m (validation data required)");
    require(n_tasks >= 100 && n_replicates >= 100,
            "variance_ratio_study: n_tasks and n_replicates must be >= 100");
    const double am = m / (m * prior_var + noise_var);
    const double ak = k > 0 ? k / (k * prior_var + noise_var) : 0.0;

    Vec est1(n_replicates), est2(n_replicates);
    for (int r = 0; r < n_replicates; ++r) {
        Rng rng(derive_seed(rng_seed, 0x5652, static_cast<uint64_t>(r)));
        std::normal_distribution<double> nd(0.0, 1.0);
        double s1 = 0.0, s2 = 0.0;
        for (int t = 0; t < n_tasks; ++t) {
            const double theta = prior_mean + std::sqrt(prior_var) * nd(rng);
            double sum_all = 0.0, sum_k = 0.0;
            for (int i = 0; i < m; ++i) {
                const double yi = theta + std::sqrt(noise_var) * nd(rng);
                sum_all += yi;
                if (i < k) sum_k += yi;
            }
            const double ybar_m = sum_all / m;
            s1 += ybar_m;
            if (k > 0) {
                const double ybar_k = sum_k / k;
                s2 += (am * ybar_m - ak * ybar_k) / (am - ak);
            } else {
                s2 += ybar_m;
            }
        }
        est1[r] = s1 / n_tasks;
        est2[r] = s2 / n_tasks;
    }

    VarianceRatioResult out;
    out.predicted = static_cast<double>(m) / (m - k);
    out.n_tasks = n_tasks;
    out.n_replicates = n_replicates;
    out.ratio = sample_variance(est2) / sample_variance(est1);

    // paired bootstrap over replicates
    const int B = 1000;
    Vec ratios(B);
    Rng brng(derive_seed(rng_seed, 0xB007));
    std::uniform_int_distribution<int> pick(0, n_replicates - 1);
    Vec b1(n_replicates), b2(n_replicates);
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < n_replicates; ++i) {
            const int j = pick(brng);
            b1[i] = est1[j];
            b2[i] = est2[j];
        }
        ratios[b] = sample_variance(b2) / sample_variance(b1);
    }
    std::sort(ratios.begin(), ratios.end());
    out.ci_lo = quantile_sorted(ratios, 0.025);
    out.ci_hi = quantile_sorted(ratios, 0.975);
    return out;
}

/// Residual of the identity
///   log P(y_val | y_tr; Theta) - [log P(y_tr ++ y_val; Theta) - log P(y_tr; Theta)],
/// with the left side computed directly as the log posterior-predictive.
inline double l2_decomposition_check(const ConjugateModel& model, const Vec& y_tr, const Vec& y_val) {
    const int ntr = static_cast<int>(y_tr.size());
    const int nval = static_cast<int>(y_val.size());
    require(ntr + nval == model.m(), "l2_decomposition_check: split sizes must sum to m");
    if (nval == 0) return 0.0;

    const MatrixXd Xtr = model.X.topRows(ntr);
    const MatrixXd Xval = model.X.bottomRows(nval);

    ConjugateModel tr_model{Xtr, model.noise_var, model.prior};
    const FullGaussian post = exact_posterior(tr_model, y_tr);
    const MatrixXd pred_cov = Xval * post.cov * Xval.transpose() +
                              model.noise_var * MatrixXd::Identity(nval, nval);
    const double lhs = mvn_log_pdf(to_eigen(y_val), Xval * post.mean, pred_cov);

    Vec y_all = y_tr;
    y_all.insert(y_all.end(), y_val.begin(), y_val.end());
    const double rhs = exact_log_marginal(model, y_all) - exact_log_marginal(tr_model, y_tr);
    return lhs - rhs;
}

/// Decision rule for meta-testing: distortions applied to the exact posterior.
struct CandidateRule {
    std::string name;
    double mean_shift = 0.0;
    double var_scale = 1.0;
};

struct RuleScore {
    std::string name;
    double mean_score = 0.0;
    double p_value_vs_exact = 1.0;  // one-sided paired test, H1: exact > rule
};

/// Scores E_tau L(g(D_tr); D_val) by Monte Carlo over tasks drawn from the
/// model's own prior, for the exact-posterior rule and each distorted rule.
/// L(Q; D_val) is the exact Gaussian predictive log-density under Q.
inline std::vector<RuleScore> posterior_predictive_optimality_check(
    const ConjugateModel& model, int n_tasks, const std::vector<CandidateRule>& rules, int k_split,
    uint64_t rng_seed) {
    model.validate();
    require(k_split >= 0 && k_split < model.m(), "optimality_check: need validation rows");
    const int nval = model.m() - k_split;
    const MatrixXd Xtr = model.X.topRows(k_split);
    const MatrixXd Xval = model.X.bottomRows(nval);
    ConjugateModel tr_model{Xtr, model.noise_var, model.prior};

    std::vector<Vec> scores(rules.size() + 1, Vec(n_tasks));
    const Vec pv = model.prior_var();
    for (int t = 0; t < n_tasks; ++t) {
        Rng rng(derive_seed(rng_seed, 0x0B7, static_cast<uint64_t>(t)));
        std::normal_distribution<double> nd(0.0, 1.0);
        VectorXd theta(model.p());
        for (int j = 0; j < model.p(); ++j)
            theta(j) = model.prior.mean[j] + std::sqrt(pv[j]) * nd(rng);
        VectorXd y_all(model.m());
        for (int i = 0; i < model.m(); ++i)
            y_all(i) = model.X.row(i).dot(theta) + std::sqrt(model.noise_var) * nd(rng);
        const Vec ytr = from_eigen(y_all.head(k_split));
        const VectorXd yval = y_all.tail(nval);

        const FullGaussian post = exact_posterior(tr_model, ytr);
        auto score_with = [&](double shift, double vscale) {
            FullGaussian q = post;
            for (int j = 0; j < model.p(); ++j) q.mean(j) += shift;
            q.cov *= vscale;
            const MatrixXd pc = Xval * q.cov * Xval.transpose() +
                                model.noise_var * MatrixXd::Identity(nval, nval);
            return mvn_log_pdf(yval, Xval * q.mean, pc);
        };
        scores[0][t] = score_with(0.0, 1.0);
        for (size_t r = 0; r < rules.size(); ++r)
            scores[r + 1][t] = score_with(rules[r].mean_shift, rules[r].var_scale);
    }

    std::vector<RuleScore> out;
    out.push_back({"exact_posterior", mean(scores[0]), 1.0});
    for (size_t r = 0; r < rules.size(); ++r) {
        Vec diff(n_tasks);
        for (int t = 0; t < n_tasks; ++t) diff[t] = scores[0][t] - scores[r + 1][t];
        out.push_back({rules[r].name, mean(scores[r + 1]), paired_one_sided_p(diff)});
    }
    return out;
}

}  // namespace gembml::oracle
