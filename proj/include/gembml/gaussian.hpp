#pragma once

#include <cmath>

#include "gembml/types.hpp"

namespace gembml {

/// Mean-field Gaussian over a flat parameter vector. Variance is stored as
/// log-variance so that unconstrained gradient updates keep it positive.
struct DiagGaussian {
    Vec mean;
    Vec log_var;

    DiagGaussian() = default;
    DiagGaussian(Vec m, Vec lv) : mean(std::move(m)), log_var(std::move(lv)) {
        require(mean.size() == log_var.size(), "DiagGaussian: mean/log_var size mismatch");
    }
    static DiagGaussian isotropic(size_t dim, double mean_val, double log_var_val) {
        return DiagGaussian(Vec(dim, mean_val), Vec(dim, log_var_val));
    }
    size_t dim() const { return mean.size(); }
};

/// Gradient of an objective with respect to the parameters (mean, log_var) of
/// a DiagGaussian.
struct PriorGrad {
    Vec d_mean;
    Vec d_log_var;

    size_t dim() const { return d_mean.size(); }
    static PriorGrad zeros(size_t dim) { return PriorGrad{Vec(dim, 0.0), Vec(dim, 0.0)}; }

    PriorGrad& operator+=(const PriorGrad& o) {
        for (size_t i = 0; i < d_mean.size(); ++i) {
            d_mean[i] += o.d_mean[i];
            d_log_var[i] += o.d_log_var[i];
        }
        return *this;
    }
    PriorGrad operator-() const {
        PriorGrad g = *this;
        for (auto& x : g.d_mean) x = -x;
        for (auto& x : g.d_log_var) x = -x;
        return g;
    }
    double norm_mean() const { return norm2(d_mean); }
    double norm_log_var() const { return norm2(d_log_var); }
};

inline void check_same_dim(const DiagGaussian& a, const DiagGaussian& b) {
    require(a.dim() == b.dim(), "DiagGaussian: dimension mismatch");
}

inline double log_pdf(const DiagGaussian& q, const Vec& theta) {
    require(theta.size() == q.dim(), "log_pdf: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
        const double d = theta[i] - q.mean[i];
        s += -0.5 * kLog2Pi - 0.5 * q.log_var[i] - d * d / (2.0 * std::exp(q.log_var[i]));
    }
    return s;
}

/// Reparameterized draw: theta = mean + exp(log_var/2) * eps.
inline Vec sample(const DiagGaussian& q, const Vec& eps) {
    require(eps.size() == q.dim(), "sample: dimension mismatch");
    Vec out(q.dim());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = q.mean[i] + std::exp(0.5 * q.log_var[i]) * eps[i];
    return out;
}

/// KL(q || p) for diagonal Gaussians, in closed form.
inline double kl(const DiagGaussian& q, const DiagGaussian& p) {
    check_same_dim(q, p);
    double s = 0.0;
    for (size_t i = 0; i < q.dim(); ++i) {
        const double lq = q.log_var[i], lp = p.log_var[i];
        const double dm = p.mean[i] - q.mean[i];
        s += 0.5 * (std::exp(lq - lp) + dm * dm * std::exp(-lp) - 1.0 + lp - lq);
    }
    return s;
}

/// Gradient of KL(q || p) with respect to q's (mean, log_var); analytic.
inline PriorGrad kl_grad_wrt_q(const DiagGaussian& q, const DiagGaussian& p) {
    check_same_dim(q, p);
    PriorGrad g = PriorGrad::zeros(q.dim());
    for (size_t i = 0; i < q.dim(); ++i) {
        g.d_mean[i] = (q.mean[i] - p.mean[i]) * std::exp(-p.log_var[i]);
        g.d_log_var[i] = 0.5 * (std::exp(q.log_var[i] - p.log_var[i]) - 1.0);
    }
    return g;
}

/// E_{theta ~ posterior} of the prior score d/dTheta log P(theta; Theta),
/// in closed form. This is the Gradient-EM meta-gradient core: when the
/// posterior is the exact Bayes posterior it equals the gradient of the
/// marginal log-likelihood with respect to the prior parameters.
inline PriorGrad expected_prior_score(const DiagGaussian& posterior, const DiagGaussian& prior) {
    check_same_dim(posterior, prior);
    PriorGrad g = PriorGrad::zeros(prior.dim());
    for (size_t i = 0; i < prior.dim(); ++i) {
        const double inv_vp = std::exp(-prior.log_var[i]);
        const double dm = posterior.mean[i] - prior.mean[i];
        g.d_mean[i] = dm * inv_vp;
        // variance ratio via exp of the log difference so the self-score is
        // exactly zero when posterior == prior
        g.d_log_var[i] =
            0.5 * (std::exp(posterior.log_var[i] - prior.log_var[i]) + dm * dm * inv_vp - 1.0);
    }
    return g;
}

/// Point-mass limit of expected_prior_score: the posterior collapsed onto
/// posterior_mean with the prior variance held fixed. d_log_var is discarded.
inline PriorGrad delta_limit_score(const Vec& posterior_mean, const DiagGaussian& prior) {
    require(posterior_mean.size() == prior.dim(), "delta_limit_score: dimension mismatch");
    PriorGrad g = PriorGrad::zeros(prior.dim());
    for (size_t i = 0; i < prior.dim(); ++i)
        g.d_mean[i] = (posterior_mean[i] - prior.mean[i]) * std::exp(-prior.log_var[i]);
    return g;
}

}  // namespace gembml
