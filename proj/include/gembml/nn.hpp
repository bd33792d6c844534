#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gembml/types.hpp"

namespace gembml {

enum class Activation { Relu, Tanh, Identity };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation: " + s);
}

/// Fixed feedforward MLP description: layer sizes (input, hidden..., output)
/// and the hidden-layer activation. The output layer is always linear.
struct ArchSpec {
    std::vector<int> layer_sizes;
    Activation activation = Activation::Relu;

    ArchSpec() = default;
    ArchSpec(std::vector<int> sizes, Activation act) : layer_sizes(std::move(sizes)), activation(act) {
        validate();
    }
    void validate() const {
        require(layer_sizes.size() >= 2, "ArchSpec: need at least input and output layer");
        for (int s : layer_sizes) require(s >= 1, "ArchSpec: layer sizes must be >= 1");
    }
    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
};

/// Flat layout: per layer, weight matrix (row-major, n_out x n_in) then bias.
inline size_t parameter_count(const ArchSpec& arch) {
    size_t n = 0;
    for (size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l)
        n += static_cast<size_t>(arch.layer_sizes[l] + 1) * arch.layer_sizes[l + 1];
    return n;
}

struct Dataset {
    std::vector<Vec> x;  // K rows of input_size
    std::vector<Vec> y;  // K rows of output_size

    size_t size() const { return x.size(); }
    bool empty() const { return x.empty(); }
    void push(Vec xi, Vec yi) {
        x.push_back(std::move(xi));
        y.push_back(std::move(yi));
    }
};

inline void check_dataset(const ArchSpec& arch, const Dataset& d) {
    require(d.x.size() == d.y.size(), "Dataset: x/y row count mismatch");
    for (const auto& r : d.x)
        require(r.size() == static_cast<size_t>(arch.input_size()), "Dataset: input width mismatch");
    for (const auto& r : d.y)
        require(r.size() == static_cast<size_t>(arch.output_size()), "Dataset: output width mismatch");
}

namespace detail {

inline double act_fwd(Activation a, double z) {
    switch (a) {
        case Activation::Relu: return z > 0.0 ? z : 0.0;  // subgradient at 0 is 0
        case Activation::Tanh: return std::tanh(z);
        case Activation::Identity: return z;
    }
    return z;
}

inline double act_deriv(Activation a, double z) {
    switch (a) {
        case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

/// Scratch buffers for one forward/backward pass; reused across data points.
struct MlpWorkspace {
    std::vector<Vec> pre;   // per layer, pre-activations z
    std::vector<Vec> post;  // per layer, activations a (post[0] = input copy)
    std::vector<Vec> delta;

    void resize(const ArchSpec& arch) {
        const int L = arch.num_layers();
        pre.assign(L, {});
        delta.assign(L, {});
        post.assign(L + 1, {});
        for (int l = 0; l < L; ++l) {
            pre[l].assign(arch.layer_sizes[l + 1], 0.0);
            delta[l].assign(arch.layer_sizes[l + 1], 0.0);
        }
        for (int l = 0; l <= L; ++l) post[l].assign(arch.layer_sizes[l], 0.0);
    }
};

inline void forward_pass(const ArchSpec& arch, const Vec& params, const Vec& x, MlpWorkspace& ws) {
    const int L = arch.num_layers();
    ws.post[0] = x;
    size_t off = 0;
    for (int l = 0; l < L; ++l) {
        const int nin = arch.layer_sizes[l], nout = arch.layer_sizes[l + 1];
        const double* W = params.data() + off;
        const double* b = params.data() + off + static_cast<size_t>(nin) * nout;
        const Vec& a = ws.post[l];
        Vec& z = ws.pre[l];
        for (int j = 0; j < nout; ++j) {
            double s = b[j];
            const double* wrow = W + static_cast<size_t>(j) * nin;
            for (int i = 0; i < nin; ++i) s += wrow[i] * a[i];
            z[j] = s;
        }
        const bool hidden = (l + 1 < L);
        Vec& out = ws.post[l + 1];
        for (int j = 0; j < nout; ++j) out[j] = hidden ? act_fwd(arch.activation, z[j]) : z[j];
        off += static_cast<size_t>(nin + 1) * nout;
    }
}

}  // namespace detail

inline Vec forward(const ArchSpec& arch, const Vec& params, const Vec& x) {
    arch.validate();
    require(params.size() == parameter_count(arch), "forward: parameter vector length mismatch");
    require(x.size() == static_cast<size_t>(arch.input_size()), "forward: input width mismatch");
    detail::MlpWorkspace ws;
    ws.resize(arch);
    detail::forward_pass(arch, params, x, ws);
    return ws.post.back();
}

struct NllResult {
    double nll = 0.0;
    Vec grad;
};

/// Gaussian-likelihood negative log-likelihood and its exact parameter
/// gradient (manual reverse accumulation):
///   nll = sum_i ||y_i - f(x_i)||^2 / (2*noise_var) + (K*n_out/2)*ln(2*pi*noise_var)
inline NllResult nll_and_grad(const ArchSpec& arch, const Vec& params, const Dataset& data,
                              double noise_var) {
    arch.validate();
    require(params.size() == parameter_count(arch), "nll_and_grad: parameter vector length mismatch");
    require(!data.empty(), "nll_and_grad: empty dataset");
    require(noise_var > 0.0, "nll_and_grad: noise_var must be positive");
    check_dataset(arch, data);

    const int L = arch.num_layers();
    NllResult res;
    res.grad.assign(params.size(), 0.0);
    detail::MlpWorkspace ws;
    ws.resize(arch);

    double sq_sum = 0.0;
    for (size_t k = 0; k < data.size(); ++k) {
        detail::forward_pass(arch, params, data.x[k], ws);
        // dnll/dz at the (linear) output layer
        Vec& dout = ws.delta[L - 1];
        for (int j = 0; j < arch.output_size(); ++j) {
            const double r = ws.post[L][j] - data.y[k][j];
            sq_sum += r * r;
            dout[j] = r / noise_var;
        }
        // walk layers backwards; accumulate weight/bias grads
        size_t off = params.size();
        for (int l = L - 1; l >= 0; --l) {
            const int nin = arch.layer_sizes[l], nout = arch.layer_sizes[l + 1];
            off -= static_cast<size_t>(nin + 1) * nout;
            const double* W = params.data() + off;
            double* gW = res.grad.data() + off;
            double* gb = res.grad.data() + off + static_cast<size_t>(nin) * nout;
            const Vec& a = ws.post[l];
            const Vec& d = ws.delta[l];
            for (int j = 0; j < nout; ++j) {
                gb[j] += d[j];
                double* grow = gW + static_cast<size_t>(j) * nin;
                for (int i = 0; i < nin; ++i) grow[i] += d[j] * a[i];
            }
            if (l > 0) {
                Vec& dprev = ws.delta[l - 1];
                const int nprev = arch.layer_sizes[l];
                for (int i = 0; i < nprev; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < nout; ++j)
                        s += W[static_cast<size_t>(j) * nin + i] * d[j];
                    dprev[i] = s * detail::act_deriv(arch.activation, ws.pre[l - 1][i]);
                }
            }
        }
    }
    const double K = static_cast<double>(data.size());
    res.nll = sq_sum / (2.0 * noise_var) +
              0.5 * K * arch.output_size() * std::log(2.0 * M_PI * noise_var);
    if (!std::isfinite(res.nll) || !all_finite(res.grad))
        throw numeric_error("nll_and_grad: non-finite result");
    return res;
}

inline double nll(const ArchSpec& arch, const Vec& params, const Dataset& data, double noise_var) {
    return nll_and_grad(arch, params, data, noise_var).nll;
}

/// Central-difference gradient; the testing oracle for every analytic gradient.
inline Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& params,
                            double eps) {
    require(eps > 0.0, "finite_diff_grad: eps must be positive");
    Vec g(params.size());
    Vec p = params;
    for (size_t i = 0; i < p.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + eps;
        const double fp = f(p);
        p[i] = orig - eps;
        const double fm = f(p);
        p[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw numeric_error("finite_diff_grad: non-finite function value");
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

/// Pack layer matrices/biases into the flat layout (test and setup helper).
inline Vec pack_params(const ArchSpec& arch, const std::vector<std::vector<Vec>>& weights,
                       const std::vector<Vec>& biases) {
    Vec out;
    out.reserve(parameter_count(arch));
    for (int l = 0; l < arch.num_layers(); ++l) {
        for (const auto& row : weights[l])
            for (double w : row) out.push_back(w);
        for (double b : biases[l]) out.push_back(b);
    }
    require(out.size() == parameter_count(arch), "pack_params: shape mismatch");
    return out;
}

struct LayerParams {
    std::vector<Vec> weight;  // n_out rows of n_in
    Vec bias;
};

inline std::vector<LayerParams> unpack_params(const ArchSpec& arch, const Vec& params) {
    require(params.size() == parameter_count(arch), "unpack_params: length mismatch");
    std::vector<LayerParams> out(arch.num_layers());
    size_t off = 0;
    for (int l = 0; l < arch.num_layers(); ++l) {
        const int nin = arch.layer_sizes[l], nout = arch.layer_sizes[l + 1];
        out[l].weight.assign(nout, Vec(nin));
        for (int j = 0; j < nout; ++j)
            for (int i = 0; i < nin; ++i) out[l].weight[j][i] = params[off + static_cast<size_t>(j) * nin + i];
        off += static_cast<size_t>(nin) * nout;
        out[l].bias.assign(params.begin() + off, params.begin() + off + nout);
        off += nout;
    }
    return out;
}

}  // namespace gembml
