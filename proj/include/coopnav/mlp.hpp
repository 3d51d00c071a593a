#pragma once

#include <array>
#include <cblas.h>
#include <cmath>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coopnav/common.hpp"

namespace coopnav {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(std::size_t(r) * c, 0.0) {}

    double& operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
    double operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }
    double* row(int r) { return data.data() + std::size_t(r) * cols; }
    const double* row(int r) const { return data.data() + std::size_t(r) * cols; }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// C = A * B^T, A: m x k, B: n x k, C: m x n
inline void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dims");
    c = Matrix(a.rows, b.rows);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, a.rows, b.rows, a.cols, 1.0,
                a.data.data(), a.cols, b.data.data(), b.cols, 0.0, c.data.data(), c.cols);
}

// C = A * B, A: m x k, B: k x n, C: m x n
inline void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul_nn: inner dims");
    c = Matrix(a.rows, b.cols);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, a.rows, b.cols, a.cols, 1.0,
                a.data.data(), a.cols, b.data.data(), b.cols, 0.0, c.data.data(), c.cols);
}

// C = A^T * B, A: k x m, B: k x n, C: m x n
inline void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: inner dims");
    c = Matrix(a.cols, b.cols);
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, a.cols, b.cols, a.rows, 1.0,
                a.data.data(), a.cols, b.data.data(), b.cols, 0.0, c.data.data(), c.cols);
}

enum class OutputActivation { Identity, Logistic };

/// Two-hidden-layer MLP shape. Hidden widths default to the production 128;
/// tests shrink them for finite-difference checks.
struct MlpSpec {
    int input_dim = 0;
    int hidden1 = 128;
    int hidden2 = 128;
    int output_dim = 0;
    OutputActivation output_activation = OutputActivation::Identity;

    std::array<int, 4> layer_dims() const { return {input_dim, hidden1, hidden2, output_dim}; }
    int layer_in(int l) const { return layer_dims()[l]; }
    int layer_out(int l) const { return layer_dims()[l + 1]; }
};

inline constexpr int kNumLayers = 3;

struct MlpParams {
    std::array<Matrix, kNumLayers> weight;           // weight[l]: out x in
    std::array<std::vector<double>, kNumLayers> bias;

    void zero() {
        for (auto& w : weight) w.zero();
        for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
    }
};

using MlpGrads = MlpParams;

struct AdamState {
    MlpParams m;
    MlpParams v;
    long steps = 0;
};

/// Live network, its slowly tracking target copy, and optimizer moments.
struct ParamSet {
    MlpSpec spec;
    MlpParams live;
    MlpParams target;
    AdamState opt;
};

inline MlpParams make_zero_params(const MlpSpec& spec) {
    MlpParams p;
    for (int l = 0; l < kNumLayers; ++l) {
        p.weight[l] = Matrix(spec.layer_out(l), spec.layer_in(l));
        p.bias[l].assign(spec.layer_out(l), 0.0);
    }
    return p;
}

/// Weights uniform in +-1/sqrt(fan_in), biases zero, target = live copy.
inline ParamSet make_params(const MlpSpec& spec, Rng& rng) {
    ParamSet p;
    p.spec = spec;
    p.live = make_zero_params(spec);
    for (int l = 0; l < kNumLayers; ++l) {
        double bound = 1.0 / std::sqrt(double(spec.layer_in(l)));
        for (double& w : p.live.weight[l].data) w = rng.uniform(-bound, bound);
    }
    p.target = p.live;
    p.opt.m = make_zero_params(spec);
    p.opt.v = make_zero_params(spec);
    p.opt.steps = 0;
    return p;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct ForwardTrace {
    std::vector<double> input;
    std::vector<double> h1;      // post-relu, length hidden1
    std::vector<double> h2;      // post-relu, length hidden2
    std::vector<double> output;
};

namespace detail {

inline void affine(const Matrix& w, const std::vector<double>& b, const double* x, double* out) {
    std::memcpy(out, b.data(), b.size() * sizeof(double));
    cblas_dgemv(CblasRowMajor, CblasNoTrans, w.rows, w.cols, 1.0, w.data.data(), w.cols, x, 1,
                1.0, out, 1);
}

inline void apply_output_activation(OutputActivation act, std::span<double> v) {
    if (act == OutputActivation::Logistic)
        for (double& z : v) z = logistic(z);
}

}  // namespace detail

inline ForwardTrace forward(const MlpParams& params, const MlpSpec& spec,
                            std::span<const double> input) {
    if (int(input.size()) != spec.input_dim)
        throw std::invalid_argument("forward: input length != spec.input_dim");
    ForwardTrace t;
    t.input.assign(input.begin(), input.end());
    t.h1.resize(spec.hidden1);
    t.h2.resize(spec.hidden2);
    t.output.resize(spec.output_dim);
    detail::affine(params.weight[0], params.bias[0], t.input.data(), t.h1.data());
    for (double& z : t.h1) z = z > 0.0 ? z : 0.0;
    detail::affine(params.weight[1], params.bias[1], t.h1.data(), t.h2.data());
    for (double& z : t.h2) z = z > 0.0 ? z : 0.0;
    detail::affine(params.weight[2], params.bias[2], t.h2.data(), t.output.data());
    detail::apply_output_activation(spec.output_activation, t.output);
    return t;
}

inline ForwardTrace forward(const ParamSet& p, std::span<const double> input) {
    return forward(p.live, p.spec, input);
}

inline ForwardTrace forward_target(const ParamSet& p, std::span<const double> input) {
    return forward(p.target, p.spec, input);
}

/// Reverse-mode gradients of output . output_grad with respect to every
/// parameter; optionally also with respect to the input. Gradients overwrite
/// `grads`.
inline void backward(const ForwardTrace& t, const MlpParams& params, const MlpSpec& spec,
                     std::span<const double> output_grad, MlpGrads& grads,
                     std::vector<double>* input_grad = nullptr) {
    if (int(output_grad.size()) != spec.output_dim)
        throw std::invalid_argument("backward: output_grad length != spec.output_dim");
    grads = make_zero_params(spec);

    std::vector<double> dz(output_grad.begin(), output_grad.end());
    if (spec.output_activation == OutputActivation::Logistic)
        for (int i = 0; i < spec.output_dim; ++i) dz[i] *= t.output[i] * (1.0 - t.output[i]);

    const std::array<const std::vector<double>*, kNumLayers> acts = {&t.input, &t.h1, &t.h2};
    for (int l = kNumLayers - 1; l >= 0; --l) {
        const std::vector<double>& x = *acts[l];
        Matrix& dw = grads.weight[l];
        for (int r = 0; r < dw.rows; ++r)
            for (int c = 0; c < dw.cols; ++c) dw(r, c) = dz[r] * x[c];
        grads.bias[l] = dz;

        if (l == 0 && input_grad == nullptr) break;
        std::vector<double> dx(x.size(), 0.0);
        const Matrix& w = params.weight[l];
        for (int r = 0; r < w.rows; ++r)
            for (int c = 0; c < w.cols; ++c) dx[c] += dz[r] * w(r, c);
        if (l > 0) {
            // relu mask: dead units pass no gradient
            for (std::size_t i = 0; i < dx.size(); ++i)
                if (x[i] <= 0.0) dx[i] = 0.0;
            dz = std::move(dx);
        } else {
            *input_grad = std::move(dx);
        }
    }
}

// ---- batched paths (training hot loop) ----

struct BatchTrace {
    Matrix input;       // B x in
    Matrix h1;          // B x hidden1, post-relu
    Matrix h2;          // B x hidden2, post-relu
    Matrix output_pre;  // B x out, before the output activation
    Matrix output;      // B x out
};

inline BatchTrace forward_batch(const MlpParams& params, const MlpSpec& spec, Matrix input) {
    if (input.cols != spec.input_dim)
        throw std::invalid_argument("forward_batch: input cols != spec.input_dim");
    BatchTrace t;
    t.input = std::move(input);
    auto layer = [&](const Matrix& x, int l, Matrix& out) {
        matmul_nt(x, params.weight[l], out);
        for (int r = 0; r < out.rows; ++r) {
            double* p = out.row(r);
            const double* b = params.bias[l].data();
            for (int c = 0; c < out.cols; ++c) p[c] += b[c];
        }
    };
    layer(t.input, 0, t.h1);
    for (double& z : t.h1.data) z = z > 0.0 ? z : 0.0;
    layer(t.h1, 1, t.h2);
    for (double& z : t.h2.data) z = z > 0.0 ? z : 0.0;
    layer(t.h2, 2, t.output_pre);
    t.output = t.output_pre;
    if (spec.output_activation == OutputActivation::Logistic)
        for (double& z : t.output.data) z = logistic(z);
    return t;
}

/// Batched reverse pass; parameter gradients are sums over batch rows.
/// `output_preact_grad`, when given, is injected at the output layer before
/// its activation (gradient of a penalty on raw output units).
inline void backward_batch(const BatchTrace& t, const MlpParams& params, const MlpSpec& spec,
                           const Matrix& output_grad, MlpGrads& grads, Matrix* input_grad = nullptr,
                           const Matrix* output_preact_grad = nullptr) {
    if (!output_grad.same_shape(t.output))
        throw std::invalid_argument("backward_batch: output_grad shape");
    grads = make_zero_params(spec);

    Matrix dz = output_grad;
    if (spec.output_activation == OutputActivation::Logistic)
        for (std::size_t i = 0; i < dz.data.size(); ++i) {
            double y = t.output.data[i];
            dz.data[i] *= y * (1.0 - y);
        }
    if (output_preact_grad != nullptr) {
        if (!output_preact_grad->same_shape(dz))
            throw std::invalid_argument("backward_batch: output_preact_grad shape");
        for (std::size_t i = 0; i < dz.data.size(); ++i) dz.data[i] += output_preact_grad->data[i];
    }

    const std::array<const Matrix*, kNumLayers> acts = {&t.input, &t.h1, &t.h2};
    for (int l = kNumLayers - 1; l >= 0; --l) {
        const Matrix& x = *acts[l];
        matmul_tn(dz, x, grads.weight[l]);  // (out x B)(B x in)
        for (int r = 0; r < dz.rows; ++r) {
            const double* p = dz.row(r);
            for (int c = 0; c < dz.cols; ++c) grads.bias[l][c] += p[c];
        }
        if (l == 0 && input_grad == nullptr) break;
        Matrix dx;
        matmul_nn(dz, params.weight[l], dx);  // (B x out)(out x in)
        if (l > 0) {
            for (std::size_t i = 0; i < dx.data.size(); ++i)
                if (x.data[i] <= 0.0) dx.data[i] = 0.0;
            dz = std::move(dx);
        } else {
            *input_grad = std::move(dx);
        }
    }
}

// ---- optimizer / target maintenance ----

inline double grad_sq_norm(const MlpGrads& g) {
    double s = 0.0;
    for (const auto& w : g.weight)
        for (double v : w.data) s += v * v;
    for (const auto& b : g.bias)
        for (double v : b) s += v * v;
    return s;
}

/// Scales gradients so their global L2 norm is at most max_norm.
inline void clip_grad_norm(MlpGrads& g, double max_norm) {
    double norm = std::sqrt(grad_sq_norm(g));
    if (norm <= max_norm || norm == 0.0) return;
    double s = max_norm / norm;
    for (auto& w : g.weight)
        for (double& v : w.data) v *= s;
    for (auto& b : g.bias)
        for (double& v : b) v *= s;
}

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One Adam update of the live parameters (bias-corrected moments).
inline void adam_step(ParamSet& p, const MlpGrads& grads, double lr) {
    p.opt.steps += 1;
    double c1 = 1.0 - std::pow(kAdamBeta1, double(p.opt.steps));
    double c2 = 1.0 - std::pow(kAdamBeta2, double(p.opt.steps));
    auto update = [&](std::vector<double>& theta, std::vector<double>& m, std::vector<double>& v,
                      const std::vector<double>& g) {
        if (theta.size() != g.size()) throw std::invalid_argument("adam_step: shape mismatch");
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
        }
    };
    for (int l = 0; l < kNumLayers; ++l) {
        update(p.live.weight[l].data, p.opt.m.weight[l].data, p.opt.v.weight[l].data,
               grads.weight[l].data);
        update(p.live.bias[l], p.opt.m.bias[l], p.opt.v.bias[l], grads.bias[l]);
    }
}

/// target <- (1-tau)*target + tau*live, elementwise.
inline void soft_update(ParamSet& p, double tau) {
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("soft_update: tau outside [0,1]");
    auto blend = [tau](std::vector<double>& tgt, const std::vector<double>& src) {
        if (tgt.size() != src.size()) throw std::invalid_argument("soft_update: shape mismatch");
        for (std::size_t i = 0; i < tgt.size(); ++i) tgt[i] = (1.0 - tau) * tgt[i] + tau * src[i];
    };
    for (int l = 0; l < kNumLayers; ++l) {
        blend(p.target.weight[l].data, p.live.weight[l].data);
        blend(p.target.bias[l], p.live.bias[l]);
    }
}

}  // namespace coopnav
