#pragma once

// Straight-line reference forward pass used as a test oracle. Deliberately
// naive: explicit loops, double accumulation, no shared kernels.

#include <cmath>
#include <vector>

#include "onepass/tinylm/weights.hpp"

namespace onepass::reference {

using Mat = std::vector<std::vector<double>>;

template <typename T>
Mat ref_matmul_wt(const Mat& X, const Tensor<T>& W) {
    Mat Y(X.size(), std::vector<double>(W.rows(), 0.0));
    for (std::size_t n = 0; n < X.size(); ++n)
        for (std::size_t o = 0; o < W.rows(); ++o) {
            double s = 0;
            for (std::size_t i = 0; i < W.cols(); ++i) s += X[n][i] * static_cast<double>(W(o, i));
            Y[n][o] = s;
        }
    return Y;
}

template <typename T>
Mat ref_rmsnorm(const Mat& X, const Tensor<T>& g) {
    Mat Y = X;
    for (std::size_t n = 0; n < X.size(); ++n) {
        double ms = 0;
        for (double v : X[n]) ms += v * v;
        ms /= static_cast<double>(X[n].size());
        const double inv = 1.0 / std::sqrt(ms + 1e-5);
        for (std::size_t i = 0; i < X[n].size(); ++i) Y[n][i] = static_cast<double>(g[i]) * X[n][i] * inv;
    }
    return Y;
}

inline double ref_gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

template <typename T>
Mat reference_forward(const Weights<T>& w, const Mat& E) {
    const auto& cfg = w.config;
    const std::size_t N = E.size(), D = cfg.d_model, H = cfg.heads, hd = D / H;
    Mat x = E;
    if (cfg.positional == PositionalScheme::LearnedAbsolute)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < D; ++i) x[n][i] += static_cast<double>(w.pos_emb(n, i));
    for (const auto& L : w.layers) {
        Mat a = ref_rmsnorm(x, L.attn_norm);
        Mat q = ref_matmul_wt(a, L.wq), k = ref_matmul_wt(a, L.wk), v = ref_matmul_wt(a, L.wv);
        if (cfg.positional == PositionalScheme::Rotary) {
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t j = 0; j < hd / 2; ++j) {
                        const double th = static_cast<double>(n) / std::pow(10000.0, 2.0 * j / hd);
                        for (Mat* m : {&q, &k}) {
                            double& x0 = (*m)[n][h * hd + 2 * j];
                            double& x1 = (*m)[n][h * hd + 2 * j + 1];
                            const double r0 = x0 * std::cos(th) - x1 * std::sin(th);
                            const double r1 = x0 * std::sin(th) + x1 * std::cos(th);
                            x0 = r0;
                            x1 = r1;
                        }
                    }
        }
        Mat att(N, std::vector<double>(D, 0.0));
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t i = 0; i < N; ++i) {
                std::vector<double> s(N, -INFINITY);
                double mx = -INFINITY;
                for (std::size_t j = 0; j <= i; ++j) {
                    double d = 0;
                    for (std::size_t c = 0; c < hd; ++c) d += q[i][h * hd + c] * k[j][h * hd + c];
                    s[j] = d / std::sqrt(static_cast<double>(hd));
                    mx = std::max(mx, s[j]);
                }
                double z = 0;
                for (std::size_t j = 0; j <= i; ++j) z += std::exp(s[j] - mx);
                for (std::size_t j = 0; j <= i; ++j) {
                    const double p = std::exp(s[j] - mx) / z;
                    for (std::size_t c = 0; c < hd; ++c) att[i][h * hd + c] += p * v[j][h * hd + c];
                }
            }
        Mat o = ref_matmul_wt(att, L.wo);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < D; ++i) x[n][i] += o[n][i];
        Mat b = ref_rmsnorm(x, L.mlp_norm);
        Mat u = ref_matmul_wt(b, L.w1);
        for (auto& row : u)
            for (auto& val : row) val = ref_gelu(val);
        Mat m = ref_matmul_wt(u, L.w2);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < D; ++i) x[n][i] += m[n][i];
    }
    Mat z = ref_rmsnorm(x, w.final_norm);
    return ref_matmul_wt(z, cfg.tied_head ? w.tok_emb : w.head);
}

}  // namespace onepass::reference
