#pragma once

// Dense kernels used by the transformer. Every output element of a dot-product
// kernel is reduced in the same fixed lane order no matter how the surrounding
// loops are blocked, so a row computed alone is bit-identical to the same row
// computed inside a larger matrix. Causality checks and the KV-cached decoder
// rely on that.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <type_traits>
#include <vector>

#include "onepass/numerics/tensor.hpp"

namespace onepass::kernels {

template <typename T>
struct Simd;

template <>
struct Simd<float> {
    typedef float type __attribute__((vector_size(64)));
    static constexpr std::size_t lanes = 16;
};

template <>
struct Simd<double> {
    typedef double type __attribute__((vector_size(64)));
    static constexpr std::size_t lanes = 8;
};

namespace detail {

template <typename T>
inline typename Simd<T>::type load(const T* p) noexcept {
    typename Simd<T>::type v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

// Partial load; missing lanes are zero.
template <typename T>
inline typename Simd<T>::type load_tail(const T* p, std::size_t n) noexcept {
    typename Simd<T>::type v{};
    std::memcpy(&v, p, n * sizeof(T));
    return v;
}

template <typename T>
inline void store(T* p, typename Simd<T>::type v) noexcept {
    std::memcpy(p, &v, sizeof(v));
}

// Pairwise tree over lanes, fixed order.
template <typename T>
inline T hsum(typename Simd<T>::type v) noexcept {
    constexpr std::size_t L = Simd<T>::lanes;
    T buf[L];
    std::memcpy(buf, &v, sizeof(v));
    for (std::size_t w = L / 2; w >= 1; w /= 2) {
        for (std::size_t i = 0; i < w; ++i) buf[i] += buf[i + w];
    }
    return buf[0];
}

// Reduce 16 float accumulators at once. Lane k of the result equals
// hsum(acc[k]) exactly: the shuffles reproduce the same pairwise tree
// (i + 8, then i + 4, i + 2, i + 1), just across registers.
inline Simd<float>::type hsum16(const Simd<float>::type (&acc)[16]) noexcept {
    using V = Simd<float>::type;
    using I = int __attribute__((vector_size(64)));
    const I lo1 = {0, 1, 2, 3, 4, 5, 6, 7, 16, 17, 18, 19, 20, 21, 22, 23};
    const I hi1 = {8, 9, 10, 11, 12, 13, 14, 15, 24, 25, 26, 27, 28, 29, 30, 31};
    const I lo2 = {0, 1, 2, 3, 8, 9, 10, 11, 16, 17, 18, 19, 24, 25, 26, 27};
    const I hi2 = {4, 5, 6, 7, 12, 13, 14, 15, 20, 21, 22, 23, 28, 29, 30, 31};
    const I lo3 = {0, 1, 4, 5, 8, 9, 12, 13, 16, 17, 20, 21, 24, 25, 28, 29};
    const I hi3 = {2, 3, 6, 7, 10, 11, 14, 15, 18, 19, 22, 23, 26, 27, 30, 31};
    const I lo4 = {0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30};
    const I hi4 = {1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31};
    V l1[8], l2[4], l3[2];
    for (int p = 0; p < 8; ++p)
        l1[p] = __builtin_shuffle(acc[2 * p], acc[2 * p + 1], lo1) + __builtin_shuffle(acc[2 * p], acc[2 * p + 1], hi1);
    for (int p = 0; p < 4; ++p)
        l2[p] = __builtin_shuffle(l1[2 * p], l1[2 * p + 1], lo2) + __builtin_shuffle(l1[2 * p], l1[2 * p + 1], hi2);
    for (int p = 0; p < 2; ++p)
        l3[p] = __builtin_shuffle(l2[2 * p], l2[2 * p + 1], lo3) + __builtin_shuffle(l2[2 * p], l2[2 * p + 1], hi3);
    return __builtin_shuffle(l3[0], l3[1], lo4) + __builtin_shuffle(l3[0], l3[1], hi4);
}

}  // namespace detail

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) noexcept {
    using V = typename Simd<T>::type;
    constexpr std::size_t L = Simd<T>::lanes;
    V acc{};
    std::size_t k = 0;
    for (; k + L <= n; k += L) acc += detail::load(a + k) * detail::load(b + k);
    if (k < n) acc += detail::load_tail(a + k, n - k) * detail::load_tail(b + k, n - k);
    return detail::hsum<T>(acc);
}

template <typename T>
inline T dot(std::span<const T> a, std::span<const T> b) noexcept {
    return dot(a.data(), b.data(), a.size());
}

// y += alpha * x
template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) noexcept {
    using V = typename Simd<T>::type;
    constexpr std::size_t L = Simd<T>::lanes;
    std::size_t k = 0;
    for (; k + L <= n; k += L) detail::store(y + k, detail::load(y + k) + alpha * detail::load(x + k));
    for (; k < n; ++k) y[k] += alpha * x[k];
}

// C[n, m] (+)= sum_k A[n, k] * B[m, k]. A is rows x K, B is cols x K, C is
// rows x cols, all row-major with the given leading dimensions.
template <typename T>
void matmul_nt(const T* A, std::size_t lda, const T* B, std::size_t ldb, T* C, std::size_t ldc, std::size_t rows,
               std::size_t cols, std::size_t K, bool accumulate) noexcept {
    using V = typename Simd<T>::type;
    constexpr std::size_t L = Simd<T>::lanes;
    constexpr std::size_t RB = 4;
    constexpr std::size_t CB = 4;
    const std::size_t k_full = K - K % L;
    const std::size_t k_tail = K - k_full;

    auto emit = [&](std::size_t r, std::size_t c, V acc) {
        T v = detail::hsum<T>(acc);
        T& dst = C[r * ldc + c];
        dst = accumulate ? dst + v : v;
    };

    std::size_t r = 0;
    for (; r + RB <= rows; r += RB) {
        std::size_t c = 0;
        for (; c + CB <= cols; c += CB) {
            V acc[RB][CB] = {};
            for (std::size_t k = 0; k < k_full; k += L) {
                V b[CB];
                for (std::size_t j = 0; j < CB; ++j) b[j] = detail::load(B + (c + j) * ldb + k);
                for (std::size_t i = 0; i < RB; ++i) {
                    V a = detail::load(A + (r + i) * lda + k);
                    for (std::size_t j = 0; j < CB; ++j) acc[i][j] += a * b[j];
                }
            }
            if (k_tail) {
                V b[CB];
                for (std::size_t j = 0; j < CB; ++j) b[j] = detail::load_tail(B + (c + j) * ldb + k_full, k_tail);
                for (std::size_t i = 0; i < RB; ++i) {
                    V a = detail::load_tail(A + (r + i) * lda + k_full, k_tail);
                    for (std::size_t j = 0; j < CB; ++j) acc[i][j] += a * b[j];
                }
            }
            if constexpr (std::is_same_v<T, float>) {
                const V(&flat)[RB * CB] = reinterpret_cast<const V(&)[RB * CB]>(acc);
                T sums[RB * CB];
                detail::store(sums, detail::hsum16(flat));
                for (std::size_t i = 0; i < RB; ++i)
                    for (std::size_t j = 0; j < CB; ++j) {
                        T& dst = C[(r + i) * ldc + c + j];
                        dst = accumulate ? dst + sums[i * CB + j] : sums[i * CB + j];
                    }
            } else {
                for (std::size_t i = 0; i < RB; ++i)
                    for (std::size_t j = 0; j < CB; ++j) emit(r + i, c + j, acc[i][j]);
            }
        }
        for (; c < cols; ++c) {
            for (std::size_t i = 0; i < RB; ++i) {
                T v = dot(A + (r + i) * lda, B + c * ldb, K);
                T& dst = C[(r + i) * ldc + c];
                dst = accumulate ? dst + v : v;
            }
        }
    }
    for (; r < rows; ++r) {
        std::size_t c = 0;
        for (; c + CB <= cols; c += CB) {
            V acc[CB] = {};
            for (std::size_t k = 0; k < k_full; k += L) {
                V a = detail::load(A + r * lda + k);
                for (std::size_t j = 0; j < CB; ++j) acc[j] += a * detail::load(B + (c + j) * ldb + k);
            }
            if (k_tail) {
                V a = detail::load_tail(A + r * lda + k_full, k_tail);
                for (std::size_t j = 0; j < CB; ++j) acc[j] += a * detail::load_tail(B + (c + j) * ldb + k_full, k_tail);
            }
            for (std::size_t j = 0; j < CB; ++j) emit(r, c + j, acc[j]);
        }
        for (; c < cols; ++c) {
            T v = dot(A + r * lda, B + c * ldb, K);
            T& dst = C[r * ldc + c];
            dst = accumulate ? dst + v : v;
        }
    }
}

// Y = X * W^T for X (n x k), W (m x k). Y is resized to n x m.
template <typename T>
void linear(const Tensor<T>& X, const Tensor<T>& W, Tensor<T>& Y) {
    if (X.cols() != W.cols()) throw ConfigError("linear: inner dimensions differ");
    if (Y.rows() != X.rows() || Y.cols() != W.rows() || Y.rank() != 2) Y.resize({X.rows(), W.rows()});
    matmul_nt(X.data(), X.cols(), W.data(), W.cols(), Y.data(), Y.cols(), X.rows(), W.rows(), X.cols(), false);
}

// Y += X * W^T
template <typename T>
void linear_acc(const Tensor<T>& X, const Tensor<T>& W, Tensor<T>& Y) {
    matmul_nt(X.data(), X.cols(), W.data(), W.cols(), Y.data(), Y.cols(), X.rows(), W.rows(), X.cols(), true);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& M) {
    Tensor<T> out = Tensor<T>::matrix(M.cols(), M.rows());
    const std::size_t R = M.rows(), C = M.cols();
    constexpr std::size_t B = 32;
    for (std::size_t r0 = 0; r0 < R; r0 += B)
        for (std::size_t c0 = 0; c0 < C; c0 += B)
            for (std::size_t r = r0; r < std::min(R, r0 + B); ++r)
                for (std::size_t c = c0; c < std::min(C, c0 + B); ++c) out(c, r) = M(r, c);
    return out;
}

// First index of the maximum; ties resolve to the lowest id.
template <typename T>
inline std::size_t argmax(const T* x, std::size_t n) noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (x[i] > x[best]) best = i;
    return best;
}

// tanh-approximated GELU and its derivative.
template <typename T>
inline T gelu(T x) noexcept {
    constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
    return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
inline T gelu_grad(T x) noexcept {
    constexpr T c = T(0.7978845608028654);
    const T inner = c * (x + T(0.044715) * x * x * x);
    const T t = std::tanh(inner);
    const T dinner = c * (T(1) + T(3) * T(0.044715) * x * x);
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * dinner;
}

namespace detail {

// exp over float lanes: range reduction by ln 2 and a degree-6 polynomial.
// Relative error is a few ulp on [-87, 88]; inputs are clamped to that range.
inline Simd<float>::type vexp(Simd<float>::type x) noexcept {
    using V = Simd<float>::type;
    using I = std::int32_t __attribute__((vector_size(64)));
    const V hi = V{} + 88.0f, lo = V{} - 87.0f;
    x = x > hi ? hi : x;
    x = x < lo ? lo : x;
    const V magic = V{} + 12582912.0f;  // 1.5 * 2^23, rounds to nearest
    V n = x * 1.44269504088896341f + magic;
    n -= magic;
    V r = x - n * 0.693359375f;
    r -= n * -2.12194440e-4f;
    V p = V{} + 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    I bits;
    std::memcpy(&bits, &p, sizeof(p));
    bits += __builtin_convertvector(n, I) << 23;
    std::memcpy(&p, &bits, sizeof(p));
    return p;
}

}  // namespace detail

// h[i] = gelu(u[i]). The float path is vectorised; every element, tail
// included, goes through the same lane arithmetic.
template <typename T>
inline void gelu_array(const T* u, T* h, std::size_t n) noexcept {
    if constexpr (std::is_same_v<T, float>) {
        using V = Simd<float>::type;
        constexpr std::size_t L = Simd<float>::lanes;
        // 0.5 * (1 + tanh(y)) == sigmoid(2y), which avoids cancellation.
        auto f = [](V x) {
            const V y = 0.7978845608028654f * (x + 0.044715f * x * x * x);
            return x / (1.0f + detail::vexp(-2.0f * y));
        };
        std::size_t i = 0;
        for (; i + L <= n; i += L) detail::store(h + i, f(detail::load(u + i)));
        if (i < n) {
            float tmp[L];
            detail::store(tmp, f(detail::load_tail(u + i, n - i)));
            std::memcpy(h + i, tmp, (n - i) * sizeof(float));
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) h[i] = gelu(u[i]);
    }
}

// du[i] = dh[i] * gelu'(u[i]), consistent with gelu_array.
template <typename T>
inline void gelu_backward_array(const T* u, const T* dh, T* du, std::size_t n) noexcept {
    if constexpr (std::is_same_v<T, float>) {
        using V = Simd<float>::type;
        constexpr std::size_t L = Simd<float>::lanes;
        auto f = [](V x, V g) {
            const V c = V{} + 0.7978845608028654f;
            const V e = detail::vexp(-2.0f * (c * (x + 0.044715f * x * x * x)));
            const V sg = 1.0f / (1.0f + e);
            const V dinner = c * (1.0f + 3.0f * 0.044715f * x * x);
            return g * (sg + 2.0f * x * sg * (e * sg) * dinner);
        };
        std::size_t i = 0;
        for (; i + L <= n; i += L) detail::store(du + i, f(detail::load(u + i), detail::load(dh + i)));
        if (i < n) {
            float tmp[L];
            detail::store(tmp, f(detail::load_tail(u + i, n - i), detail::load_tail(dh + i, n - i)));
            std::memcpy(du + i, tmp, (n - i) * sizeof(float));
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) du[i] = dh[i] * gelu_grad(u[i]);
    }
}

// y[i] = exp(x[i] - shift). Vectorised for float; the tail uses the same lanes.
template <typename T>
inline void exp_shifted(const T* x, T shift, T* y, std::size_t n) noexcept {
    if constexpr (std::is_same_v<T, float>) {
        constexpr std::size_t L = Simd<float>::lanes;
        std::size_t i = 0;
        for (; i + L <= n; i += L) detail::store(y + i, detail::vexp(detail::load(x + i) - shift));
        if (i < n) {
            float tmp[L];
            detail::store(tmp, detail::vexp(detail::load_tail(x + i, n - i) - shift));
            std::memcpy(y + i, tmp, (n - i) * sizeof(float));
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i] - shift);
    }
}

// Numerically stable softmax in place over the first n entries.
template <typename T>
inline void softmax_inplace(T* x, std::size_t n) noexcept {
    T mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    exp_shifted(x, mx, x, n);
    T sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += x[i];
    const T inv = T(1) / sum;
    for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

// log(sum(exp(x))) computed stably.
template <typename T>
inline T logsumexp(const T* x, std::size_t n) {
    T mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    std::vector<T> e(n);
    exp_shifted(x, mx, e.data(), n);
    T sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += e[i];
    return mx + std::log(sum);
}

}  // namespace onepass::kernels
