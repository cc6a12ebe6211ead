#pragma once

// Frozen decoder-only transformer: pre-norm (RMSNorm) blocks with causal
// multi-head attention and a GELU MLP, followed by a final norm and an
// output head. Supports dense forward over an arbitrary embedding sequence,
// exact reverse-mode gradients w.r.t. the input embeddings (and optionally
// the weights), and single-row KV-cached stepping for autoregressive use.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/numerics/kernels.hpp"
#include "onepass/numerics/tensor.hpp"
#include "onepass/tinylm/weights.hpp"

namespace onepass {

inline constexpr double kRmsEps = 1e-5;
inline constexpr double kRopeBase = 10000.0;

template <typename T>
struct LayerTrace {
    Tensor<T> x_in;  // residual stream entering the block
    std::vector<T> inv_rms_attn;
    Tensor<T> a;  // normed input to attention
    Tensor<T> q, k, v;  // q and k after rotary
    std::vector<T> probs;  // heads x N x N, row i holds keys 0..i
    Tensor<T> attn;  // concatenated head outputs
    Tensor<T> x_mid;  // residual stream after attention
    std::vector<T> inv_rms_mlp;
    Tensor<T> b;  // normed input to MLP
    Tensor<T> u;  // MLP pre-activation
    Tensor<T> h;  // MLP activation
};

// Activations recorded by a forward pass; doubles as reusable scratch space.
template <typename T>
struct Trace {
    std::size_t n = 0;
    Tensor<T> x0;
    std::vector<LayerTrace<T>> layers;
    Tensor<T> x_final;
    std::vector<T> inv_rms_final;
    Tensor<T> z;
    Tensor<T> logits;
};

namespace detail {

template <typename T>
inline T rmsnorm_row(const T* x, const T* g, T* y, std::size_t D) noexcept {
    const T ms = kernels::dot(x, x, D) / static_cast<T>(D);
    const T inv = T(1) / std::sqrt(ms + static_cast<T>(kRmsEps));
    for (std::size_t k = 0; k < D; ++k) y[k] = g[k] * (x[k] * inv);
    return inv;
}

// dx += d(rmsnorm)/dx^T dy ; dg += dy * x * inv (when dg != nullptr)
template <typename T>
inline void rmsnorm_row_backward(const T* x, const T* g, T inv, const T* dy, T* dx, T* dg, std::size_t D,
                                 T* scratch) noexcept {
    for (std::size_t k = 0; k < D; ++k) scratch[k] = g[k] * dy[k];
    const T gx = kernels::dot(scratch, x, D);
    const T coef = inv * inv * inv * gx / static_cast<T>(D);
    for (std::size_t k = 0; k < D; ++k) dx[k] += inv * scratch[k] - coef * x[k];
    if (dg)
        for (std::size_t k = 0; k < D; ++k) dg[k] += dy[k] * x[k] * inv;
}

template <typename T>
inline void rope_rotate(T* x, const T* c, const T* s, std::size_t half) noexcept {
    for (std::size_t j = 0; j < half; ++j) {
        const T a = x[2 * j], b = x[2 * j + 1];
        x[2 * j] = a * c[j] - b * s[j];
        x[2 * j + 1] = a * s[j] + b * c[j];
    }
}

template <typename T>
inline void rope_unrotate(T* x, const T* c, const T* s, std::size_t half) noexcept {
    for (std::size_t j = 0; j < half; ++j) {
        const T a = x[2 * j], b = x[2 * j + 1];
        x[2 * j] = a * c[j] + b * s[j];
        x[2 * j + 1] = -a * s[j] + b * c[j];
    }
}

// One causal attention row for one head: keys/values are rows 0..len-1 with
// stride `ld`. Writes the softmax weights to `probs` and the mix to `out`.
template <typename T>
inline void attend_row(const T* q, const T* K, const T* Vv, std::size_t ld, std::size_t len, std::size_t hd,
                       T scale, T* probs, T* out) noexcept {
    for (std::size_t j = 0; j < len; ++j) probs[j] = kernels::dot(q, K + j * ld, hd) * scale;
    kernels::softmax_inplace(probs, len);
    for (std::size_t d = 0; d < hd; ++d) out[d] = T(0);
    for (std::size_t j = 0; j < len; ++j) kernels::axpy(probs[j], Vv + j * ld, out, hd);
}

}  // namespace detail

// Weight layouts needed by the backward pass, (in x out).
template <typename T>
struct TransposedWeights {
    struct Layer {
        Tensor<T> wq, wk, wv, wo, w1, w2;
    };
    std::vector<Layer> layers;
    Tensor<T> head;
};

template <typename T>
class Transformer {
   public:
    explicit Transformer(Weights<T> weights) : w_(std::move(weights)) {
        w_.config.validate();
        check_shapes();
        refresh();
    }

    Transformer(const Transformer&) = delete;
    Transformer& operator=(const Transformer&) = delete;

    const ModelConfig& config() const noexcept { return w_.config; }
    const Weights<T>& weights() const noexcept { return w_; }

    // For training loops only; call refresh() after mutating.
    Weights<T>& mutable_weights() noexcept { return w_; }

    void refresh() {
        const auto& cfg = w_.config;
        w_.sync_tied_head();
        tw_.layers.resize(cfg.layers);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const auto& L = w_.layers[l];
            auto& t = tw_.layers[l];
            t.wq = kernels::transpose(L.wq);
            t.wk = kernels::transpose(L.wk);
            t.wv = kernels::transpose(L.wv);
            t.wo = kernels::transpose(L.wo);
            t.w1 = kernels::transpose(L.w1);
            t.w2 = kernels::transpose(L.w2);
        }
        tw_.head = kernels::transpose(w_.head);
        build_rope();
    }

    std::uint64_t forward_count() const noexcept { return forward_calls_.load(); }
    std::uint64_t step_count() const noexcept { return step_calls_.load(); }

    // Test hook: negates the attention-input gradient of one layer so gradient
    // checkers can be shown to catch a broken backward rule. -1 disables.
    int debug_flip_attention_grad_layer = -1;

    // Dense causal forward over an N x d_model embedding sequence. Logits land
    // in trace.logits (N x vocab); the rest of the trace feeds backward().
    void forward(const Tensor<T>& E, Trace<T>& tr) const {
        const auto& cfg = w_.config;
        const std::size_t N = E.rows(), D = cfg.d_model, H = cfg.heads, hd = cfg.head_dim(), F = cfg.d_ff;
        if (E.rank() != 2 || E.cols() != D)
            throw ConfigError("forward: embedding width " + std::to_string(E.cols()) + " != d_model " +
                              std::to_string(D));
        if (N == 0) throw InputError("forward: empty input sequence");
        if (N > cfg.max_positions)
            throw InputError("forward: sequence length " + std::to_string(N) + " exceeds max_positions " +
                             std::to_string(cfg.max_positions));
        if (!E.all_finite()) throw NumericError("forward: non-finite input embedding");
        forward_calls_.fetch_add(1);

        tr.n = N;
        tr.x0 = E;
        if (cfg.positional == PositionalScheme::LearnedAbsolute)
            for (std::size_t i = 0; i < N; ++i) kernels::axpy(T(1), w_.pos_emb.row(i).data(), tr.x0.row(i).data(), D);
        tr.layers.resize(cfg.layers);
        const T scale = T(1) / std::sqrt(static_cast<T>(hd));
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const auto& L = w_.layers[l];
            auto& lt = tr.layers[l];
            if (l == 0) lt.x_in = tr.x0;
            lt.inv_rms_attn.resize(N);
            lt.a.resize({N, D});
            for (std::size_t i = 0; i < N; ++i)
                lt.inv_rms_attn[i] = detail::rmsnorm_row(lt.x_in.row(i).data(), L.attn_norm.data(), lt.a.row(i).data(), D);
            kernels::linear(lt.a, L.wq, lt.q);
            kernels::linear(lt.a, L.wk, lt.k);
            kernels::linear(lt.a, L.wv, lt.v);
            if (cfg.positional == PositionalScheme::Rotary)
                for (std::size_t i = 0; i < N; ++i) rotate_row(lt.q.row(i).data(), lt.k.row(i).data(), i);
            lt.probs.assign(H * N * N, T(0));
            lt.attn.resize({N, D});
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t i = 0; i < N; ++i)
                    detail::attend_row(lt.q.row(i).data() + h * hd, lt.k.data() + h * hd, lt.v.data() + h * hd, D, i + 1,
                                       hd, scale, &lt.probs[(h * N + i) * N], lt.attn.row(i).data() + h * hd);
            lt.x_mid = lt.x_in;
            kernels::linear_acc(lt.attn, L.wo, lt.x_mid);
            lt.inv_rms_mlp.resize(N);
            lt.b.resize({N, D});
            for (std::size_t i = 0; i < N; ++i)
                lt.inv_rms_mlp[i] = detail::rmsnorm_row(lt.x_mid.row(i).data(), L.mlp_norm.data(), lt.b.row(i).data(), D);
            kernels::linear(lt.b, L.w1, lt.u);
            lt.h.resize({N, F});
            kernels::gelu_array(lt.u.data(), lt.h.data(), N * F);
            // The block output is stored as the next layer's x_in (or x_final).
            Tensor<T>& out = (l + 1 < cfg.layers) ? tr.layers[l + 1].x_in : tr.x_final;
            out = lt.x_mid;
            kernels::linear_acc(lt.h, L.w2, out);
        }
        tr.inv_rms_final.resize(N);
        tr.z.resize({N, D});
        for (std::size_t i = 0; i < N; ++i)
            tr.inv_rms_final[i] = detail::rmsnorm_row(tr.x_final.row(i).data(), w_.final_norm.data(), tr.z.row(i).data(), D);
        kernels::linear(tr.z, w_.head, tr.logits);
    }

    Tensor<T> forward(const Tensor<T>& E) const {
        Trace<T> tr;
        forward(E, tr);
        return std::move(tr.logits);
    }

    // Reverse pass. dlogits is N x vocab. Writes the input-embedding gradient
    // to dE. When `grads` is non-null, weight gradients are accumulated into it
    // (the token embedding table is left to the caller, which owns the lookup).
    void backward(const Trace<T>& tr, const Tensor<T>& dlogits, Tensor<T>& dE, Weights<T>* grads = nullptr) const {
        const auto& cfg = w_.config;
        const std::size_t N = tr.n, D = cfg.d_model, H = cfg.heads, hd = cfg.head_dim(), F = cfg.d_ff, V = cfg.vocab;
        if (dlogits.rows() != N || dlogits.cols() != V) throw ConfigError("backward: dlogits shape mismatch");
        const T scale = T(1) / std::sqrt(static_cast<T>(hd));
        std::vector<T> scratch(std::max(D, F));

        // Output head and final norm.
        Tensor<T> dz;
        kernels::linear(dlogits, tw_.head, dz);
        if (grads) {
            Tensor<T> dlT = kernels::transpose(dlogits), zT = kernels::transpose(tr.z);
            kernels::matmul_nt(dlT.data(), N, zT.data(), N, grads->head.data(), D, V, D, N, true);
        }
        Tensor<T> dx = Tensor<T>::matrix(N, D);
        for (std::size_t i = 0; i < N; ++i)
            detail::rmsnorm_row_backward(tr.x_final.row(i).data(), w_.final_norm.data(), tr.inv_rms_final[i],
                                         dz.row(i).data(), dx.row(i).data(), grads ? grads->final_norm.data() : nullptr,
                                         D, scratch.data());

        Tensor<T> dh, du, db, dattn, dq, dk, dv, da;
        for (std::size_t li = cfg.layers; li-- > 0;) {
            const auto& L = w_.layers[li];
            const auto& Tw = tw_.layers[li];
            const auto& lt = tr.layers[li];
            LayerWeights<T>* G = grads ? &grads->layers[li] : nullptr;

            // MLP: out = x_mid + gelu(b W1^T) W2^T
            kernels::linear(dx, Tw.w2, dh);
            if (G) accumulate_weight_grad(dx, lt.h, G->w2);
            du.resize({N, F});
            kernels::gelu_backward_array(lt.u.data(), dh.data(), du.data(), N * F);
            kernels::linear(du, Tw.w1, db);
            if (G) accumulate_weight_grad(du, lt.b, G->w1);
            for (std::size_t i = 0; i < N; ++i)
                detail::rmsnorm_row_backward(lt.x_mid.row(i).data(), L.mlp_norm.data(), lt.inv_rms_mlp[i],
                                             db.row(i).data(), dx.row(i).data(), G ? G->mlp_norm.data() : nullptr, D,
                                             scratch.data());

            // Attention: x_mid = x_in + attn Wo^T
            kernels::linear(dx, Tw.wo, dattn);
            if (G) accumulate_weight_grad(dx, lt.attn, G->wo);
            dq.resize({N, D});
            dk.resize({N, D});
            dv.resize({N, D});
            std::vector<T> dp(N);
            for (std::size_t h = 0; h < H; ++h) {
                for (std::size_t i = 0; i < N; ++i) {
                    const T* p = &lt.probs[(h * N + i) * N];
                    const T* doi = dattn.row(i).data() + h * hd;
                    T s = 0;
                    for (std::size_t j = 0; j <= i; ++j) {
                        dp[j] = kernels::dot(doi, lt.v.row(j).data() + h * hd, hd);
                        kernels::axpy(p[j], doi, dv.row(j).data() + h * hd, hd);
                        s += p[j] * dp[j];
                    }
                    T* dqi = dq.row(i).data() + h * hd;
                    const T* qi = lt.q.row(i).data() + h * hd;
                    for (std::size_t j = 0; j <= i; ++j) {
                        const T ds = p[j] * (dp[j] - s) * scale;
                        kernels::axpy(ds, lt.k.row(j).data() + h * hd, dqi, hd);
                        kernels::axpy(ds, qi, dk.row(j).data() + h * hd, hd);
                    }
                }
            }
            if (cfg.positional == PositionalScheme::Rotary)
                for (std::size_t i = 0; i < N; ++i) unrotate_row(dq.row(i).data(), dk.row(i).data(), i);
            kernels::linear(dq, Tw.wq, da);
            kernels::linear_acc(dk, Tw.wk, da);
            kernels::linear_acc(dv, Tw.wv, da);
            if (G) {
                accumulate_weight_grad(dq, lt.a, G->wq);
                accumulate_weight_grad(dk, lt.a, G->wk);
                accumulate_weight_grad(dv, lt.a, G->wv);
            }
            if (debug_flip_attention_grad_layer == static_cast<int>(li))
                for (auto& v : da.span()) v = -v;
            for (std::size_t i = 0; i < N; ++i)
                detail::rmsnorm_row_backward(lt.x_in.row(i).data(), L.attn_norm.data(), lt.inv_rms_attn[i],
                                             da.row(i).data(), dx.row(i).data(), G ? G->attn_norm.data() : nullptr, D,
                                             scratch.data());
        }
        if (grads && cfg.positional == PositionalScheme::LearnedAbsolute)
            for (std::size_t i = 0; i < N; ++i) kernels::axpy(T(1), dx.row(i).data(), grads->pos_emb.row(i).data(), D);
        dE = std::move(dx);
    }

    // Incremental decoder state: per-layer key/value rows for positions
    // already consumed.
    class DecodeState {
       public:
        std::size_t length() const noexcept { return len_; }

       private:
        friend class Transformer;
        std::size_t len_ = 0;
        std::vector<Tensor<T>> k_, v_;
    };

    DecodeState start_decode() const {
        DecodeState st;
        const auto& cfg = w_.config;
        st.k_.assign(cfg.layers, Tensor<T>::matrix(cfg.max_positions, cfg.d_model));
        st.v_.assign(cfg.layers, Tensor<T>::matrix(cfg.max_positions, cfg.d_model));
        return st;
    }

    // Consume one embedding row at the next position and return its logits.
    // Arithmetic matches the corresponding row of the dense forward exactly.
    std::vector<T> step(DecodeState& st, std::span<const T> emb) const {
        const auto& cfg = w_.config;
        const std::size_t D = cfg.d_model, H = cfg.heads, hd = cfg.head_dim(), F = cfg.d_ff;
        if (emb.size() != D) throw ConfigError("step: embedding width mismatch");
        if (st.len_ >= cfg.max_positions) throw InputError("step: context window exhausted");
        step_calls_.fetch_add(1);
        const std::size_t pos = st.len_;
        const T scale = T(1) / std::sqrt(static_cast<T>(hd));
        Tensor<T> x = Tensor<T>::matrix(1, D);
        std::copy(emb.begin(), emb.end(), x.data());
        if (cfg.positional == PositionalScheme::LearnedAbsolute) kernels::axpy(T(1), w_.pos_emb.row(pos).data(), x.data(), D);
        Tensor<T> a = Tensor<T>::matrix(1, D), q, k, v, attn = Tensor<T>::matrix(1, D), u, hact = Tensor<T>::matrix(1, F);
        std::vector<T> probs(pos + 1);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const auto& L = w_.layers[l];
            detail::rmsnorm_row(x.data(), L.attn_norm.data(), a.data(), D);
            kernels::linear(a, L.wq, q);
            kernels::linear(a, L.wk, k);
            kernels::linear(a, L.wv, v);
            if (cfg.positional == PositionalScheme::Rotary) rotate_row(q.data(), k.data(), pos);
            std::copy(k.data(), k.data() + D, st.k_[l].row(pos).data());
            std::copy(v.data(), v.data() + D, st.v_[l].row(pos).data());
            for (std::size_t h = 0; h < H; ++h)
                detail::attend_row(q.data() + h * hd, st.k_[l].data() + h * hd, st.v_[l].data() + h * hd, D, pos + 1, hd,
                                   scale, probs.data(), attn.data() + h * hd);
            kernels::linear_acc(attn, L.wo, x);
            detail::rmsnorm_row(x.data(), L.mlp_norm.data(), a.data(), D);
            kernels::linear(a, L.w1, u);
            kernels::gelu_array(u.data(), hact.data(), F);
            kernels::linear_acc(hact, L.w2, x);
        }
        detail::rmsnorm_row(x.data(), w_.final_norm.data(), a.data(), D);
        Tensor<T> logits;
        kernels::linear(a, w_.head, logits);
        ++st.len_;
        return std::vector<T>(logits.data(), logits.data() + logits.size());
    }

   private:
    void check_shapes() const {
        const auto ref = Weights<T>::zeros(w_.config);
        std::vector<std::vector<std::size_t>> want;
        ref.for_each([&](const std::string&, const Tensor<T>& t) { want.push_back(t.shape()); });
        std::size_t i = 0;
        w_.for_each([&](const std::string& name, const Tensor<T>& t) {
            if (i >= want.size() || t.shape() != want[i]) throw ConfigError("weight '" + name + "' has wrong shape");
            ++i;
        });
        if (!w_.config.tied_head && w_.head.shape() != ref.head.shape()) throw ConfigError("head has wrong shape");
    }

    void build_rope() {
        const auto& cfg = w_.config;
        const std::size_t half = cfg.head_dim() / 2, P = cfg.max_positions;
        rope_cos_.assign(P * half, T(0));
        rope_sin_.assign(P * half, T(0));
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t j = 0; j < half; ++j) {
                const double theta = static_cast<double>(p) * std::pow(kRopeBase, -2.0 * j / cfg.head_dim());
                rope_cos_[p * half + j] = static_cast<T>(std::cos(theta));
                rope_sin_[p * half + j] = static_cast<T>(std::sin(theta));
            }
    }

    void rotate_row(T* q, T* k, std::size_t pos) const {
        const std::size_t hd = w_.config.head_dim(), half = hd / 2;
        const T* c = &rope_cos_[pos * half];
        const T* s = &rope_sin_[pos * half];
        for (std::size_t h = 0; h < w_.config.heads; ++h) {
            detail::rope_rotate(q + h * hd, c, s, half);
            detail::rope_rotate(k + h * hd, c, s, half);
        }
    }

    void unrotate_row(T* dq, T* dk, std::size_t pos) const {
        const std::size_t hd = w_.config.head_dim(), half = hd / 2;
        const T* c = &rope_cos_[pos * half];
        const T* s = &rope_sin_[pos * half];
        for (std::size_t h = 0; h < w_.config.heads; ++h) {
            detail::rope_unrotate(dq + h * hd, c, s, half);
            detail::rope_unrotate(dk + h * hd, c, s, half);
        }
    }

    // G += dY^T X for dY (N x out), X (N x in)
    static void accumulate_weight_grad(const Tensor<T>& dY, const Tensor<T>& X, Tensor<T>& G) {
        const std::size_t N = dY.rows();
        Tensor<T> dYT = kernels::transpose(dY), XT = kernels::transpose(X);
        kernels::matmul_nt(dYT.data(), N, XT.data(), N, G.data(), G.cols(), dY.cols(), X.cols(), N, true);
    }

    Weights<T> w_;
    TransposedWeights<T> tw_;
    std::vector<T> rope_cos_, rope_sin_;
    mutable std::atomic<std::uint64_t> forward_calls_{0};
    mutable std::atomic<std::uint64_t> step_calls_{0};
};

}  // namespace onepass
