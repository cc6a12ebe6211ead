#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "onepass/numerics/tensor.hpp"
#include "onepass/tinylm/config.hpp"

namespace onepass {

// Linear maps are stored as (out x in), so y = x * W^T.
template <typename T>
struct LayerWeights {
    Tensor<T> attn_norm;  // d_model
    Tensor<T> wq, wk, wv, wo;  // d_model x d_model
    Tensor<T> mlp_norm;  // d_model
    Tensor<T> w1;  // d_ff x d_model
    Tensor<T> w2;  // d_model x d_ff
};

template <typename T>
struct Weights {
    ModelConfig config;
    Tensor<T> tok_emb;  // vocab x d_model
    Tensor<T> pos_emb;  // max_positions x d_model, learned-absolute only
    std::vector<LayerWeights<T>> layers;
    Tensor<T> final_norm;  // d_model
    Tensor<T> head;  // vocab x d_model; mirrors tok_emb when tied

    // Visit every parameter tensor with a stable name. The tied head and the
    // unused positional table are skipped so each parameter appears once.
    template <typename F>
    void for_each(F&& fn) {
        visit(*this, fn);
    }
    template <typename F>
    void for_each(F&& fn) const {
        visit(*this, fn);
    }

    // Zero-initialised tensors with the layout implied by `cfg`.
    static Weights zeros(const ModelConfig& cfg) {
        cfg.validate();
        const std::size_t D = cfg.d_model, F = cfg.d_ff, V = cfg.vocab;
        Weights w;
        w.config = cfg;
        w.tok_emb = Tensor<T>::matrix(V, D);
        if (cfg.positional == PositionalScheme::LearnedAbsolute) w.pos_emb = Tensor<T>::matrix(cfg.max_positions, D);
        w.layers.resize(cfg.layers);
        for (auto& l : w.layers) {
            l.attn_norm = Tensor<T>({D}, T(1));
            l.wq = Tensor<T>::matrix(D, D);
            l.wk = Tensor<T>::matrix(D, D);
            l.wv = Tensor<T>::matrix(D, D);
            l.wo = Tensor<T>::matrix(D, D);
            l.mlp_norm = Tensor<T>({D}, T(1));
            l.w1 = Tensor<T>::matrix(F, D);
            l.w2 = Tensor<T>::matrix(D, F);
        }
        w.final_norm = Tensor<T>({D}, T(1));
        w.head = Tensor<T>::matrix(V, D);
        return w;
    }

    void sync_tied_head() {
        if (config.tied_head) head = tok_emb;
    }

    template <typename U>
    Weights<U> cast() const {
        Weights<U> out = Weights<U>::zeros(config);
        std::vector<const Tensor<T>*> src;
        for_each([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
        std::vector<Tensor<U>*> dst;
        out.for_each([&](const std::string&, Tensor<U>& t) { dst.push_back(&t); });
        for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
        out.sync_tied_head();
        return out;
    }

    bool all_finite() const {
        bool ok = true;
        for_each([&](const std::string&, const Tensor<T>& t) { ok = ok && t.all_finite(); });
        return ok;
    }

   private:
    template <typename W, typename F>
    static void visit(W& w, F& fn) {
        fn(std::string("tok_emb"), w.tok_emb);
        if (w.config.positional == PositionalScheme::LearnedAbsolute) fn(std::string("pos_emb"), w.pos_emb);
        for (std::size_t i = 0; i < w.layers.size(); ++i) {
            auto& l = w.layers[i];
            const std::string p = "layers." + std::to_string(i) + ".";
            fn(p + "attn_norm", l.attn_norm);
            fn(p + "wq", l.wq);
            fn(p + "wk", l.wk);
            fn(p + "wv", l.wv);
            fn(p + "wo", l.wo);
            fn(p + "mlp_norm", l.mlp_norm);
            fn(p + "w1", l.w1);
            fn(p + "w2", l.w2);
        }
        fn(std::string("final_norm"), w.final_norm);
        if (!w.config.tied_head) fn(std::string("head"), w.head);
    }

   public:
    using value_type = T;
};

// Deterministic initialisation: N(0, 0.02) everywhere, residual output
// projections scaled by 1/sqrt(2 * layers), norm gains at 1.
template <typename T = float>
Weights<T> init_weights(const ModelConfig& cfg, std::uint64_t seed) {
    Weights<T> w = Weights<T>::zeros(cfg);
    std::mt19937_64 rng(seed);
    const double base = 0.02;
    const double resid = base / std::sqrt(2.0 * cfg.layers);
    auto fill = [&](Tensor<T>& t, double stddev) {
        std::normal_distribution<double> nd(0.0, stddev);
        for (auto& v : t.span()) v = static_cast<T>(nd(rng));
    };
    fill(w.tok_emb, base);
    if (cfg.positional == PositionalScheme::LearnedAbsolute) fill(w.pos_emb, base);
    for (auto& l : w.layers) {
        fill(l.wq, base);
        fill(l.wk, base);
        fill(l.wv, base);
        fill(l.wo, resid);
        fill(l.w1, base);
        fill(l.w2, resid);
    }
    if (cfg.tied_head)
        w.sync_tied_head();
    else
        fill(w.head, base);
    return w;
}

}  // namespace onepass
