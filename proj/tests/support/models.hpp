#pragma once

// Small models and inputs shared by the unit tests.

#include <random>
#include <string>

#include "onepass/numerics/tensor.hpp"
#include "onepass/tinylm/weights.hpp"

namespace onepass::testing_support {

inline ModelConfig tiny_config(std::uint32_t d = 8, std::uint32_t V = 16, std::uint32_t layers = 2,
                               PositionalScheme pos = PositionalScheme::Rotary) {
    ModelConfig c;
    c.layers = layers;
    c.d_model = d;
    c.heads = 2;
    c.d_ff = 4 * d;
    c.vocab = V;
    c.max_positions = 32;
    c.positional = pos;
    return c;
}

inline TensorF random_embeddings(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd(0.f, 1.f);
    TensorF E = TensorF::matrix(n, d);
    for (auto& v : E.span()) v = nd(rng);
    return E;
}

// Inflate the tiny random weights so that activations are not near-linear.
inline Weights<float> lively_weights(const ModelConfig& cfg, std::uint64_t seed, float scale = 10.f) {
    auto w = init_weights<float>(cfg, seed);
    w.for_each([scale](const std::string& name, TensorF& t) {
        if (name.find("norm") == std::string::npos)
            for (auto& v : t.span()) v *= scale;
    });
    w.sync_tied_head();
    return w;
}

}  // namespace onepass::testing_support
