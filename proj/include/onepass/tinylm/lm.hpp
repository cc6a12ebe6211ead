#pragma once

// Token-level operations on a frozen model: embedding lookup, autoregressive
// generation and one-pass decoding.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/numerics/kernels.hpp"
#include "onepass/numerics/transformer.hpp"
#include "onepass/tokenizer/tokenizer.hpp"

namespace onepass {

enum class SamplingMode { Argmax, Multinomial };

struct SamplingSpec {
    SamplingMode mode = SamplingMode::Argmax;
    double temperature = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (mode == SamplingMode::Multinomial && !(temperature > 0))
            throw ConfigError("multinomial sampling needs a positive temperature");
    }
};

// How ar_generate evaluates the model. Cached steps one row at a time through
// a KV cache; Recompute re-runs the dense forward over the whole sequence for
// every new token (one forward per generated token).
enum class ArPath { Cached, Recompute };

// Rows of the token embedding table.
inline TensorF embed(const Weights<float>& w, std::span<const TokenId> ids) {
    const std::size_t D = w.config.d_model;
    TensorF out = TensorF::matrix(ids.size(), D);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= w.config.vocab)
            throw InputError("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                             std::to_string(w.config.vocab));
        const auto row = w.tok_emb.row(static_cast<std::size_t>(ids[i]));
        std::copy(row.begin(), row.end(), out.row(i).begin());
    }
    return out;
}

// Draws ids from logits. Uniforms are built from the top 53 bits of a
// 64-bit Mersenne twister so the stream does not depend on the standard
// library's distribution implementations.
class TokenSampler {
   public:
    explicit TokenSampler(const SamplingSpec& spec) : spec_(spec), rng_(spec.seed) { spec.validate(); }

    TokenId operator()(std::span<const float> logits) {
        if (spec_.mode == SamplingMode::Argmax)
            return static_cast<TokenId>(kernels::argmax(logits.data(), logits.size()));
        const double invT = 1.0 / spec_.temperature;
        double mx = -INFINITY;
        for (float l : logits) mx = std::max(mx, l * invT);
        probs_.resize(logits.size());
        double z = 0;
        for (std::size_t i = 0; i < logits.size(); ++i) z += probs_[i] = std::exp(logits[i] * invT - mx);
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53 * z;
        double acc = 0;
        for (std::size_t i = 0; i < probs_.size(); ++i) {
            acc += probs_[i];
            if (u < acc) return static_cast<TokenId>(i);
        }
        // Rounding left u at the very top; return the last non-zero entry.
        for (std::size_t i = probs_.size(); i-- > 0;)
            if (probs_[i] > 0) return static_cast<TokenId>(i);
        return 0;
    }

   private:
    SamplingSpec spec_;
    std::mt19937_64 rng_;
    std::vector<double> probs_;
};

// Generate n tokens after an embedding prefix (which may hold proto-tokens or
// real token embeddings). Token k is drawn from the model given the prefix
// and tokens 0..k-1.
inline std::vector<TokenId> ar_generate(const Transformer<float>& model, const TensorF& prefix, std::size_t n,
                                        const SamplingSpec& sampling, ArPath path = ArPath::Cached) {
    const auto& cfg = model.config();
    if (n == 0) return {};
    if (prefix.rows() == 0) throw InputError("ar_generate needs a non-empty prefix");
    if (prefix.cols() != cfg.d_model) throw ConfigError("ar_generate: prefix width does not match d_model");
    if (prefix.rows() + n > cfg.max_positions)
        throw InputError("ar_generate: prefix " + std::to_string(prefix.rows()) + " + " + std::to_string(n) +
                         " tokens exceeds the context window of " + std::to_string(cfg.max_positions));
    TokenSampler sample(sampling);
    std::vector<TokenId> out;
    out.reserve(n);
    if (path == ArPath::Cached) {
        auto st = model.start_decode();
        std::vector<float> logits;
        for (std::size_t i = 0; i < prefix.rows(); ++i) logits = model.step(st, prefix.row(i));
        for (std::size_t k = 0; k < n; ++k) {
            out.push_back(sample(logits));
            if (k + 1 < n) logits = model.step(st, model.weights().tok_emb.row(static_cast<std::size_t>(out.back())));
        }
    } else {
        TensorF seq = prefix;
        Trace<float> tr;
        for (std::size_t k = 0; k < n; ++k) {
            model.forward(seq, tr);
            out.push_back(sample(tr.logits.row(seq.rows() - 1)));
            if (k + 1 < n) {
                TensorF grown = TensorF::matrix(seq.rows() + 1, cfg.d_model);
                std::copy(seq.data(), seq.data() + seq.size(), grown.data());
                const auto row = model.weights().tok_emb.row(static_cast<std::size_t>(out.back()));
                std::copy(row.begin(), row.end(), grown.row(seq.rows()).begin());
                seq = std::move(grown);
            }
        }
    }
    return out;
}

// Argmax at each requested position from a single dense forward.
inline std::vector<TokenId> one_pass_decode(const Transformer<float>& model, const TensorF& E,
                                            std::span<const std::size_t> positions) {
    for (auto p : positions)
        if (p >= E.rows()) throw InputError("one_pass_decode: position outside the input");
    const TensorF logits = model.forward(E);
    std::vector<TokenId> out;
    out.reserve(positions.size());
    for (auto p : positions) out.push_back(static_cast<TokenId>(kernels::argmax(logits.row(p).data(), logits.cols())));
    return out;
}

}  // namespace onepass
