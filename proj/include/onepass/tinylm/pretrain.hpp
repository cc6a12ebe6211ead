#pragma once

// Causal-LM pretraining of the desk model. Each step samples `batch` windows
// of `context` tokens; the model sees [BOS, w_0 .. w_{c-2}] and predicts
// w_0 .. w_{c-1}. The learning rate warms up linearly, then follows a cosine
// down to min_lr.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/numerics/gradients.hpp"
#include "onepass/numerics/optim.hpp"
#include "onepass/numerics/transformer.hpp"
#include "onepass/tinylm/lm.hpp"

namespace onepass {

struct PretrainSpec {
    std::size_t steps = 3000;
    std::size_t context = 256;
    std::size_t batch = 2;
    double lr = 3e-3;
    double min_lr = 3e-4;
    std::size_t warmup = 100;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    std::uint64_t seed = 0;

    double lr_at(std::size_t step) const {
        if (step < warmup) return lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
        const double span = static_cast<double>(std::max<std::size_t>(steps - std::min(steps, warmup), 1));
        const double frac = std::min(1.0, static_cast<double>(step - warmup) / span);
        return min_lr + 0.5 * (lr - min_lr) * (1.0 + std::cos(std::numbers::pi * frac));
    }
};

struct PretrainResult {
    Weights<float> weights;
    std::vector<double> loss_history;  // mean nats per token, one entry per step
};

// Model input for a window: BOS followed by all but the last token.
inline std::vector<TokenId> bos_shifted(std::span<const TokenId> window) {
    std::vector<TokenId> in;
    in.reserve(window.size());
    in.push_back(Tokenizer::kBos);
    in.insert(in.end(), window.begin(), window.end() - 1);
    return in;
}

using PretrainCallback = std::function<void(std::size_t step, double loss)>;

inline PretrainResult pretrain(Weights<float> weights, std::span<const TokenId> ids, const PretrainSpec& spec,
                               const PretrainCallback& on_step = {}) {
    PretrainResult res{std::move(weights), {}};
    if (spec.steps == 0) return res;
    const auto cfg = res.weights.config;
    if (spec.context == 0 || spec.context > cfg.max_positions)
        throw ConfigError("pretraining context must be in [1, max_positions]");
    if (ids.size() < spec.context) throw InputError("corpus is shorter than the pretraining context");
    if (spec.batch == 0) throw ConfigError("pretraining batch must be positive");
    if (cfg.vocab <= static_cast<std::size_t>(Tokenizer::kBos)) throw ConfigError("pretraining needs a BOS row in the vocabulary");
    for (TokenId id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab) throw InputError("corpus token outside vocabulary");

    Transformer<float> model(std::move(res.weights));
    Weights<float> grads = Weights<float>::zeros(cfg);
    std::vector<TensorF*> params, gparams;
    std::vector<bool> decays;
    model.mutable_weights().for_each([&](const std::string&, TensorF& t) {
        params.push_back(&t);
        decays.push_back(t.rank() == 2);
    });
    grads.for_each([&](const std::string&, TensorF& t) { gparams.push_back(&t); });
    std::vector<AdamWState> opt;
    for (auto* p : params) opt.emplace_back(p->size());
    const AdamWSpec aspec{spec.lr, spec.beta1, spec.beta2, spec.weight_decay, 1e-8};

    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> start(0, ids.size() - spec.context);
    Trace<float> tr;
    TensorF dlogits, dE;
    const double norm = 1.0 / static_cast<double>(spec.batch * spec.context);
    res.loss_history.reserve(spec.steps);
    for (std::size_t step = 0; step < spec.steps; ++step) {
        for (auto* g : gparams) g->fill(0.f);
        double loss = 0;
        for (std::size_t b = 0; b < spec.batch; ++b) {
            const auto window = ids.subspan(start(rng), spec.context);
            const auto in = bos_shifted(window);
            model.forward(embed(model.weights(), in), tr);
            std::vector<TokenId> target(window.begin(), window.end());
            loss += cross_entropy_rows(tr.logits, target, &dlogits);
            for (auto& v : dlogits.span()) v = static_cast<float>(v * norm);
            model.backward(tr, dlogits, dE, &grads);
            for (std::size_t i = 0; i < in.size(); ++i)
                kernels::axpy(1.f, dE.row(i).data(), grads.tok_emb.row(static_cast<std::size_t>(in[i])).data(),
                              cfg.d_model);
        }
        if (cfg.tied_head) kernels::axpy(1.f, grads.head.data(), grads.tok_emb.data(), grads.tok_emb.size());
        loss *= norm;
        if (!std::isfinite(loss)) throw NumericError("pretraining loss diverged at step " + std::to_string(step));

        double sq = 0;
        for (auto* g : gparams)
            for (float v : g->span()) sq += static_cast<double>(v) * v;
        const double gn = std::sqrt(sq);
        if (spec.grad_clip > 0 && gn > spec.grad_clip)
            for (auto* g : gparams)
                for (auto& v : g->span()) v = static_cast<float>(v * (spec.grad_clip / gn));

        const double lr = spec.lr_at(step);
        for (std::size_t i = 0; i < params.size(); ++i) opt[i].update(params[i]->span(), gparams[i]->span(), aspec, lr, decays[i]);
        model.refresh();
        res.loss_history.push_back(loss);
        if (on_step) on_step(step, loss);
    }
    res.weights = model.weights();
    return res;
}

// Mean next-token cross-entropy (nats) over consecutive non-overlapping
// windows of the held-out ids, using the same BOS convention as training.
inline double heldout_cross_entropy(const Transformer<float>& model, std::span<const TokenId> ids, std::size_t context,
                                    std::size_t max_windows = 16) {
    if (context == 0 || ids.size() < context) throw InputError("held-out slice is shorter than one window");
    double total = 0;
    std::size_t count = 0;
    Trace<float> tr;
    for (std::size_t w = 0; w < max_windows && (w + 1) * context <= ids.size(); ++w) {
        const auto window = ids.subspan(w * context, context);
        model.forward(embed(model.weights(), bos_shifted(window)), tr);
        std::vector<TokenId> target(window.begin(), window.end());
        total += cross_entropy_rows<float>(tr.logits, target, nullptr);
        count += context;
    }
    return total / static_cast<double>(count);
}

}  // namespace onepass
