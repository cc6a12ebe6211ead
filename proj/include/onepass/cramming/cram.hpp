#pragma once

// Proto-token optimisation against a frozen model. A single text is the
// one-member case of the group optimiser: every text owns its own e and m
// unless one of them is shared, in which case a single vector receives the
// summed gradient of all group losses.

#include <chrono>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "onepass/cramming/arrangement.hpp"
#include "onepass/cramming/metrics.hpp"
#include "onepass/errors.hpp"
#include "onepass/numerics/gradients.hpp"
#include "onepass/numerics/optim.hpp"
#include "onepass/numerics/transformer.hpp"

namespace onepass {

struct OptSpec {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.9;
    double weight_decay = 0.01;
    std::size_t max_steps = 5000;
    bool early_stop_on_perfect = true;

    AdamWSpec adamw() const { return {learning_rate, beta1, beta2, weight_decay, 1e-8}; }
    void validate() const { adamw().validate(); }
    friend bool operator==(const OptSpec&, const OptSpec&) = default;
};

// Wall-clock accounting for one optimisation run. Not persisted with the
// solution, so solution files stay byte-reproducible.
struct CramTiming {
    double seconds = 0;
    double step_seconds_sum = 0;
    std::size_t steps = 0;
};

struct ProtoSolution {
    std::vector<float> e, m;
    Arrangement arrangement;
    bool bos_first = false;
    std::size_t N = 0;
    std::uint64_t seed = 0;
    OptSpec opt;
    std::size_t steps_used = 0;
    std::vector<double> loss_history;  // loss (nats) at every evaluated step
    double final_accuracy = 0;
    std::size_t c_tokens = 0;
    double h_lm = 0;
    std::string text_id;
    std::uint32_t model_checksum = 0;
    std::uint32_t tokenizer_checksum = 0;
    std::uint32_t config_hash = 0;  // experiment config that produced it; 0 outside experiments
    CramTiming timing;

    Layout layout() const { return make_layout(arrangement, N, bos_first); }

    // Concatenated (e, m), the point used for interpolation geometry.
    std::vector<float> point() const {
        std::vector<float> p(e);
        p.insert(p.end(), m.begin(), m.end());
        return p;
    }
};

// Input rows for a solution under its own layout.
inline TensorF solution_input(const Transformer<float>& model, const ProtoSolution& s) {
    const Layout L = s.layout();
    return build_input(s.e, s.m, L, s.bos_first ? model.weights().tok_emb.row(Tokenizer::kBos) : std::span<const float>{});
}

enum class Share { None, E, M };

inline std::string to_string(Share s) { return s == Share::None ? "none" : s == Share::E ? "e" : "m"; }

struct GroupLoss {
    double loss = 0;  // sum over texts
    std::vector<double> per_text;
    std::vector<Accuracy> accuracy;
    std::vector<std::vector<float>> de, dm;  // per text, before any summing for sharing
};

namespace detail {

inline void check_fits(const Transformer<float>& model, const Layout& L) {
    if (L.length() > model.config().max_positions)
        throw InputError("input of " + std::to_string(L.length()) + " positions exceeds the context window of " +
                         std::to_string(model.config().max_positions));
}

inline std::vector<TokenId> targets_at(const Layout& L, std::span<const TokenId> targets) {
    std::vector<TokenId> at(L.length(), kUnguided);
    for (std::size_t k = 0; k < L.guided.size(); ++k) at[L.guided[k]] = targets[k];
    return at;
}

}  // namespace detail

// Loss, accuracy, and gradients with respect to every text's e and m.
inline GroupLoss group_loss_and_grads(const Transformer<float>& model, std::span<const std::vector<TokenId>> texts,
                                      std::span<const Layout> layouts, std::span<const std::vector<float>> e,
                                      std::span<const std::vector<float>> m, std::span<const float> bos = {}) {
    const std::size_t K = texts.size(), D = model.config().d_model;
    GroupLoss out;
    out.per_text.resize(K);
    out.accuracy.resize(K);
    out.de.assign(K, std::vector<float>(D, 0.f));
    out.dm.assign(K, std::vector<float>(D, 0.f));
    Trace<float> tr;
    TensorF dlogits, dE;
    for (std::size_t k = 0; k < K; ++k) {
        const Layout& L = layouts[k];
        const TensorF E = build_input(e[k], m[k], L, bos);
        model.forward(E, tr);
        out.per_text[k] = cross_entropy_rows(tr.logits, detail::targets_at(L, texts[k]), &dlogits);
        out.accuracy[k] = accuracy_from_logits(tr.logits, L.guided, texts[k]);
        out.loss += out.per_text[k];
        model.backward(tr, dlogits, dE);
        for (std::size_t i = 0; i < L.length(); ++i) {
            if (L.slots[i] == Slot::Bos) continue;
            auto& dst = L.slots[i] == Slot::E ? out.de[k] : out.dm[k];
            kernels::axpy(1.f, dE.row(i).data(), dst.data(), D);
        }
    }
    return out;
}

// Optimise one (e, m) pair per text, with e or m optionally shared across the
// group. Initial vectors are drawn N(0, 1) text by text (e then m) from
// `seed`; a shared vector starts from the first text's draw.
inline std::vector<ProtoSolution> cram_group(const Transformer<float>& model, std::span<const std::vector<TokenId>> texts,
                                             const Arrangement& arr, const OptSpec& opt, std::uint64_t seed,
                                             Share share, bool bos_first = false) {
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();
    opt.validate();
    if (texts.empty()) throw InputError("cramming needs at least one text");
    const std::size_t K = texts.size(), D = model.config().d_model;
    std::vector<Layout> layouts;
    for (const auto& t : texts) {
        for (TokenId id : t)
            if (id < 0 || static_cast<std::size_t>(id) >= model.config().vocab)
                throw InputError("target token " + std::to_string(id) + " outside vocabulary");
        layouts.push_back(make_layout(arr, t.size(), bos_first));
        detail::check_fits(model, layouts.back());
    }
    std::span<const float> bos;
    if (bos_first) {
        if (model.config().vocab <= static_cast<std::size_t>(Tokenizer::kBos)) throw ConfigError("model has no BOS row");
        bos = model.weights().tok_emb.row(Tokenizer::kBos);
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.f, 1.f);
    std::vector<std::vector<float>> e(K, std::vector<float>(D)), m(K, std::vector<float>(D));
    for (std::size_t k = 0; k < K; ++k) {
        for (auto& v : e[k]) v = normal(rng);
        for (auto& v : m[k]) v = normal(rng);
    }
    if (share == Share::E)
        for (std::size_t k = 1; k < K; ++k) e[k] = e[0];
    if (share == Share::M)
        for (std::size_t k = 1; k < K; ++k) m[k] = m[0];

    bool uses_m = false;
    for (const auto& L : layouts)
        for (auto s : L.slots) uses_m |= s == Slot::M;

    const AdamWSpec aspec = opt.adamw();
    std::vector<AdamWState> se(share == Share::E ? 1 : K, AdamWState(D)), sm(share == Share::M ? 1 : K, AdamWState(D));
    std::vector<ProtoSolution> sols(K);
    std::vector<float> shared_grad(D);

    std::size_t step = 0;
    double step_sum = 0;
    GroupLoss gl;
    for (;; ++step) {
        const auto t_step = clock::now();
        try {
            gl = group_loss_and_grads(model, texts, layouts, e, m, bos);
        } catch (const NumericError& err) {
            throw NumericError("cramming step " + std::to_string(step) + " (seed " + std::to_string(seed) +
                               "): " + err.what());
        }
        for (std::size_t k = 0; k < K; ++k) sols[k].loss_history.push_back(gl.per_text[k]);
        bool all_perfect = true;
        for (const auto& a : gl.accuracy) all_perfect = all_perfect && a.perfect();
        if ((all_perfect && opt.early_stop_on_perfect) || step >= opt.max_steps) {
            step_sum += std::chrono::duration<double>(clock::now() - t_step).count();
            break;
        }

        auto apply = [&](std::vector<std::vector<float>>& vecs, std::vector<std::vector<float>>& grads,
                         std::vector<AdamWState>& states, bool shared) {
            if (shared) {
                shared_grad = grads[0];
                for (std::size_t k = 1; k < K; ++k) kernels::axpy(1.f, grads[k].data(), shared_grad.data(), D);
                states[0].update(vecs[0], shared_grad, aspec, aspec.lr);
                for (std::size_t k = 1; k < K; ++k) vecs[k] = vecs[0];
            } else {
                for (std::size_t k = 0; k < K; ++k) states[k].update(vecs[k], grads[k], aspec, aspec.lr);
            }
        };
        apply(e, gl.de, se, share == Share::E);
        if (uses_m) apply(m, gl.dm, sm, share == Share::M);
        step_sum += std::chrono::duration<double>(clock::now() - t_step).count();
    }

    const double seconds = std::chrono::duration<double>(clock::now() - t_start).count();
    for (std::size_t k = 0; k < K; ++k) {
        auto& s = sols[k];
        s.e = e[k];
        s.m = m[k];
        s.arrangement = arr;
        s.bos_first = bos_first;
        s.N = texts[k].size();
        s.seed = seed;
        s.opt = opt;
        s.steps_used = step;
        s.final_accuracy = gl.accuracy[k].fraction();
        s.c_tokens = gl.accuracy[k].count;
        s.h_lm = h_lm(model, texts[k]);
        s.timing = {seconds, step_sum, step};
    }
    return sols;
}

inline ProtoSolution cram(const Transformer<float>& model, std::span<const TokenId> text, const Arrangement& arr,
                          const OptSpec& opt, std::uint64_t seed, bool bos_first = false) {
    const std::vector<std::vector<TokenId>> one{std::vector<TokenId>(text.begin(), text.end())};
    return std::move(cram_group(model, one, arr, opt, seed, Share::None, bos_first).front());
}

struct SharedGroupSpec {
    std::vector<std::vector<TokenId>> texts;
    Share shared = Share::M;
    std::size_t restarts = 1;
};

struct SharedGroupResult {
    std::vector<std::vector<ProtoSolution>> runs;  // [restart][text]

    double max_accuracy(std::size_t text) const {
        double best = 0;
        for (const auto& r : runs) best = std::max(best, r[text].final_accuracy);
        return best;
    }
    double mean_accuracy(std::size_t text) const {
        double s = 0;
        for (const auto& r : runs) s += r[text].final_accuracy;
        return runs.empty() ? 0 : s / static_cast<double>(runs.size());
    }
};

// Restart r runs with seed + r.
inline SharedGroupResult cram_shared(const Transformer<float>& model, const SharedGroupSpec& spec, const Arrangement& arr,
                                     const OptSpec& opt, std::uint64_t seed) {
    if (spec.texts.empty()) throw InputError("shared group is empty");
    if (spec.restarts == 0) throw ConfigError("shared group needs at least one restart");
    SharedGroupResult res;
    for (std::size_t r = 0; r < spec.restarts; ++r)
        res.runs.push_back(cram_group(model, spec.texts, arr, opt, seed + r, spec.shared));
    return res;
}

}  // namespace onepass
