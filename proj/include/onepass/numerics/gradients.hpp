#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/numerics/kernels.hpp"
#include "onepass/numerics/transformer.hpp"

namespace onepass {

inline constexpr std::int32_t kUnguided = -1;

// Which input rows need gradients and which positions carry a target.
struct GradRequest {
    std::vector<std::size_t> positions;
    std::vector<bool> guided_mask;

    static GradRequest all(std::size_t n, std::vector<bool> guided) {
        GradRequest r;
        r.positions.resize(n);
        for (std::size_t i = 0; i < n; ++i) r.positions[i] = i;
        r.guided_mask = std::move(guided);
        return r;
    }
};

// Sum of cross-entropies (nats) over rows with target_at[i] != kUnguided.
// When dlogits is non-null it receives d(loss)/d(logits); unguided rows are 0.
template <typename T>
double cross_entropy_rows(const Tensor<T>& logits, std::span<const std::int32_t> target_at, Tensor<T>* dlogits) {
    const std::size_t N = logits.rows(), V = logits.cols();
    if (target_at.size() != N) throw InputError("cross_entropy_rows: target count does not match rows");
    if (dlogits) dlogits->resize({N, V});
    double loss = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const std::int32_t t = target_at[i];
        if (t == kUnguided) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= V)
            throw InputError("target id " + std::to_string(t) + " outside vocabulary of " + std::to_string(V));
        const T* row = logits.row(i).data();
        const T lse = kernels::logsumexp(row, V);
        loss += static_cast<double>(lse - row[t]);
        if (dlogits) {
            T* d = dlogits->row(i).data();
            for (std::size_t v = 0; v < V; ++v) d[v] = std::exp(row[v] - lse);
            d[t] -= T(1);
        }
    }
    if (!std::isfinite(loss)) throw NumericError("cross-entropy is not finite");
    return loss;
}

template <typename T>
struct LossAndGrad {
    double loss = 0;
    Tensor<T> dE;
};

// Cross-entropy summed over guided positions and its exact gradient with
// respect to the input embeddings. `targets` lists one token id per guided
// position, in position order.
template <typename T>
LossAndGrad<T> loss_and_input_grad(const Transformer<T>& model, const Tensor<T>& E, std::span<const std::int32_t> targets,
                                   const GradRequest& req, Trace<T>* trace = nullptr) {
    const std::size_t N = E.rows();
    if (req.guided_mask.size() != N) throw InputError("guided mask length does not match input length");
    for (auto p : req.positions)
        if (p >= N) throw InputError("gradient requested for position outside the input");
    std::vector<std::int32_t> target_at(N, kUnguided);
    std::size_t next = 0;
    for (std::size_t i = 0; i < N; ++i) {
        if (!req.guided_mask[i]) continue;
        if (next >= targets.size()) throw InputError("fewer targets than guided positions");
        target_at[i] = targets[next++];
    }
    if (next == 0) throw InputError("loss needs at least one guided position");
    if (next != targets.size()) throw InputError("more targets than guided positions");

    Trace<T> local;
    Trace<T>& tr = trace ? *trace : local;
    model.forward(E, tr);
    Tensor<T> dlogits;
    LossAndGrad<T> out;
    out.loss = cross_entropy_rows(tr.logits, target_at, &dlogits);
    model.backward(tr, dlogits, out.dE);
    return out;
}

struct GradCheckCase {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    double max_rel_error = 0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    double tolerance = 0;
    bool all_passed() const {
        for (const auto& c : cases)
            if (!c.passed) return false;
        return !cases.empty();
    }
};

struct GradCheckOptions {
    std::size_t n = 4;
    double tolerance = 1e-4;
    double step = 1e-3;
    // Weights are rescaled by this factor after initialisation so the check
    // exercises the nonlinear regime rather than near-zero activations.
    double weight_scale = 10.0;
    int flip_attention_grad_layer = -1;
};

// Relative error used by the checker: |a - f| / max(|a|, |f|, floor), where
// the floor is 1e-3 of the largest gradient magnitude so that entries that
// are numerically zero do not dominate.
inline double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return denom == 0 ? 0 : std::abs(analytic - numeric) / denom;
}

// Compare input-embedding gradients against central finite differences in
// 64-bit arithmetic on a randomly initialised model, one case per seed.
inline GradCheckReport check_gradients(const ModelConfig& cfg, std::span<const std::uint64_t> seeds,
                                       const GradCheckOptions& opt = {}) {
    cfg.validate();
    if (opt.n * cfg.d_model > 256) throw ConfigError("gradient check limited to N * d_model <= 256");
    if (opt.n == 0 || opt.n > cfg.max_positions) throw ConfigError("gradient check length out of range");
    GradCheckReport report;
    report.tolerance = opt.tolerance;
    for (std::uint64_t seed : seeds) {
        Weights<double> w = init_weights<double>(cfg, seed);
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
        std::normal_distribution<double> nd(0.0, 1.0);
        w.for_each([&](const std::string& name, Tensor<double>& t) {
            const bool gain = name.find("norm") != std::string::npos;
            for (auto& v : t.span()) v = gain ? 1.0 + 0.3 * nd(rng) : v * opt.weight_scale;
        });
        Transformer<double> model(std::move(w));
        model.debug_flip_attention_grad_layer = opt.flip_attention_grad_layer;

        const std::size_t N = opt.n, D = cfg.d_model;
        Tensor<double> E = Tensor<double>::matrix(N, D);
        for (auto& v : E.span()) v = nd(rng);
        std::vector<bool> guided(N);
        std::bernoulli_distribution coin(0.7);
        for (std::size_t i = 0; i < N; ++i) guided[i] = coin(rng);
        guided[N - 1] = true;
        std::uniform_int_distribution<std::int32_t> tok(0, static_cast<std::int32_t>(cfg.vocab) - 1);
        std::vector<std::int32_t> targets;
        for (std::size_t i = 0; i < N; ++i)
            if (guided[i]) targets.push_back(tok(rng));
        const GradRequest req = GradRequest::all(N, guided);

        const auto analytic = loss_and_input_grad<double>(model, E, targets, req);
        double gmax = 0;
        for (double g : analytic.dE.span()) gmax = std::max(gmax, std::abs(g));
        const double floor = 1e-3 * gmax + 1e-12;
        double worst = 0;
        for (std::size_t idx = 0; idx < E.size(); ++idx) {
            const double orig = E[idx];
            E[idx] = orig + opt.step;
            const double up = loss_and_input_grad<double>(model, E, targets, req).loss;
            E[idx] = orig - opt.step;
            const double down = loss_and_input_grad<double>(model, E, targets, req).loss;
            E[idx] = orig;
            const double numeric = (up - down) / (2 * opt.step);
            worst = std::max(worst, relative_error(analytic.dE[idx], numeric, floor));
        }
        report.cases.push_back({seed, N, worst, worst <= opt.tolerance});
    }
    return report;
}

}  // namespace onepass
