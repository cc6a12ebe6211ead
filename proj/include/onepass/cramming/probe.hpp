#pragma once

// Use a crammed (e, m) pair as a prompt: feed it (optionally after the BOS
// embedding) and let the model continue autoregressively.

#include <optional>
#include <span>
#include <vector>

#include "onepass/cramming/cram.hpp"
#include "onepass/geometry/tfidf.hpp"
#include "onepass/tinylm/lm.hpp"

namespace onepass {

struct ProbeReport {
    std::vector<TokenId> ids;
    // Unset when there is nothing to compare (empty generation or no context).
    std::optional<double> tfidf_to_target;
    std::optional<double> tfidf_to_context;
};

inline TensorF probe_prefix(const Transformer<float>& model, const ProtoSolution& sol, bool bos_first) {
    const std::size_t D = model.config().d_model;
    if (sol.e.size() != D || sol.m.size() != D) throw InputError("solution width does not match the model");
    TensorF P = TensorF::matrix(bos_first ? 3 : 2, D);
    std::size_t r = 0;
    if (bos_first) {
        const auto b = model.weights().tok_emb.row(Tokenizer::kBos);
        std::copy(b.begin(), b.end(), P.row(r++).begin());
    }
    std::copy(sol.e.begin(), sol.e.end(), P.row(r++).begin());
    std::copy(sol.m.begin(), sol.m.end(), P.row(r).begin());
    return P;
}

inline ProbeReport probe_as_context(const Transformer<float>& model, const ProtoSolution& sol, bool bos_first,
                                    std::size_t n, const SamplingSpec& sampling, std::span<const TokenId> target,
                                    std::span<const TokenId> context, const DocStats& stats) {
    ProbeReport rep;
    rep.ids = ar_generate(model, probe_prefix(model, sol, bos_first), n, sampling);
    if (rep.ids.empty()) return rep;
    if (!target.empty()) rep.tfidf_to_target = tfidf_distance(rep.ids, target, stats);
    if (!context.empty()) rep.tfidf_to_context = tfidf_distance(rep.ids, context, stats);
    return rep;
}

}  // namespace onepass
