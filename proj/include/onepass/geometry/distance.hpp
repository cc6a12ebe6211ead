#pragma once

// Pairwise distances between labelled solutions, grouped by whether the two
// solutions encode the same text, different texts from the same context, or
// unrelated texts.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "onepass/cramming/cram.hpp"
#include "onepass/errors.hpp"
#include "onepass/geometry/tfidf.hpp"
#include "onepass/tinylm/weights.hpp"

namespace onepass {

struct SolutionLabel {
    std::string text_id;
    std::string context_id;  // empty: no context relation
    std::uint64_t seed = 0;

    friend auto operator<=>(const SolutionLabel&, const SolutionLabel&) = default;
};

struct LabeledSolution {
    SolutionLabel label;
    std::vector<float> vec;     // the vector distances are measured on
    std::vector<TokenId> text;  // token ids the solution encodes
};

enum class PairGroup { SameText, SameContext, DifferentContext };

inline std::string to_string(PairGroup g) {
    switch (g) {
        case PairGroup::SameText: return "same_text";
        case PairGroup::SameContext: return "same_context";
        case PairGroup::DifferentContext: return "different_context";
    }
    return "?";
}

inline PairGroup classify_pair(const SolutionLabel& a, const SolutionLabel& b) {
    if (a.text_id == b.text_id) return PairGroup::SameText;
    if (!a.context_id.empty() && a.context_id == b.context_id) return PairGroup::SameContext;
    return PairGroup::DifferentContext;
}

// 1 - cosine similarity, in [0, 2]. Zero vectors are at distance 1 from
// everything.
inline double cosine_distance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw InputError("cosine distance of vectors with different widths");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * b[i];
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return 1.0;
    return std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 2.0);
}

// Mean of the token embedding rows of a sequence. Used as a stand-in for a
// sentence encoder.
inline std::vector<float> mean_token_embedding(const Weights<float>& w, std::span<const TokenId> ids) {
    if (ids.empty()) throw InputError("mean embedding of an empty sequence");
    const std::size_t D = w.config.d_model;
    std::vector<double> acc(D, 0.0);
    for (TokenId t : ids) {
        if (t < 0 || static_cast<std::size_t>(t) >= w.config.vocab) throw InputError("token id outside vocabulary");
        const auto row = w.tok_emb.row(static_cast<std::size_t>(t));
        for (std::size_t i = 0; i < D; ++i) acc[i] += row[i];
    }
    std::vector<float> out(D);
    for (std::size_t i = 0; i < D; ++i) out[i] = static_cast<float>(acc[i] / double(ids.size()));
    return out;
}

struct PairRow {
    std::size_t a = 0, b = 0;  // indices into the solution list, a < b
    PairGroup group = PairGroup::DifferentContext;
    double embedding_distance = 0;
    double tfidf_distance = 0;
    // Cosine distance of mean-pooled LM token embeddings; a proxy for a
    // sentence-encoder distance.
    double proxy_semantic_distance = 0;
};

struct GroupSummary {
    std::size_t count = 0;
    double mean = 0, p10 = 0, p50 = 0, p90 = 0;
};

struct DistanceReport {
    std::string vector_choice;  // "e_m" or "e"
    std::vector<PairRow> pairs;
    GroupSummary same_text, same_context, different_context;

    const GroupSummary& summary(PairGroup g) const {
        return g == PairGroup::SameText ? same_text : g == PairGroup::SameContext ? same_context : different_context;
    }
};

// Linear interpolation between closest ranks; v must be sorted.
inline double percentile(std::span<const double> v, double q) {
    if (v.empty()) return 0;
    const double pos = q * double(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

inline GroupSummary summarize(std::vector<double> v) {
    GroupSummary s;
    s.count = v.size();
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    double sum = 0;
    for (double x : v) sum += x;
    s.mean = sum / double(v.size());
    s.p10 = percentile(v, 0.1);
    s.p50 = percentile(v, 0.5);
    s.p90 = percentile(v, 0.9);
    return s;
}

inline DistanceReport embedding_distance_report(const Weights<float>& w, std::span<const LabeledSolution> sols,
                                                const DocStats& stats, std::string vector_choice) {
    if (sols.size() < 2) throw InputError("distance report needs at least two solutions");
    std::set<SolutionLabel> seen;
    for (const auto& s : sols)
        if (!seen.insert(s.label).second)
            throw InputError("duplicate solution label " + s.label.text_id + "/" + s.label.context_id + "/" +
                             std::to_string(s.label.seed));
    std::vector<std::vector<float>> pooled;
    for (const auto& s : sols) pooled.push_back(mean_token_embedding(w, s.text));

    DistanceReport rep;
    rep.vector_choice = std::move(vector_choice);
    std::vector<double> by_group[3];
    for (std::size_t i = 0; i < sols.size(); ++i)
        for (std::size_t j = i + 1; j < sols.size(); ++j) {
            PairRow r;
            r.a = i;
            r.b = j;
            r.group = classify_pair(sols[i].label, sols[j].label);
            r.embedding_distance = cosine_distance(sols[i].vec, sols[j].vec);
            r.tfidf_distance = tfidf_distance(sols[i].text, sols[j].text, stats);
            r.proxy_semantic_distance = cosine_distance(pooled[i], pooled[j]);
            by_group[static_cast<int>(r.group)].push_back(r.embedding_distance);
            rep.pairs.push_back(r);
        }
    rep.same_text = summarize(std::move(by_group[0]));
    rep.same_context = summarize(std::move(by_group[1]));
    rep.different_context = summarize(std::move(by_group[2]));
    return rep;
}

// Label solutions for the report: under a shared m only e differs between
// solutions, so distances use e; otherwise the concatenated (e, m).
inline std::vector<LabeledSolution> label_solutions(std::span<const ProtoSolution> sols,
                                                    std::span<const std::vector<TokenId>> texts,
                                                    std::span<const std::string> context_ids, bool shared_m) {
    if (texts.size() != sols.size() || context_ids.size() != sols.size())
        throw InputError("labels do not match the number of solutions");
    std::vector<LabeledSolution> out;
    for (std::size_t i = 0; i < sols.size(); ++i)
        out.push_back({{sols[i].text_id, context_ids[i], sols[i].seed}, shared_m ? sols[i].e : sols[i].point(), texts[i]});
    return out;
}

}  // namespace onepass
