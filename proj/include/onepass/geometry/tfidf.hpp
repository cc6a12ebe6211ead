#pragma once

// TF-IDF over token ids. tf is the raw count of a token in a sequence; idf
// uses the smoothed form ln((1 + n) / (1 + df)) + 1 over a pool of n
// sequences, so terms seen everywhere still carry weight and unseen terms
// stay finite.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/tokenizer/tokenizer.hpp"

namespace onepass {

class DocStats {
   public:
    DocStats() = default;

    static DocStats build(std::span<const std::vector<TokenId>> pool) {
        DocStats s;
        s.n_ = pool.size();
        for (const auto& doc : pool) {
            std::vector<TokenId> uniq(doc);
            std::sort(uniq.begin(), uniq.end());
            uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
            for (TokenId t : uniq) ++s.df_[t];
        }
        return s;
    }

    std::size_t documents() const noexcept { return n_; }
    std::size_t df(TokenId t) const {
        auto it = df_.find(t);
        return it == df_.end() ? 0 : it->second;
    }
    double idf(TokenId t) const {
        return std::log((1.0 + static_cast<double>(n_)) / (1.0 + static_cast<double>(df(t)))) + 1.0;
    }

   private:
    std::size_t n_ = 0;
    std::map<TokenId, std::size_t> df_;
};

// Sparse TF-IDF vector, sorted by token id.
inline std::map<TokenId, double> tfidf_vector(std::span<const TokenId> ids, const DocStats& stats) {
    std::map<TokenId, double> v;
    for (TokenId t : ids) v[t] += 1.0;
    for (auto& [t, w] : v) w *= stats.idf(t);
    return v;
}

// 1 - cosine similarity of the two TF-IDF vectors, in [0, 1].
inline double tfidf_distance(std::span<const TokenId> a, std::span<const TokenId> b, const DocStats& stats) {
    if (a.empty() || b.empty()) throw InputError("tfidf_distance of an empty sequence");
    const auto va = tfidf_vector(a, stats), vb = tfidf_vector(b, stats);
    double dot = 0, na = 0, nb = 0;
    for (const auto& [t, w] : va) {
        na += w * w;
        auto it = vb.find(t);
        if (it != vb.end()) dot += w * it->second;
    }
    for (const auto& [t, w] : vb) nb += w * w;
    const double d = 1.0 - dot / std::sqrt(na * nb);
    return std::clamp(d, 0.0, 1.0);
}

}  // namespace onepass
