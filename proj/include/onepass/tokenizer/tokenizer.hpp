#pragma once

// Byte-level BPE. Ids 0..255 are raw bytes, 256 is BOS, 257 is PAD, and every
// id from 258 up is a learned merge. Text is split into chunks (leading
// whitespace glued to the following run of non-whitespace) and merges never
// cross a chunk boundary.

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/io/checksum.hpp"

namespace onepass {

using TokenId = std::int32_t;

class Tokenizer {
   public:
    static constexpr TokenId kBos = 256;
    static constexpr TokenId kPad = 257;
    static constexpr std::size_t kBaseSize = 258;
    static constexpr int kFormatVersion = 1;

    // Byte-level tokenizer with no merges.
    Tokenizer() {
        vocab_.resize(kBaseSize);
        for (int b = 0; b < 256; ++b) vocab_[b] = std::string(1, static_cast<char>(b));
    }

    // Greedy BPE training: repeatedly merge the most frequent adjacent pair
    // (ties broken by the smaller (left, right) id pair) until vocab_size ids
    // exist or no adjacent pair is left.
    static Tokenizer build(std::string_view corpus, std::size_t vocab_size) {
        if (vocab_size < kBaseSize) throw ConfigError("vocab_size must be at least 258");
        if (corpus.empty()) throw InputError("cannot build a tokenizer from an empty corpus");
        Tokenizer tok;
        std::map<std::string_view, std::size_t> counts;
        for (auto c : chunks(corpus)) ++counts[c];
        std::vector<std::vector<TokenId>> words;
        std::vector<std::size_t> freq;
        words.reserve(counts.size());
        for (const auto& [w, n] : counts) {
            words.emplace_back(w.begin(), w.end());
            for (auto& id : words.back()) id = static_cast<unsigned char>(id);
            freq.push_back(n);
        }
        while (tok.vocab_.size() < vocab_size) {
            std::map<std::pair<TokenId, TokenId>, std::size_t> pairs;
            for (std::size_t w = 0; w < words.size(); ++w)
                for (std::size_t i = 0; i + 1 < words[w].size(); ++i) pairs[{words[w][i], words[w][i + 1]}] += freq[w];
            std::pair<TokenId, TokenId> best{};
            std::size_t best_n = 0;
            for (const auto& [p, n] : pairs)
                if (n > best_n) {
                    best = p;
                    best_n = n;
                }
            if (best_n == 0) break;
            const TokenId id = tok.add_merge(best);
            for (auto& w : words) merge_in_place(w, best, id);
        }
        return tok;
    }

    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    const std::vector<std::pair<TokenId, TokenId>>& merges() const noexcept { return merges_; }
    const std::string& piece(TokenId id) const {
        check_id(id);
        return vocab_[static_cast<std::size_t>(id)];
    }
    static bool is_special(TokenId id) noexcept { return id == kBos || id == kPad; }

    std::vector<TokenId> encode(std::string_view text) const {
        std::vector<TokenId> out;
        std::unordered_map<std::string_view, std::vector<TokenId>> cache;
        for (auto c : chunks(text)) {
            auto it = cache.find(c);
            if (it == cache.end()) it = cache.emplace(c, encode_chunk(c)).first;
            out.insert(out.end(), it->second.begin(), it->second.end());
        }
        return out;
    }

    std::string decode(const std::vector<TokenId>& ids) const {
        std::string out;
        for (TokenId id : ids) out += piece(id);
        return out;
    }

    // Text format: header, one line per id (specials by name, everything
    // else as hex bytes), then the merge list in order.
    std::string serialize() const {
        std::ostringstream os;
        os << "onepass-tokenizer " << kFormatVersion << "\n";
        os << "vocab " << vocab_.size() << "\n";
        static const char* digits = "0123456789abcdef";
        for (std::size_t id = 0; id < vocab_.size(); ++id) {
            if (id == kBos) {
                os << "special bos\n";
            } else if (id == kPad) {
                os << "special pad\n";
            } else {
                os << "bytes ";
                for (unsigned char ch : vocab_[id]) os << digits[ch >> 4] << digits[ch & 15];
                os << "\n";
            }
        }
        os << "merges " << merges_.size() << "\n";
        for (const auto& [a, b] : merges_) os << a << " " << b << "\n";
        return os.str();
    }

    static Tokenizer deserialize(const std::string& text) {
        std::istringstream is(text);
        std::string tag;
        int version = 0;
        if (!(is >> tag >> version) || tag != "onepass-tokenizer") throw CorruptionError("not a tokenizer file");
        if (version != kFormatVersion) throw VersionError("tokenizer format version " + std::to_string(version));
        std::size_t n = 0, m = 0;
        if (!(is >> tag >> n) || tag != "vocab" || n < kBaseSize) throw CorruptionError("bad tokenizer vocab header");
        std::vector<std::string> lines(n);
        for (std::size_t id = 0; id < n; ++id) {
            std::string kind, payload;
            if (!(is >> kind)) throw CorruptionError("tokenizer vocab truncated");
            if (kind == "special") {
                is >> payload;
                continue;
            }
            if (kind != "bytes") throw CorruptionError("bad tokenizer vocab line");
            is >> payload;
            if (payload.size() % 2) throw CorruptionError("odd hex length in tokenizer vocab");
            for (std::size_t i = 0; i < payload.size(); i += 2)
                lines[id].push_back(static_cast<char>(std::stoi(payload.substr(i, 2), nullptr, 16)));
        }
        if (!(is >> tag >> m) || tag != "merges" || kBaseSize + m != n)
            throw CorruptionError("tokenizer merge count does not match vocab");
        Tokenizer tok;
        for (std::size_t i = 0; i < m; ++i) {
            TokenId a, b;
            if (!(is >> a >> b)) throw CorruptionError("tokenizer merges truncated");
            if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= tok.vocab_.size() ||
                static_cast<std::size_t>(b) >= tok.vocab_.size() || is_special(a) || is_special(b))
                throw CorruptionError("tokenizer merge refers to an unknown id");
            tok.add_merge({a, b});
        }
        if (tok.vocab_ != [&] {
                auto v = lines;
                v[kBos] = v[kPad] = "";
                return v;
            }())
            throw CorruptionError("tokenizer vocab does not match its merges");
        return tok;
    }

    std::uint32_t checksum() const { return io::crc32(serialize()); }

    // Split into chunks: a chunk starts wherever whitespace follows
    // non-whitespace.
    static std::vector<std::string_view> chunks(std::string_view text) {
        std::vector<std::string_view> out;
        std::size_t start = 0;
        for (std::size_t i = 1; i < text.size(); ++i)
            if (is_space(text[i]) && !is_space(text[i - 1])) {
                out.push_back(text.substr(start, i - start));
                start = i;
            }
        if (start < text.size()) out.push_back(text.substr(start));
        return out;
    }

   private:
    static bool is_space(char c) noexcept { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; }

    void check_id(TokenId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size())
            throw InputError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab_.size()));
    }

    TokenId add_merge(std::pair<TokenId, TokenId> p) {
        const TokenId id = static_cast<TokenId>(vocab_.size());
        vocab_.push_back(vocab_[p.first] + vocab_[p.second]);
        rank_[key(p)] = merges_.size();
        merges_.push_back(p);
        return id;
    }

    static std::uint64_t key(std::pair<TokenId, TokenId> p) noexcept {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(p.first)) << 32) | static_cast<std::uint32_t>(p.second);
    }

    static void merge_in_place(std::vector<TokenId>& w, std::pair<TokenId, TokenId> p, TokenId id) {
        std::size_t o = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (i + 1 < w.size() && w[i] == p.first && w[i + 1] == p.second) {
                w[o++] = id;
                ++i;
            } else {
                w[o++] = w[i];
            }
        }
        w.resize(o);
    }

    // Apply the lowest-ranked merge present, leftmost occurrence first, until
    // none applies.
    std::vector<TokenId> encode_chunk(std::string_view c) const {
        std::vector<TokenId> w(c.begin(), c.end());
        for (auto& id : w) id = static_cast<unsigned char>(id);
        while (w.size() > 1) {
            std::size_t best_rank = merges_.size();
            for (std::size_t i = 0; i + 1 < w.size(); ++i) {
                auto it = rank_.find(key({w[i], w[i + 1]}));
                if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
            }
            if (best_rank == merges_.size()) break;
            merge_in_place(w, merges_[best_rank], static_cast<TokenId>(kBaseSize + best_rank));
        }
        return w;
    }

    std::vector<std::string> vocab_;
    std::vector<std::pair<TokenId, TokenId>> merges_;
    std::unordered_map<std::uint64_t, std::size_t> rank_;
};

}  // namespace onepass
