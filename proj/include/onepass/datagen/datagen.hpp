#pragma once

// Target texts from four sources: uniform random tokens, slices of the
// pretraining split, slices of the held-out split, and model continuations.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/io/checksum.hpp"
#include "onepass/io/files.hpp"
#include "onepass/tinylm/lm.hpp"
#include "onepass/tinylm/pretrain.hpp"
#include "onepass/tokenizer/tokenizer.hpp"

namespace onepass {

enum class TextSource { Random, Seen, Unseen, Generated };

inline std::string to_string(TextSource s) {
    switch (s) {
        case TextSource::Random: return "random";
        case TextSource::Seen: return "seen";
        case TextSource::Unseen: return "unseen";
        case TextSource::Generated: return "generated";
    }
    return "?";
}

inline TextSource text_source_from_string(const std::string& s) {
    if (s == "random") return TextSource::Random;
    if (s == "seen") return TextSource::Seen;
    if (s == "unseen") return TextSource::Unseen;
    if (s == "generated") return TextSource::Generated;
    throw ConfigError("unknown text source '" + s + "'");
}

struct TargetText {
    std::vector<TokenId> ids;
    TextSource source = TextSource::Random;
    std::string context_id;  // empty unless generated
    std::string text_id;
};

// Every non-special id below the vocabulary size.
inline std::vector<TokenId> usable_ids(std::size_t vocab) {
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < vocab; ++i)
        if (!Tokenizer::is_special(static_cast<TokenId>(i))) out.push_back(static_cast<TokenId>(i));
    return out;
}

inline TargetText random_token_text(std::span<const TokenId> usable, std::size_t N, std::uint64_t seed) {
    if (usable.empty()) throw InputError("random text needs at least one usable id");
    if (N == 0) throw InputError("random text of length 0");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
    TargetText t;
    t.source = TextSource::Random;
    t.text_id = "random-s" + std::to_string(seed) + "-n" + std::to_string(N);
    for (std::size_t i = 0; i < N; ++i) t.ids.push_back(usable[pick(rng)]);
    return t;
}

// Token intervals [start, end) of the pretraining (seen) and held-out (unseen)
// parts of a tokenized corpus. Fixed before pretraining and stored next to
// the checkpoint.
struct SplitManifest {
    struct Interval {
        std::size_t start = 0, end = 0;
        std::size_t size() const { return end - start; }
        friend bool operator==(const Interval&, const Interval&) = default;
    };

    std::size_t tokens = 0;
    std::uint32_t corpus_checksum = 0;  // CRC-32 of the token ids
    std::vector<Interval> seen, unseen;

    const std::vector<Interval>& intervals(TextSource s) const {
        if (s == TextSource::Seen) return seen;
        if (s == TextSource::Unseen) return unseen;
        throw InputError("split manifest only covers seen and unseen text");
    }

    // Concatenated ids of a split (used as pretraining data for seen).
    std::vector<TokenId> gather(std::span<const TokenId> ids, TextSource s) const {
        std::vector<TokenId> out;
        for (const auto& iv : intervals(s)) out.insert(out.end(), ids.begin() + iv.start, ids.begin() + iv.end);
        return out;
    }

    void validate() const {
        std::vector<Interval> all(seen);
        all.insert(all.end(), unseen.begin(), unseen.end());
        std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.start < b.start; });
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (all[i].start >= all[i].end || all[i].end > tokens) throw CorruptionError("split interval out of range");
            if (i && all[i].start < all[i - 1].end) throw CorruptionError("split intervals overlap");
        }
    }

    friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

inline std::uint32_t ids_checksum(std::span<const TokenId> ids) { return io::crc32(ids.data(), ids.size_bytes()); }

// Seen is the leading part, unseen the trailing `unseen_fraction`.
inline SplitManifest make_split(std::span<const TokenId> ids, double unseen_fraction = 0.05) {
    if (!(unseen_fraction > 0 && unseen_fraction < 1)) throw ConfigError("unseen fraction must lie in (0, 1)");
    if (ids.size() < 2) throw InputError("corpus too small to split");
    SplitManifest m;
    m.tokens = ids.size();
    m.corpus_checksum = ids_checksum(ids);
    std::size_t cut = static_cast<std::size_t>(double(ids.size()) * (1 - unseen_fraction));
    cut = std::clamp<std::size_t>(cut, 1, ids.size() - 1);
    m.seen.push_back({0, cut});
    m.unseen.push_back({cut, ids.size()});
    return m;
}

inline std::string serialize_split(const SplitManifest& m) {
    std::ostringstream os;
    os << "onepass-split 1\n" << "tokens " << m.tokens << "\n" << "corpus_crc " << io::hex32(m.corpus_checksum) << "\n";
    for (const auto& iv : m.seen) os << "seen " << iv.start << " " << iv.end << "\n";
    for (const auto& iv : m.unseen) os << "unseen " << iv.start << " " << iv.end << "\n";
    return os.str();
}

inline SplitManifest deserialize_split(const std::string& text) {
    std::istringstream is(text);
    std::string word;
    int version = 0;
    if (!(is >> word) || word != "onepass-split") throw CorruptionError("not a split manifest");
    if (!(is >> version)) throw CorruptionError("split manifest has no version");
    if (version != 1) throw VersionError("split manifest version " + std::to_string(version));
    SplitManifest m;
    std::string crc;
    if (!(is >> word) || word != "tokens" || !(is >> m.tokens)) throw CorruptionError("split manifest lacks token count");
    if (!(is >> word) || word != "corpus_crc" || !(is >> crc) || crc.size() != 8)
        throw CorruptionError("split manifest lacks corpus checksum");
    try {
        m.corpus_checksum = static_cast<std::uint32_t>(std::stoul(crc, nullptr, 16));
    } catch (const std::exception&) {
        throw CorruptionError("malformed corpus checksum");
    }
    while (is >> word) {
        SplitManifest::Interval iv;
        if (!(is >> iv.start >> iv.end)) throw CorruptionError("truncated split interval");
        if (word == "seen")
            m.seen.push_back(iv);
        else if (word == "unseen")
            m.unseen.push_back(iv);
        else
            throw CorruptionError("unknown split entry '" + word + "'");
    }
    m.validate();
    return m;
}

inline void save_split(const std::filesystem::path& p, const SplitManifest& m) { io::write_file(p, serialize_split(m)); }
inline SplitManifest load_split(const std::filesystem::path& p) { return deserialize_split(io::read_file(p)); }

// Slice `index` of length N from a split: the split's intervals are cut into
// consecutive non-overlapping N-token windows, and windows never straddle an
// interval boundary.
inline TargetText corpus_slice(std::span<const TokenId> ids, const SplitManifest& split, TextSource source,
                               std::size_t index, std::size_t N) {
    if (N == 0) throw InputError("corpus slice of length 0");
    if (split.tokens != ids.size() || split.corpus_checksum != ids_checksum(ids))
        throw InputError("split manifest does not describe this corpus");
    std::size_t k = index;
    for (const auto& iv : split.intervals(source)) {
        const std::size_t windows = iv.size() / N;
        if (k < windows) {
            const std::size_t start = iv.start + k * N;
            TargetText t;
            t.ids.assign(ids.begin() + start, ids.begin() + start + N);
            t.source = source;
            t.text_id = to_string(source) + "-" + std::to_string(index) + "-n" + std::to_string(N);
            return t;
        }
        k -= windows;
    }
    throw InputError("corpus slice " + std::to_string(index) + " of length " + std::to_string(N) + " is out of bounds");
}

// Number of N-token windows a split offers.
inline std::size_t slice_count(const SplitManifest& split, TextSource source, std::size_t N) {
    if (N == 0) throw InputError("corpus slice of length 0");
    std::size_t n = 0;
    for (const auto& iv : split.intervals(source)) n += iv.size() / N;
    return n;
}

// `count` slices spread evenly over the split, so texts come from different
// parts of the corpus.
inline std::vector<TargetText> spread_slices(std::span<const TokenId> ids, const SplitManifest& split,
                                             TextSource source, std::size_t count, std::size_t N) {
    const std::size_t available = slice_count(split, source, N);
    if (count > available)
        throw InputError("split has " + std::to_string(available) + " windows of length " + std::to_string(N) +
                         ", " + std::to_string(count) + " requested");
    std::vector<TargetText> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(corpus_slice(ids, split, source, i * (available / count), N));
    return out;
}

// N tokens sampled at temperature 1 after [BOS, context].
inline TargetText model_continuation(const Transformer<float>& model, const TargetText& context, std::size_t N,
                                     std::uint64_t seed) {
    if (context.ids.empty()) throw InputError("continuation needs a non-empty context");
    if (1 + context.ids.size() + N > model.config().max_positions)
        throw InputError("context of " + std::to_string(context.ids.size()) + " tokens plus " + std::to_string(N) +
                         " continuation tokens exceeds the context window");
    std::vector<TokenId> prompt{Tokenizer::kBos};
    prompt.insert(prompt.end(), context.ids.begin(), context.ids.end());
    TargetText t;
    t.ids = ar_generate(model, embed(model.weights(), prompt), N, {SamplingMode::Multinomial, 1.0, seed});
    t.source = TextSource::Generated;
    t.context_id = context.text_id;
    t.text_id = "gen-" + context.text_id + "-s" + std::to_string(seed) + "-n" + std::to_string(N);
    return t;
}

}  // namespace onepass
