#pragma once

// Experiment configuration in a line-based key-value format:
//
//   # comment
//   checkpoint = runs/desk.ptlm
//   seeds = 0, 1, 2
//
// Keys are unique; list values are comma-separated; paths are relative to
// the config file's directory.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "onepass/cramming/arrangement.hpp"
#include "onepass/cramming/cram.hpp"
#include "onepass/errors.hpp"
#include "onepass/io/checksum.hpp"
#include "onepass/io/files.hpp"

namespace onepass {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline KeyValues parse_key_values(std::string_view text) {
    KeyValues kv;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::string t = detail::trim(line.substr(0, line.find('#')));
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (!kv.emplace(key, value).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    return kv;
}

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
    T v{};
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError("'" + key + "': cannot parse '" + s + "' as a number");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("'" + key + "': expected true or false, got '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
std::vector<T> parse_number_list(const std::string& key, const std::string& s) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) out.push_back(parse_number<T>(key, item));
    return out;
}

inline Share share_from_string(const std::string& s) {
    if (s == "none") return Share::None;
    if (s == "e") return Share::E;
    if (s == "m") return Share::M;
    throw ConfigError("unknown sharing mode '" + s + "'");
}

struct ExperimentConfig {
    std::filesystem::path checkpoint, tokenizer, corpus, split, output = "out";
    std::vector<std::string> tables{"arrangement", "capacity"};
    Arrangement arrangement{};
    bool bos_first = false;
    OptSpec opt;
    std::vector<std::size_t> arrangement_lengths{1, 2, 4, 8, 16};
    std::vector<std::size_t> ladder;  // empty: the default capacity ladder
    double threshold = 0.99;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t texts = 10;          // texts per source
    std::vector<std::string> sources{"seen", "unseen", "random", "generated"};
    std::size_t context_length = 128;  // for generated texts
    std::size_t text_length = 64;      // base text length for capacity runs
    Share share = Share::M;
    std::size_t group_size = 4;
    std::size_t group_length = 8;
    std::size_t restarts = 3;
    std::size_t interp_texts = 3;
    std::size_t interp_length = 8;
    std::size_t bezier_steps = 500;
    std::size_t distance_contexts = 3;
    std::size_t distance_continuations = 3;
    std::size_t distance_length = 8;
    std::vector<std::size_t> bench_lengths{16, 32, 64, 128};
    std::size_t bench_repetitions = 5;
    std::size_t workers = 0;  // 0: hardware concurrency

    static const std::vector<std::string>& known_tables() {
        static const std::vector<std::string> t{"arrangement", "sharing", "capacity", "interp", "distance", "bench"};
        return t;
    }

    static ExperimentConfig from_key_values(const KeyValues& kv, const std::filesystem::path& base = {}) {
        ExperimentConfig c;
        auto path = [&](const std::string& v) {
            std::filesystem::path p(v);
            return p.is_relative() && !base.empty() ? base / p : p;
        };
        for (const auto& [k, v] : kv) {
            if (k == "checkpoint") c.checkpoint = path(v);
            else if (k == "tokenizer") c.tokenizer = path(v);
            else if (k == "corpus") c.corpus = path(v);
            else if (k == "split") c.split = path(v);
            else if (k == "output") c.output = path(v);
            else if (k == "tables") c.tables = split_list(v);
            else if (k == "arrangement") c.arrangement = arrangement_from_string(v);
            else if (k == "bos_first") c.bos_first = parse_bool(k, v);
            else if (k == "learning_rate") c.opt.learning_rate = parse_number<double>(k, v);
            else if (k == "beta1") c.opt.beta1 = parse_number<double>(k, v);
            else if (k == "beta2") c.opt.beta2 = parse_number<double>(k, v);
            else if (k == "weight_decay") c.opt.weight_decay = parse_number<double>(k, v);
            else if (k == "max_steps") c.opt.max_steps = parse_number<std::size_t>(k, v);
            else if (k == "early_stop") c.opt.early_stop_on_perfect = parse_bool(k, v);
            else if (k == "arrangement_lengths") c.arrangement_lengths = parse_number_list<std::size_t>(k, v);
            else if (k == "ladder") c.ladder = parse_number_list<std::size_t>(k, v);
            else if (k == "threshold") c.threshold = parse_number<double>(k, v);
            else if (k == "seeds") c.seeds = parse_number_list<std::uint64_t>(k, v);
            else if (k == "texts") c.texts = parse_number<std::size_t>(k, v);
            else if (k == "sources") c.sources = split_list(v);
            else if (k == "context_length") c.context_length = parse_number<std::size_t>(k, v);
            else if (k == "text_length") c.text_length = parse_number<std::size_t>(k, v);
            else if (k == "share") c.share = share_from_string(v);
            else if (k == "group_size") c.group_size = parse_number<std::size_t>(k, v);
            else if (k == "group_length") c.group_length = parse_number<std::size_t>(k, v);
            else if (k == "restarts") c.restarts = parse_number<std::size_t>(k, v);
            else if (k == "bench_repetitions") c.bench_repetitions = parse_number<std::size_t>(k, v);
            else if (k == "bezier_steps") c.bezier_steps = parse_number<std::size_t>(k, v);
            else if (k == "interp_texts") c.interp_texts = parse_number<std::size_t>(k, v);
            else if (k == "interp_length") c.interp_length = parse_number<std::size_t>(k, v);
            else if (k == "distance_contexts") c.distance_contexts = parse_number<std::size_t>(k, v);
            else if (k == "distance_continuations") c.distance_continuations = parse_number<std::size_t>(k, v);
            else if (k == "distance_length") c.distance_length = parse_number<std::size_t>(k, v);
            else if (k == "bench_lengths") c.bench_lengths = parse_number_list<std::size_t>(k, v);
            else if (k == "workers") c.workers = parse_number<std::size_t>(k, v);
            else throw ConfigError("unknown config key '" + k + "'");
        }
        return c;
    }

    static ExperimentConfig load(const std::filesystem::path& p) {
        return from_key_values(parse_key_values(io::read_file(p)), p.parent_path());
    }

    // Canonical key-value text; its CRC is the config hash stamped on outputs.
    KeyValues to_key_values() const {
        auto join = [](const auto& xs) {
            std::string s;
            for (const auto& x : xs) {
                if (!s.empty()) s += ", ";
                if constexpr (std::is_same_v<std::decay_t<decltype(x)>, std::string>)
                    s += x;
                else
                    s += std::to_string(x);
            }
            return s;
        };
        auto num = [](double d) {
            char buf[32];
            const auto r = std::to_chars(buf, buf + sizeof buf, d);
            return std::string(buf, r.ptr);
        };
        return {{"checkpoint", checkpoint.string()},
                {"tokenizer", tokenizer.string()},
                {"corpus", corpus.string()},
                {"split", split.string()},
                {"output", output.string()},
                {"tables", join(tables)},
                {"arrangement", to_string(arrangement)},
                {"bos_first", bos_first ? "true" : "false"},
                {"learning_rate", num(opt.learning_rate)},
                {"beta1", num(opt.beta1)},
                {"beta2", num(opt.beta2)},
                {"weight_decay", num(opt.weight_decay)},
                {"max_steps", std::to_string(opt.max_steps)},
                {"early_stop", opt.early_stop_on_perfect ? "true" : "false"},
                {"arrangement_lengths", join(arrangement_lengths)},
                {"ladder", join(ladder)},
                {"threshold", num(threshold)},
                {"seeds", join(seeds)},
                {"texts", std::to_string(texts)},
                {"sources", join(sources)},
                {"context_length", std::to_string(context_length)},
                {"text_length", std::to_string(text_length)},
                {"share", to_string(share)},
                {"group_size", std::to_string(group_size)},
                {"group_length", std::to_string(group_length)},
                {"restarts", std::to_string(restarts)},
                {"bench_repetitions", std::to_string(bench_repetitions)},
                {"bezier_steps", std::to_string(bezier_steps)},
                {"interp_texts", std::to_string(interp_texts)},
                {"interp_length", std::to_string(interp_length)},
                {"distance_contexts", std::to_string(distance_contexts)},
                {"distance_continuations", std::to_string(distance_continuations)},
                {"distance_length", std::to_string(distance_length)},
                {"bench_lengths", join(bench_lengths)},
                {"workers", std::to_string(workers)}};
    }

    std::string canonical_text() const {
        std::string s;
        for (const auto& [k, v] : to_key_values()) s += k + " = " + v + "\n";
        return s;
    }

    // Hash over everything that affects results (paths and worker count are
    // excluded so relocated inputs and parallelism do not change it).
    std::uint32_t hash() const {
        auto kv = to_key_values();
        for (const char* k : {"checkpoint", "tokenizer", "corpus", "split", "output", "workers"}) kv.erase(k);
        std::string s;
        for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
        return io::crc32(s);
    }

    void validate() const {
        opt.validate();
        if (seeds.empty()) throw ConfigError("seed list is empty");
        for (const auto& [name, p] : {std::pair<const char*, const std::filesystem::path*>{"checkpoint", &checkpoint},
                                      {"tokenizer", &tokenizer},
                                      {"corpus", &corpus},
                                      {"split", &split}})
            if (p->empty() || !std::filesystem::exists(*p))
                throw ConfigError(std::string(name) + " file '" + p->string() + "' does not exist");
        for (const auto& t : tables)
            if (std::find(known_tables().begin(), known_tables().end(), t) == known_tables().end())
                throw ConfigError("unknown table '" + t + "'");
        for (const auto& s : sources) text_source_from_string_checked(s);
        if (texts == 0) throw ConfigError("texts must be positive");
        if (!(threshold > 0)) throw ConfigError("threshold must be positive");
        if (group_size == 0 || restarts == 0) throw ConfigError("group size and restarts must be positive");
        if (bench_repetitions == 0) throw ConfigError("bench repetitions must be positive");
        if (arrangement_lengths.empty()) throw ConfigError("arrangement lengths are empty");
        if (std::find(tables.begin(), tables.end(), "interp") != tables.end() && seeds.size() < 2)
            throw ConfigError("interpolation needs at least two seeds");
    }

   private:
    static void text_source_from_string_checked(const std::string& s) {
        if (s != "seen" && s != "unseen" && s != "random" && s != "generated")
            throw ConfigError("unknown text source '" + s + "'");
    }
};

}  // namespace onepass
