#pragma once

// Wall-clock comparison of one-pass reconstruction against autoregressive
// generation from the same proto-token prefix, plus per-run training time
// tables.

#include <algorithm>
#include <chrono>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "onepass/cramming/cram.hpp"
#include "onepass/errors.hpp"
#include "onepass/tinylm/lm.hpp"

namespace onepass {

struct BenchResult {
    std::size_t N = 0;
    std::size_t repetitions = 0;
    double one_pass_seconds = 0;   // median
    double ar_seconds = 0;         // median, non-cached reference path
    double ar_cached_seconds = 0;  // median, KV-cached path
    std::uint64_t one_pass_forward_count = 0;
    std::uint64_t ar_forward_count = 0;  // reference path
    double throughput_ratio = 0;         // ar_seconds / one_pass_seconds
    double cached_throughput_ratio = 0;  // ar_cached_seconds / one_pass_seconds
};

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// The one-pass path is a single dense forward over the solution's input. The
// autoregressive path greedily generates the same N tokens after the prefix
// [e, m] (plus BOS when the solution uses it), once re-running the dense
// forward per token and once through the KV cache.
inline BenchResult bench_throughput(const Transformer<float>& model, const ProtoSolution& sol,
                                    std::span<const TokenId> text, std::size_t repetitions) {
    using clock = std::chrono::steady_clock;
    if (repetitions == 0) throw ConfigError("benchmark needs at least one repetition");
    if (sol.N != text.size()) throw InputError("solution length does not match the text");
    const TensorF E = solution_input(model, sol);
    const Layout L = sol.layout();
    const auto check = one_pass_decode(model, E, L.guided);
    if (!std::equal(check.begin(), check.end(), text.begin(), text.end()))
        throw InputError("benchmark needs a solution that reconstructs its text exactly");

    TensorF prefix = TensorF::matrix(sol.bos_first ? 3 : 2, model.config().d_model);
    {
        std::size_t r = 0;
        if (sol.bos_first) {
            const auto b = model.weights().tok_emb.row(Tokenizer::kBos);
            std::copy(b.begin(), b.end(), prefix.row(r++).begin());
        }
        std::copy(sol.e.begin(), sol.e.end(), prefix.row(r++).begin());
        std::copy(sol.m.begin(), sol.m.end(), prefix.row(r).begin());
    }
    if (prefix.rows() + text.size() > model.config().max_positions)
        throw InputError("autoregressive baseline does not fit in the context window");

    BenchResult res;
    res.N = text.size();
    res.repetitions = repetitions;
    std::vector<double> t1, tar, tcached;
    for (std::size_t r = 0; r < repetitions; ++r) {
        auto f0 = model.forward_count();
        auto t0 = clock::now();
        const auto one = one_pass_decode(model, E, L.guided);
        t1.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        res.one_pass_forward_count = model.forward_count() - f0;

        f0 = model.forward_count();
        t0 = clock::now();
        const auto ar = ar_generate(model, prefix, text.size(), {}, ArPath::Recompute);
        tar.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        res.ar_forward_count = model.forward_count() - f0;

        t0 = clock::now();
        const auto cached = ar_generate(model, prefix, text.size(), {}, ArPath::Cached);
        tcached.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        if (one.size() != text.size() || ar.size() != text.size() || cached != ar)
            throw NumericError("autoregressive paths disagree");
    }
    res.one_pass_seconds = detail::median(t1);
    res.ar_seconds = detail::median(tar);
    res.ar_cached_seconds = detail::median(tcached);
    res.throughput_ratio = res.ar_seconds / res.one_pass_seconds;
    res.cached_throughput_ratio = res.ar_cached_seconds / res.one_pass_seconds;
    return res;
}

struct TrainingTimeRow {
    std::string model;  // configuration label
    std::size_t N = 0;
    std::size_t runs = 0;
    double mean_seconds = 0;
    double mean_steps = 0;
    double mean_step_seconds_sum = 0;
};

// Mean wall-clock per (model, N) over completed runs; rows ordered by model
// label then N.
inline std::vector<TrainingTimeRow> record_training_time(std::span<const ProtoSolution> runs,
                                                         const std::string& model_label) {
    std::map<std::size_t, TrainingTimeRow> by_n;
    for (const auto& s : runs) {
        auto& row = by_n[s.N];
        row.model = model_label;
        row.N = s.N;
        ++row.runs;
        row.mean_seconds += s.timing.seconds;
        row.mean_steps += static_cast<double>(s.timing.steps);
        row.mean_step_seconds_sum += s.timing.step_seconds_sum;
    }
    std::vector<TrainingTimeRow> out;
    for (auto& [n, row] : by_n) {
        const double k = static_cast<double>(row.runs);
        row.mean_seconds /= k;
        row.mean_steps /= k;
        row.mean_step_seconds_sum /= k;
        out.push_back(row);
    }
    return out;
}

}  // namespace onepass
