#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "onepass/cramming/cram.hpp"
#include "onepass/errors.hpp"

namespace onepass {

// Lengths used for the arrangement comparison.
inline std::vector<std::size_t> arrangement_ladder() {
    return {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
}

// Lengths used for the capacity search (roughly sqrt(2) apart).
inline std::vector<std::size_t> capacity_ladder() {
    return {4, 5, 8, 11, 16, 22, 32, 45, 64, 90, 128, 181, 256, 362, 512, 724, 1024, 1448};
}

struct SweepSpec {
    std::vector<std::size_t> ladder = capacity_ladder();
    double threshold = 0.99;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    Arrangement arrangement{};
    // Stop climbing after this many consecutive lengths below threshold.
    std::size_t stop_after_failures = 2;
};

struct CapacityRow {
    std::size_t N = 0;
    double best_accuracy = 0;
    std::size_t best_c_tokens = 0;
    std::uint64_t best_seed = 0;
    std::size_t best_steps = 0;
    double h_lm = 0;
    std::vector<double> accuracies;  // per seed actually run
};

struct CapacityResult {
    std::vector<CapacityRow> rows;
    std::optional<std::size_t> max_N;
    std::size_t c_tokens_at_max = 0;
    double h_lm_at_max = 0;
};

// For every ladder length, cram the prefix of that length with each seed and
// keep the best accuracy. Seeds after a perfect run are skipped (the best is
// already 1.0). Lengths that exceed the text or the context window end the
// sweep.
inline CapacityResult capacity_sweep(const Transformer<float>& model, std::span<const TokenId> base, const SweepSpec& spec,
                                     const OptSpec& opt) {
    if (spec.ladder.empty()) throw InputError("capacity ladder is empty");
    if (!std::is_sorted(spec.ladder.begin(), spec.ladder.end())) throw InputError("capacity ladder must be ascending");
    if (spec.seeds.empty()) throw InputError("capacity sweep needs at least one seed");
    CapacityResult res;
    std::size_t failures = 0;
    for (std::size_t N : spec.ladder) {
        if (N == 0 || N > base.size() || make_layout(spec.arrangement, N).length() > model.config().max_positions) break;
        CapacityRow row;
        row.N = N;
        const auto prefix = base.first(N);
        for (auto seed : spec.seeds) {
            const auto sol = cram(model, prefix, spec.arrangement, opt, seed);
            row.accuracies.push_back(sol.final_accuracy);
            if (row.accuracies.size() == 1 || sol.final_accuracy > row.best_accuracy) {
                row.best_accuracy = sol.final_accuracy;
                row.best_c_tokens = sol.c_tokens;
                row.best_seed = seed;
                row.best_steps = sol.steps_used;
                row.h_lm = sol.h_lm;
            }
            if (sol.final_accuracy >= 1.0) break;
        }
        const bool ok = row.best_accuracy >= spec.threshold;
        if (ok) {
            res.max_N = N;
            res.c_tokens_at_max = row.best_c_tokens;
            res.h_lm_at_max = row.h_lm;
        }
        res.rows.push_back(std::move(row));
        failures = ok ? 0 : failures + 1;
        if (spec.stop_after_failures && failures >= spec.stop_after_failures) break;
    }
    return res;
}

}  // namespace onepass
