#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "onepass/cramming/arrangement.hpp"
#include "onepass/errors.hpp"
#include "onepass/numerics/gradients.hpp"
#include "onepass/numerics/kernels.hpp"
#include "onepass/numerics/transformer.hpp"
#include "onepass/tinylm/lm.hpp"
#include "onepass/tinylm/pretrain.hpp"

namespace onepass {

struct Accuracy {
    std::size_t count = 0;  // positions whose argmax equals the target
    std::size_t total = 0;
    double fraction() const noexcept { return total ? static_cast<double>(count) / static_cast<double>(total) : 0.0; }
    bool perfect() const noexcept { return total > 0 && count == total; }
};

// Count argmax hits at guided positions of an existing logits matrix.
inline Accuracy accuracy_from_logits(const TensorF& logits, std::span<const std::size_t> guided,
                                     std::span<const TokenId> targets) {
    if (guided.size() != targets.size()) throw InputError("one target per guided position required");
    Accuracy a;
    a.total = targets.size();
    for (std::size_t k = 0; k < guided.size(); ++k) {
        if (guided[k] >= logits.rows()) throw InputError("guided position outside the logits");
        const auto p = static_cast<TokenId>(kernels::argmax(logits.row(guided[k]).data(), logits.cols()));
        a.count += p == targets[k];
    }
    return a;
}

// Token accuracy and correct-token count from exactly one forward pass.
inline Accuracy token_accuracy(const Transformer<float>& model, const TensorF& E, const Layout& L,
                               std::span<const TokenId> targets) {
    if (E.rows() != L.length()) throw InputError("input length does not match its layout");
    return accuracy_from_logits(model.forward(E), L.guided, targets);
}

// Teacher-forced total cross-entropy (nats) of a token sequence:
// -sum_i log P(t_i | BOS, t_1..t_{i-1}). Uses one dense forward over
// [BOS, t_1 .. t_{N-1}]. Vocabularies without a BOS row score t_1 as uniform
// (ln V) and condition the rest on the preceding real tokens.
inline double h_lm(const Transformer<float>& model, std::span<const TokenId> ids) {
    if (ids.empty()) return 0.0;
    if (ids.size() > model.config().max_positions) throw InputError("h_lm: text longer than the context window");
    Trace<float> tr;
    if (model.config().vocab > static_cast<std::size_t>(Tokenizer::kBos)) {
        model.forward(embed(model.weights(), bos_shifted(ids)), tr);
        return cross_entropy_rows<float>(tr.logits, ids, nullptr);
    }
    for (TokenId t : ids)
        if (t < 0 || static_cast<std::size_t>(t) >= model.config().vocab) throw InputError("h_lm: token outside vocabulary");
    const double first = std::log(static_cast<double>(model.config().vocab));
    if (ids.size() == 1) return first;
    model.forward(embed(model.weights(), ids.first(ids.size() - 1)), tr);
    return first + cross_entropy_rows<float>(tr.logits, ids.subspan(1), nullptr);
}

}  // namespace onepass
