#pragma once

// How copies of the two proto-tokens e and m tile the model input, and which
// output position predicts which target token.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/numerics/tensor.hpp"

namespace onepass {

enum class ArrangementKind : std::uint32_t { SingleE = 0, BlockEM = 1, InterleavedEM = 2, EThenM = 3 };

struct Arrangement {
    ArrangementKind kind = ArrangementKind::EThenM;
    // EThenM only. Guided: [e, m x (N-1)], position i predicts t_{i+1}.
    // Unguided: [e, m x N], position 0 has no target, position i predicts t_i.
    bool guide_e = true;

    friend bool operator==(const Arrangement&, const Arrangement&) = default;
};

inline std::string to_string(ArrangementKind k) {
    switch (k) {
        case ArrangementKind::SingleE: return "single_e";
        case ArrangementKind::BlockEM: return "block_em";
        case ArrangementKind::InterleavedEM: return "interleaved_em";
        case ArrangementKind::EThenM: return "e_then_m";
    }
    return "?";
}

inline std::string to_string(const Arrangement& a) {
    if (a.kind != ArrangementKind::EThenM) return to_string(a.kind);
    return a.guide_e ? "e_then_m" : "e_then_m_unguided";
}

inline Arrangement arrangement_from_string(const std::string& s) {
    if (s == "single_e") return {ArrangementKind::SingleE, true};
    if (s == "block_em") return {ArrangementKind::BlockEM, true};
    if (s == "interleaved_em") return {ArrangementKind::InterleavedEM, true};
    if (s == "e_then_m") return {ArrangementKind::EThenM, true};
    if (s == "e_then_m_unguided") return {ArrangementKind::EThenM, false};
    throw ConfigError("unknown arrangement '" + s + "'");
}

inline const std::vector<Arrangement>& all_arrangements() {
    static const std::vector<Arrangement> all{{ArrangementKind::SingleE, true},
                                              {ArrangementKind::BlockEM, true},
                                              {ArrangementKind::InterleavedEM, true},
                                              {ArrangementKind::EThenM, true},
                                              {ArrangementKind::EThenM, false}};
    return all;
}

enum class Slot : std::uint8_t { E, M, Bos };

// Input layout for N target tokens. guided[k] is the input position whose
// logits predict target t_{k+1}.
struct Layout {
    std::vector<Slot> slots;
    std::vector<std::size_t> guided;

    std::size_t length() const noexcept { return slots.size(); }
    std::vector<bool> guided_mask() const {
        std::vector<bool> mask(slots.size(), false);
        for (auto p : guided) mask[p] = true;
        return mask;
    }
};

// Odd N in the two-block and alternating layouts gives e the extra copy.
// With bos_first a BOS slot is prepended and every position shifts by one.
inline Layout make_layout(const Arrangement& a, std::size_t N, bool bos_first = false) {
    if (N < 1) throw InputError("arrangement needs at least one target token");
    Layout L;
    if (bos_first) L.slots.push_back(Slot::Bos);
    const std::size_t off = L.slots.size();
    switch (a.kind) {
        case ArrangementKind::SingleE:
            L.slots.insert(L.slots.end(), N, Slot::E);
            break;
        case ArrangementKind::BlockEM:
            L.slots.insert(L.slots.end(), (N + 1) / 2, Slot::E);
            L.slots.insert(L.slots.end(), N / 2, Slot::M);
            break;
        case ArrangementKind::InterleavedEM:
            for (std::size_t i = 0; i < N; ++i) L.slots.push_back(i % 2 == 0 ? Slot::E : Slot::M);
            break;
        case ArrangementKind::EThenM:
            L.slots.push_back(Slot::E);
            L.slots.insert(L.slots.end(), a.guide_e ? N - 1 : N, Slot::M);
            break;
    }
    const std::size_t first = (a.kind == ArrangementKind::EThenM && !a.guide_e) ? 1 : 0;
    for (std::size_t k = 0; k < N; ++k) L.guided.push_back(off + first + k);
    return L;
}

// Materialise the input rows for a layout.
inline TensorF build_input(std::span<const float> e, std::span<const float> m, const Layout& L,
                           std::span<const float> bos = {}) {
    if (e.size() != m.size()) throw InputError("proto-tokens e and m differ in width");
    const std::size_t D = e.size();
    TensorF E = TensorF::matrix(L.length(), D);
    for (std::size_t i = 0; i < L.length(); ++i) {
        std::span<const float> src = L.slots[i] == Slot::E ? e : L.slots[i] == Slot::M ? m : bos;
        if (src.size() != D) throw InputError("BOS slot requires a BOS embedding of width d_model");
        std::copy(src.begin(), src.end(), E.row(i).begin());
    }
    return E;
}

inline TensorF build_input(std::span<const float> e, std::span<const float> m, const Arrangement& a, std::size_t N) {
    return build_input(e, m, make_layout(a, N));
}

}  // namespace onepass
