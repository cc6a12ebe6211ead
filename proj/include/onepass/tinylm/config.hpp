#pragma once

#include <cstdint>
#include <string>

#include "onepass/errors.hpp"

namespace onepass {

enum class PositionalScheme : std::uint32_t {
    Rotary = 0,
    LearnedAbsolute = 1,
};

inline std::string to_string(PositionalScheme s) {
    return s == PositionalScheme::Rotary ? "rotary" : "learned";
}

inline PositionalScheme positional_scheme_from_string(const std::string& s) {
    if (s == "rotary") return PositionalScheme::Rotary;
    if (s == "learned" || s == "learned-absolute") return PositionalScheme::LearnedAbsolute;
    throw ConfigError("unknown positional scheme '" + s + "'");
}

// Architecture hyperparameters of the decoder-only LM.
struct ModelConfig {
    std::uint32_t layers = 4;
    std::uint32_t d_model = 128;
    std::uint32_t heads = 4;
    std::uint32_t d_ff = 512;
    std::uint32_t vocab = 512;
    std::uint32_t max_positions = 512;
    PositionalScheme positional = PositionalScheme::Rotary;
    bool tied_head = false;

    std::uint32_t head_dim() const { return d_model / heads; }

    void validate() const {
        if (layers == 0 || d_model == 0 || heads == 0 || d_ff == 0 || vocab == 0 || max_positions == 0)
            throw ConfigError("model dimensions must be positive");
        if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
        if (positional == PositionalScheme::Rotary && head_dim() % 2 != 0)
            throw ConfigError("rotary embeddings need an even head width");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Small configuration used by the default laboratory setup.
inline ModelConfig desk_config() { return ModelConfig{}; }

}  // namespace onepass
