#pragma once

// ProtoSolution as a versioned JSON record. Vectors are written as decimal
// numbers that parse back to the identical 32-bit floats.

#include <cmath>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "onepass/cramming/cram.hpp"
#include "onepass/errors.hpp"
#include "onepass/io/checksum.hpp"
#include "onepass/io/files.hpp"

namespace onepass {

inline constexpr int kSolutionFormatVersion = 1;

inline nlohmann::ordered_json solution_to_json(const ProtoSolution& s) {
    nlohmann::ordered_json j;
    j["format"] = "onepass-solution";
    j["version"] = kSolutionFormatVersion;
    j["model_checksum"] = io::hex32(s.model_checksum);
    j["tokenizer_checksum"] = io::hex32(s.tokenizer_checksum);
    j["config_hash"] = io::hex32(s.config_hash);
    j["text_id"] = s.text_id;
    j["arrangement"] = to_string(s.arrangement.kind);
    j["guide_e"] = s.arrangement.guide_e;
    j["bos_first"] = s.bos_first;
    j["N"] = s.N;
    j["seed"] = s.seed;
    j["opt"] = {{"learning_rate", s.opt.learning_rate}, {"beta1", s.opt.beta1},
                {"beta2", s.opt.beta2},                 {"weight_decay", s.opt.weight_decay},
                {"max_steps", s.opt.max_steps},         {"early_stop_on_perfect", s.opt.early_stop_on_perfect}};
    j["steps_used"] = s.steps_used;
    j["final_accuracy"] = s.final_accuracy;
    j["c_tokens"] = s.c_tokens;
    j["h_lm"] = s.h_lm;
    j["e"] = s.e;
    j["m"] = s.m;
    return j;
}

inline std::string serialize_solution(const ProtoSolution& s) { return solution_to_json(s).dump(1) + "\n"; }

inline ProtoSolution solution_from_json(const nlohmann::ordered_json& j) {
    try {
        if (j.at("format") != "onepass-solution") throw CorruptionError("not a solution record");
        const int version = j.at("version").get<int>();
        if (version != kSolutionFormatVersion) throw VersionError("solution format version " + std::to_string(version));
        ProtoSolution s;
        s.model_checksum = static_cast<std::uint32_t>(std::stoul(j.at("model_checksum").get<std::string>(), nullptr, 16));
        s.tokenizer_checksum =
            static_cast<std::uint32_t>(std::stoul(j.at("tokenizer_checksum").get<std::string>(), nullptr, 16));
        s.config_hash = static_cast<std::uint32_t>(std::stoul(j.at("config_hash").get<std::string>(), nullptr, 16));
        s.text_id = j.at("text_id").get<std::string>();
        s.arrangement = arrangement_from_string(j.at("arrangement").get<std::string>());
        s.arrangement.guide_e = j.at("guide_e").get<bool>();
        s.bos_first = j.at("bos_first").get<bool>();
        s.N = j.at("N").get<std::size_t>();
        s.seed = j.at("seed").get<std::uint64_t>();
        const auto& o = j.at("opt");
        s.opt.learning_rate = o.at("learning_rate").get<double>();
        s.opt.beta1 = o.at("beta1").get<double>();
        s.opt.beta2 = o.at("beta2").get<double>();
        s.opt.weight_decay = o.at("weight_decay").get<double>();
        s.opt.max_steps = o.at("max_steps").get<std::size_t>();
        s.opt.early_stop_on_perfect = o.at("early_stop_on_perfect").get<bool>();
        s.steps_used = j.at("steps_used").get<std::size_t>();
        s.final_accuracy = j.at("final_accuracy").get<double>();
        s.c_tokens = j.at("c_tokens").get<std::size_t>();
        s.h_lm = j.at("h_lm").get<double>();
        s.e = j.at("e").get<std::vector<float>>();
        s.m = j.at("m").get<std::vector<float>>();
        if (s.e.size() != s.m.size() || s.e.empty()) throw CorruptionError("solution vectors are empty or differ in width");
        for (float v : s.e)
            if (!std::isfinite(v)) throw CorruptionError("non-finite proto-token value");
        for (float v : s.m)
            if (!std::isfinite(v)) throw CorruptionError("non-finite proto-token value");
        if (!(s.final_accuracy >= 0 && s.final_accuracy <= 1)) throw CorruptionError("accuracy outside [0, 1]");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("malformed solution record: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw CorruptionError("malformed checksum in solution record");
    }
}

inline ProtoSolution deserialize_solution(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("solution file is not valid JSON: ") + e.what());
    }
    return solution_from_json(j);
}

inline void save_solution(const std::filesystem::path& p, const ProtoSolution& s) { io::write_file(p, serialize_solution(s)); }

inline ProtoSolution load_solution(const std::filesystem::path& p) { return deserialize_solution(io::read_file(p)); }

}  // namespace onepass
