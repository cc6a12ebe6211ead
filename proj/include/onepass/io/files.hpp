#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "onepass/errors.hpp"

namespace onepass {

namespace io {

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw InputError("cannot open '" + p.string() + "'");
    return std::string(std::istreambuf_iterator<char>(f), {});
}

// Write through a temporary file and rename so readers never see a partial
// artifact.
inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    const auto tmp = std::filesystem::path(p.string() + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw InputError("cannot write '" + tmp.string() + "'");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw InputError("short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, p);
}

}  // namespace io

}  // namespace onepass
