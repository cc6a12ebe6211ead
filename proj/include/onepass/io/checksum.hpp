#pragma once

#include <boost/crc.hpp>

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace onepass::io {

inline std::uint32_t crc32(const void* data, std::size_t n) {
    boost::crc_32_type crc;
    crc.process_bytes(data, n);
    return crc.checksum();
}

inline std::uint32_t crc32(std::string_view bytes) { return crc32(bytes.data(), bytes.size()); }

// Eight lowercase hex digits.
inline std::string hex32(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

}  // namespace onepass::io
