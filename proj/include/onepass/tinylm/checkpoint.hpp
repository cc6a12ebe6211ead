#pragma once

// Binary weights checkpoint.
//
//   "PTLM"  u32 version
//   u32 layers, d_model, heads, d_ff, vocab, max_positions, positional, tied_head
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u32 extents[rank], f32 data
//   u32 CRC-32 of every preceding byte
//
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/io/checksum.hpp"
#include "onepass/io/files.hpp"
#include "onepass/tinylm/weights.hpp"

namespace onepass {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

class ByteReader {
   public:
    ByteReader(const std::string& bytes, std::size_t end) : b_(bytes), end_(end) {}

    std::uint32_t u32() {
        std::uint32_t v;
        std::memcpy(&v, take(4), 4);
        return v;
    }
    const char* take(std::size_t n) {
        if (n > end_ - pos_) throw CorruptionError("checkpoint ends early");
        const char* p = b_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == end_; }

   private:
    const std::string& b_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Weights<float>& w) {
    const auto& c = w.config;
    std::string out = "PTLM";
    detail::put_u32(out, kCheckpointVersion);
    for (std::uint32_t v : {c.layers, c.d_model, c.heads, c.d_ff, c.vocab, c.max_positions,
                            static_cast<std::uint32_t>(c.positional), static_cast<std::uint32_t>(c.tied_head)})
        detail::put_u32(out, v);
    std::uint32_t count = 0;
    w.for_each([&](const std::string&, const TensorF&) { ++count; });
    detail::put_u32(out, count);
    w.for_each([&](const std::string& name, const TensorF& t) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(e));
        out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
    });
    detail::put_u32(out, io::crc32(out));
    return out;
}

inline Weights<float> deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 4 || bytes.compare(0, 4, "PTLM") != 0) throw CorruptionError("not a PTLM checkpoint");
    if (bytes.size() < 12) throw CorruptionError("checkpoint ends early");
    std::uint32_t version;
    std::memcpy(&version, bytes.data() + 4, 4);
    if (version != kCheckpointVersion)
        throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                           std::to_string(kCheckpointVersion));
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body, 4);
    if (io::crc32(bytes.data(), body) != stored) throw CorruptionError("checkpoint checksum mismatch");

    detail::ByteReader r(bytes, body);
    r.take(8);
    ModelConfig c;
    c.layers = r.u32();
    c.d_model = r.u32();
    c.heads = r.u32();
    c.d_ff = r.u32();
    c.vocab = r.u32();
    c.max_positions = r.u32();
    const std::uint32_t pos = r.u32(), tied = r.u32();
    if (pos > 1 || tied > 1) throw CorruptionError("checkpoint config has an unknown flag value");
    c.positional = static_cast<PositionalScheme>(pos);
    c.tied_head = tied != 0;
    c.validate();

    Weights<float> w = Weights<float>::zeros(c);
    std::uint32_t expected = 0;
    w.for_each([&](const std::string&, const TensorF&) { ++expected; });
    if (r.u32() != expected) throw CorruptionError("checkpoint tensor count does not match its config");
    w.for_each([&](const std::string& name, TensorF& t) {
        const std::uint32_t len = r.u32();
        if (std::string(r.take(len), len) != name) throw CorruptionError("checkpoint tensor '" + name + "' missing");
        const std::uint32_t rank = r.u32();
        std::vector<std::size_t> shape(rank);
        for (auto& e : shape) e = r.u32();
        if (shape != t.shape()) throw CorruptionError("checkpoint tensor '" + name + "' has the wrong shape");
        std::memcpy(t.data(), r.take(t.size() * sizeof(float)), t.size() * sizeof(float));
    });
    if (!r.done()) throw CorruptionError("trailing bytes in checkpoint");
    w.sync_tied_head();
    if (!w.all_finite()) throw CorruptionError("checkpoint holds non-finite weights");
    return w;
}

// CRC-32 of the serialized checkpoint; identifies a frozen model.
inline std::uint32_t weights_checksum(const Weights<float>& w) {
    const std::string bytes = serialize_checkpoint(w);
    std::uint32_t crc;
    std::memcpy(&crc, bytes.data() + bytes.size() - 4, 4);
    return crc;
}

inline void save_checkpoint(const std::filesystem::path& p, const Weights<float>& w) {
    io::write_file(p, serialize_checkpoint(w));
}

inline Weights<float> load_checkpoint(const std::filesystem::path& p) { return deserialize_checkpoint(io::read_file(p)); }

}  // namespace onepass
