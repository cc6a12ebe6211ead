#pragma once

// CSV tables with a provenance comment line, and a small job runner for
// independent experiment runs.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "onepass/errors.hpp"
#include "onepass/io/checksum.hpp"
#include "onepass/io/files.hpp"

namespace onepass {

inline constexpr int kCsvSchemaVersion = 1;

// Stamped on every output artifact.
struct Provenance {
    std::uint32_t model_checksum = 0;
    std::uint32_t tokenizer_checksum = 0;
    std::uint32_t config_hash = 0;
};

class CsvTable {
   public:
    CsvTable(std::string name, std::vector<std::string> columns) : name_(std::move(name)), columns_(std::move(columns)) {}

    const std::string& name() const noexcept { return name_; }
    const std::vector<std::string>& columns() const noexcept { return columns_; }
    std::size_t rows() const noexcept { return rows_.size(); }

    // Values are written verbatim; fields must not contain commas or quotes.
    void add(std::vector<std::string> row) {
        if (row.size() != columns_.size())
            throw InputError(name_ + ": row has " + std::to_string(row.size()) + " fields, expected " +
                             std::to_string(columns_.size()));
        for (const auto& f : row)
            if (f.find_first_of(",\"\n") != std::string::npos) throw InputError(name_ + ": field needs quoting: " + f);
        rows_.push_back(std::move(row));
    }

    std::string render(const Provenance& p) const {
        std::string s = "# onepass " + name_ + " v" + std::to_string(kCsvSchemaVersion) +
                        " model=" + io::hex32(p.model_checksum) + " tokenizer=" + io::hex32(p.tokenizer_checksum) +
                        " config=" + io::hex32(p.config_hash) + "\n";
        auto line = [&s](const std::vector<std::string>& fields) {
            for (std::size_t i = 0; i < fields.size(); ++i) s += (i ? "," : "") + fields[i];
            s += "\n";
        };
        line(columns_);
        for (const auto& r : rows_) line(r);
        return s;
    }

   private:
    std::string name_;
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

// Shortest decimal text that reads back to the same double.
inline std::string fmt(double v) {
    char buf[40];
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }

// True when ONEPASS_DETERMINISTIC is set to anything but "0" or empty.
inline bool deterministic_mode() {
    const char* v = std::getenv("ONEPASS_DETERMINISTIC");
    return v && *v && std::string(v) != "0";
}

inline std::size_t worker_count(std::size_t requested) {
    if (deterministic_mode()) return 1;
    if (requested) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

// Run jobs 0..n-1 on up to `workers` threads. Results land at their job
// index, so output order does not depend on scheduling. A job that throws
// leaves its slot empty and its message in `errors`.
template <typename R>
std::vector<std::optional<R>> run_jobs(std::size_t n, const std::function<R(std::size_t)>& job, std::size_t workers,
                                       std::vector<std::string>* errors = nullptr) {
    std::vector<std::optional<R>> out(n);
    std::vector<std::string> err(n);
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard lock(mu);
                if (next >= n) return;
                i = next++;
            }
            try {
                out[i] = job(i);
            } catch (const std::exception& e) {
                err[i] = e.what();
            }
        }
    };
    const std::size_t w = std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(n, 1));
    if (w == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < w; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (errors) *errors = std::move(err);
    return out;
}

}  // namespace onepass
