#pragma once
// Run manifests and the run-directory protocol: outputs are staged in a
// temporary directory and moved into place only when the command finishes.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <system_error>

#include "json.hpp"
#include "olg/io/config.hpp"

namespace olg::io {

inline constexpr const char* kToolVersion = "1.0.0";

/// 64-bit FNV-1a hash.
inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

/// Hash of the canonical (fully populated, compact) form of the config.
inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

/// Writes `text` to `path` through a sibling temporary file and a rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
        out << text;
        out.flush();
        if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

/// Existing run directory without --force.
class OutputExists : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Staging directory for one run; removed unless commit() is called.
class RunDirectory {
public:
    RunDirectory(const std::filesystem::path& final_dir, bool force) : final_(final_dir), force_(force) {
        namespace fs = std::filesystem;
        if (fs::exists(final_) && !force_)
            throw OutputExists("output directory '" + final_.string() + "' exists; pass --force to overwrite");
        fs::create_directories(final_.parent_path().empty() ? fs::path(".") : final_.parent_path());
        std::random_device rd;
        staging_ = final_;
        staging_ += ".staging-" + hex64((static_cast<std::uint64_t>(rd()) << 32) ^ rd()).substr(0, 8);
        fs::create_directories(staging_);
    }
    RunDirectory(const RunDirectory&) = delete;
    RunDirectory& operator=(const RunDirectory&) = delete;

    ~RunDirectory() {
        if (!committed_) {
            std::error_code ec;
            std::filesystem::remove_all(staging_, ec);
        }
    }

    std::filesystem::path file(const std::string& name) const { return staging_ / name; }
    const std::filesystem::path& final_path() const { return final_; }

    void commit() {
        namespace fs = std::filesystem;
        if (fs::exists(final_)) {
            if (!force_) throw OutputExists("output directory '" + final_.string() + "' appeared during the run");
            fs::remove_all(final_);
        }
        fs::rename(staging_, final_);
        committed_ = true;
    }

private:
    std::filesystem::path final_;
    std::filesystem::path staging_;
    bool force_;
    bool committed_ = false;
};

}  // namespace olg::io
