#pragma once

// Run manifests and atomic output files. A manifest is written only after
// every output landed, and carries checksums so a run can be audited later.
// Nothing time-dependent goes in: identical runs must produce identical
// bytes.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace aptb {

inline constexpr const char* kToolVersion = "0.1.0";

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(data);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    return content;
}

/// Write-to-temp then rename, so failures never leave partial outputs.
inline void atomic_write(const std::string& path, std::string_view content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

struct ManifestFile {
    std::string path;
    std::string checksum; // fnv1a64 of the file content
};

struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::vector<ManifestFile> inputs;
    std::uint64_t seed = 0;
    std::vector<ManifestFile> outputs;
    double ledger_max_path_sum = 0;
    bool ledger_pass = false;
    std::size_t ledger_charges = 0;

    std::string to_string() const {
        nlohmann::json j;
        j["command"] = command;
        j["config"] = config;
        j["inputs"] = nlohmann::json::array();
        for (const auto& f : inputs)
            j["inputs"].push_back({{"path", f.path}, {"checksum", f.checksum}});
        j["seed"] = seed;
        j["tool_version"] = kToolVersion;
        j["outputs"] = nlohmann::json::array();
        for (const auto& f : outputs)
            j["outputs"].push_back({{"path", f.path}, {"checksum", f.checksum}});
        j["ledger"] = {{"max_path_sum", ledger_max_path_sum},
                       {"pass", ledger_pass},
                       {"charges", ledger_charges}};
        return j.dump(2) + "\n";
    }
};

} // namespace aptb
