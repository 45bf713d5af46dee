#pragma once

// Run manifest: tool version, subcommand, seed, the fully resolved config and
// the SHA-256 of every file the run wrote. No clocks, hosts or paths beyond
// what the config itself names, so identical runs give identical manifests.

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neufe/driver/config.hpp"

namespace neufe::driver {

inline constexpr const char* tool_version = "0.1.0";

inline std::string sha256_hex(const std::string& bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
        throw std::runtime_error("sha256: digest failed");
    }
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

inline std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return sha256_hex(ss.str());
}

/// Collects output file names (relative to the run directory) as they are written.
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    std::string path(const std::string& name) {
        for (const auto& n : names_) {
            if (n == name) return (dir_ / name).string();
        }
        names_.push_back(name);
        return (dir_ / name).string();
    }

    const std::filesystem::path& dir() const { return dir_; }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> names_;
};

inline void write_manifest(std::ostream& os, const std::string& command, const RunConfig& cfg, const OutputSet& outputs) {
    os << "neufe-manifest 1\n";
    os << "tool_version " << tool_version << '\n';
    os << "command " << command << '\n';
    os << "seed " << cfg.seed << '\n';
    os << "[config]\n";
    for (const auto& [k, v] : echo(cfg)) os << k << " = " << v << '\n';
    os << "[outputs]\n";
    for (const auto& name : outputs.names()) {
        os << sha256_file((outputs.dir() / name).string()) << "  " << name << '\n';
    }
}

inline std::string save_manifest(const std::string& command, const RunConfig& cfg, const OutputSet& outputs) {
    const std::string path = (outputs.dir() / "manifest.txt").string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_manifest(os, command, cfg, outputs);
    return path;
}

}  // namespace neufe::driver
