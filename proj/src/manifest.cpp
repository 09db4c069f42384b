#include "cet/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cet/errors.hpp"

namespace cet {

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hash_files_hex(const std::vector<std::string>& paths) {
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    for (const std::string& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open input '" + path + "' for hashing");
        while (in) {
            in.read(buf, sizeof buf);
            h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
        }
    }
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["argv"] = argv;
    nlohmann::json cfg;
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["input_hash"] = input_hash;
    return j.dump(2);
}

void RunManifest::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest '" + path + "'");
    out << to_json() << '\n';
}

} // namespace cet
