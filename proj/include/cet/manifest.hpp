#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cet {

// Reproducibility record written next to every command's outputs: the
// command, its fully resolved configuration, the seeds, and a content hash
// of the inputs. Re-running the recorded argv against inputs with the same
// hash reproduces the outputs byte for byte (same build).
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string input_hash;   // fnv1a-64 over the concatenated input bytes

    std::string to_json() const;
    void write(const std::string& path) const;
};

// FNV-1a 64-bit of a byte buffer / of files' contents (missing file -> IoError).
std::uint64_t fnv1a(const void* data, std::size_t len,
                    std::uint64_t seed = 14695981039346656037ull);
std::string hash_files_hex(const std::vector<std::string>& paths);

} // namespace cet
