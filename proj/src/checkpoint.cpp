#include "cet/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cet/errors.hpp"

namespace cet {

namespace {
constexpr const char* kMagic = "CETCKPT 1";

std::string format_real(real v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
    return buf;
}
} // namespace

std::string checkpoint_to_string(const TensorMap& tensors) {
    std::ostringstream out;
    out << kMagic << "\n";
    for (const auto& [key, t] : tensors) {
        out << key << " " << t.rank();
        for (std::size_t d : t.shape()) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < t.size(); ++i)
            out << (i ? " " : "") << format_real(t[i]);
        out << "\n";
    }
    return out.str();
}

void save_checkpoint(const std::string& path, const TensorMap& tensors) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f << checkpoint_to_string(tensors);
    if (!f) throw IoError("write failed: " + path);
}

TensorMap load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(f, line) || line != kMagic)
        throw ParseError("bad checkpoint magic in " + path);
    TensorMap out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream hdr(line);
        std::string key;
        std::size_t rank = 0;
        if (!(hdr >> key >> rank) || rank == 0 || rank > 2)
            throw ParseError("bad tensor header in " + path + ": " + line);
        std::vector<std::size_t> shape(rank);
        for (std::size_t& d : shape)
            if (!(hdr >> d)) throw ParseError("bad tensor shape in " + path + ": " + line);
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        std::vector<real> data(n);
        for (std::size_t i = 0; i < n; ++i) {
            double v;
            if (!(f >> v)) throw ParseError("truncated tensor data for key " + key);
            data[i] = static_cast<real>(v);
        }
        std::getline(f, line); // consume the rest of the data line
        out.emplace(key, Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

} // namespace cet
