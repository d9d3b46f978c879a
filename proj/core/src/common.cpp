#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "binary_io.hpp"
#include "latentir/errors.hpp"
#include "latentir/hash.hpp"
#include "latentir/types.hpp"

namespace latentir {

std::string hex_digest(std::string_view data) {
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(fnv1a64(data)));
    return out;
}

double SparseCode::activation(std::uint32_t latent) const {
    const auto it = std::lower_bound(indices.begin(), indices.end(), latent);
    if (it == indices.end() || *it != latent) {
        return 0.0;
    }
    return values[static_cast<std::size_t>(it - indices.begin())];
}

void SparseCode::check() const {
    if (indices.size() != values.size()) {
        throw ValidationError("sparse code '" + origin_id + "': indices/values length mismatch");
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (i > 0 && indices[i] <= indices[i - 1]) {
            throw ValidationError("sparse code '" + origin_id + "': indices not strictly increasing");
        }
        if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
            throw ValidationError("sparse code '" + origin_id + "': non-positive activation");
        }
    }
}

namespace detail {

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("short write to '" + path + "'");
    }
}

}  // namespace detail
}  // namespace latentir
