#pragma once

// Binary checkpoint layout, all integers and floats little-endian:
//
//   u32 format_version
//   u32 parameter_count
//   repeated parameter_count times:
//     u32 name_length, name bytes (UTF-8)
//     u32 rank, u64 dims[rank]
//     f64 payload[product(dims)]

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "umt/error.hpp"
#include "umt/nn.hpp"

namespace umt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& path) {
    unsigned char bytes[sizeof(T)];
    is.read(reinterpret_cast<char*>(bytes), sizeof(T));
    if (!is) throw io_error("truncated checkpoint '" + path + "'");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace detail

inline void save_checkpoint(const ParameterSet& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open '" + path + "' for writing");
    detail::write_le<std::uint32_t>(os, kCheckpointVersion);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params.items()) {
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const auto shape = p.tensor.shape();
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) detail::write_le<std::uint64_t>(os, d);
        for (double v : p.tensor.values()) detail::write_le<double>(os, v);
    }
    if (!os) throw io_error("failed writing checkpoint '" + path + "'");
}

// Loads values into an already-constructed model. Every model parameter must
// be present with the identical shape; extra entries are an error too.
inline void load_checkpoint(ParameterSet& params, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open checkpoint '" + path + "'");
    const auto version = detail::read_le<std::uint32_t>(is, path);
    if (version != kCheckpointVersion) {
        throw io_error("checkpoint '" + path + "' has format version " + std::to_string(version) +
                       ", expected " + std::to_string(kCheckpointVersion));
    }
    const auto count = detail::read_le<std::uint32_t>(is, path);

    std::unordered_map<std::string, Tensor*> by_name;
    for (auto& p : params.items()) by_name[p.name] = &p.tensor;

    std::unordered_set<std::string> seen;
    std::size_t loaded = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_le<std::uint32_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw io_error("truncated checkpoint '" + path + "'");
        const auto rank = detail::read_le<std::uint32_t>(is, path);
        std::vector<std::size_t> shape;
        for (std::uint32_t r = 0; r < rank; ++r)
            shape.push_back(static_cast<std::size_t>(detail::read_le<std::uint64_t>(is, path)));

        auto it = by_name.find(name);
        if (it == by_name.end()) throw io_error("checkpoint parameter '" + name + "' not in model");
        if (!seen.insert(name).second) throw io_error("checkpoint repeats parameter '" + name + "'");
        Tensor& t = *it->second;
        if (shape != t.shape()) {
            std::string got;
            for (auto d : shape) got += (got.empty() ? "" : "x") + std::to_string(d);
            throw io_error("checkpoint shape [" + got + "] for '" + name + "' does not match model " +
                           t.shape_string());
        }
        auto values = t.mutable_values();
        for (double& v : values) v = detail::read_le<double>(is, path);
        ++loaded;
    }
    if (loaded != params.size()) {
        throw io_error("checkpoint '" + path + "' holds " + std::to_string(loaded) + " of " +
                       std::to_string(params.size()) + " model parameters");
    }
}

}  // namespace umt
