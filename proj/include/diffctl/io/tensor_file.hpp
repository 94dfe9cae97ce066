#pragma once

// Container shared by datasets, checkpoints and sample files:
//
//   offset 0   8 bytes   magic "DIFFCTL1"
//   offset 8   8 bytes   header length H, unsigned little-endian
//   offset 16  H bytes   UTF-8 JSON header
//   offset 16+H          tensor payload, raw little-endian
//
// The header is {"format_version": 1, "meta": {...}, "tensors": [{"name",
// "dtype" ("f32" | "u8"), "shape", "offset", "nbytes"}, ...]} with offsets
// relative to the start of the payload.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "diffctl/error.hpp"

namespace diffctl {

using Json = nlohmann::json;

template <class T>
struct NdArray {
    std::vector<std::int64_t> shape;
    std::vector<T> data;

    NdArray() = default;
    NdArray(std::vector<std::int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != numel(shape))
            throw ShapeError("NdArray: data size does not match shape");
    }
    explicit NdArray(std::vector<std::int64_t> s) : shape(std::move(s)), data(numel(shape), T{}) {}

    static std::int64_t numel(const std::vector<std::int64_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
    }
    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

    bool operator==(const NdArray&) const = default;
};

using FloatArray = NdArray<float>;
using ByteArray = NdArray<std::uint8_t>;
using AnyArray = std::variant<FloatArray, ByteArray>;

inline constexpr char kTensorFileMagic[8] = {'D', 'I', 'F', 'F', 'C', 'T', 'L', '1'};
inline constexpr int kTensorFileVersion = 1;

struct TensorFile {
    Json meta = Json::object();
    std::vector<std::pair<std::string, AnyArray>> tensors;

    void put(std::string name, AnyArray a) {
        for (auto& [n, t] : tensors)
            if (n == name) {
                t = std::move(a);
                return;
            }
        tensors.emplace_back(std::move(name), std::move(a));
    }

    bool has(const std::string& name) const {
        return std::any_of(tensors.begin(), tensors.end(), [&](const auto& p) { return p.first == name; });
    }

    const FloatArray& floats(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) {
                if (auto* f = std::get_if<FloatArray>(&t)) return *f;
                throw FormatError("tensor '" + name + "' is not f32");
            }
        throw FormatError("missing tensor '" + name + "'");
    }

    const ByteArray& bytes(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) {
                if (auto* b = std::get_if<ByteArray>(&t)) return *b;
                throw FormatError("tensor '" + name + "' is not u8");
            }
        throw FormatError("missing tensor '" + name + "'");
    }

    bool operator==(const TensorFile&) const = default;
};

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated tensor file header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

inline void write_f32_le(std::ostream& os, const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
    } else {
        for (float f : v) {
            auto u = std::bit_cast<std::uint32_t>(f);
            unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                  static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
            os.write(reinterpret_cast<const char*>(b), 4);
        }
    }
}

inline void read_f32_le(std::istream& is, std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 4)))
            throw FormatError("truncated tensor payload");
    } else {
        for (float& f : v) {
            unsigned char b[4];
            if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated tensor payload");
            std::uint32_t u = b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                              (std::uint32_t(b[3]) << 24);
            f = std::bit_cast<float>(u);
        }
    }
}

} // namespace detail

inline void write_tensor_file(const std::string& path, const TensorFile& file) {
    Json header;
    header["format_version"] = kTensorFileVersion;
    header["meta"] = file.meta;
    header["tensors"] = Json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, arr] : file.tensors) {
        std::visit(
            [&](const auto& a) {
                using A = std::decay_t<decltype(a)>;
                const bool f32 = std::is_same_v<A, FloatArray>;
                const std::uint64_t nbytes = a.data.size() * (f32 ? 4 : 1);
                header["tensors"].push_back(
                    {{"name", name}, {"dtype", f32 ? "f32" : "u8"}, {"shape", a.shape}, {"offset", offset}, {"nbytes", nbytes}});
                offset += nbytes;
            },
            arr);
    }
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    os.write(kTensorFileMagic, 8);
    detail::put_u64_le(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, arr] : file.tensors) {
        std::visit(
            [&](const auto& a) {
                using A = std::decay_t<decltype(a)>;
                if constexpr (std::is_same_v<A, FloatArray>)
                    detail::write_f32_le(os, a.data);
                else
                    os.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size()));
            },
            arr);
    }
    if (!os) throw Error("write failed for '" + path + "'");
}

inline TensorFile read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kTensorFileMagic, 8) != 0)
        throw FormatError("'" + path + "' is not a diffctl tensor file");
    const std::uint64_t hlen = detail::get_u64_le(is);
    if (hlen > (1ull << 30)) throw FormatError("implausible header length in '" + path + "'");
    std::string text(hlen, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(hlen))) throw FormatError("truncated header in '" + path + "'");

    Json header;
    try {
        header = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw FormatError(std::string("bad header JSON: ") + e.what());
    }
    if (header.value("format_version", 0) != kTensorFileVersion)
        throw FormatError("unsupported tensor file version in '" + path + "'");

    TensorFile file;
    file.meta = header.value("meta", Json::object());
    const auto payload_start = is.tellg();
    for (const auto& t : header.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        const auto dtype = t.at("dtype").get<std::string>();
        auto shape = t.at("shape").get<std::vector<std::int64_t>>();
        const auto offset = t.at("offset").get<std::uint64_t>();
        const auto nbytes = t.at("nbytes").get<std::uint64_t>();
        const auto n = NdArray<float>::numel(shape);
        is.seekg(payload_start + static_cast<std::streamoff>(offset));
        if (dtype == "f32") {
            if (nbytes != std::uint64_t(n) * 4) throw FormatError("size mismatch for tensor '" + name + "'");
            FloatArray a;
            a.shape = std::move(shape);
            a.data.resize(n);
            detail::read_f32_le(is, a.data);
            file.tensors.emplace_back(name, std::move(a));
        } else if (dtype == "u8") {
            if (nbytes != std::uint64_t(n)) throw FormatError("size mismatch for tensor '" + name + "'");
            ByteArray a;
            a.shape = std::move(shape);
            a.data.resize(n);
            if (!is.read(reinterpret_cast<char*>(a.data.data()), n)) throw FormatError("truncated tensor payload");
            file.tensors.emplace_back(name, std::move(a));
        } else {
            throw FormatError("unknown dtype '" + dtype + "'");
        }
    }
    return file;
}

} // namespace diffctl
