#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "aesfa/error.hpp"
#include "aesfa/tensor.hpp"

#include <json.hpp>

namespace aesfa {

// Single-file parameter container: fixed header, JSON manifest, then a flat
// little-endian payload. The manifest indexes every named parameter by
// shape, dtype and byte offset; offsets are payload-relative, ascending and
// non-overlapping. Floats are stored bit-exact, so save/load round-trips
// are bitwise identities.
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'A', 'E', 'S', 'F', 'A', 'C', 'K', 'P'};

struct CheckpointParam {
    std::string name;
    Shape shape;
    std::string dtype;  // "f32" | "f64"
    std::vector<unsigned char> bytes;
};

struct CheckpointFile {
    uint32_t version = kCheckpointVersion;
    nlohmann::json meta;
    std::vector<CheckpointParam> params;

    const CheckpointParam* find(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return &p;
        return nullptr;
    }
};

void save_checkpoint_file(const std::string& path, const CheckpointFile& ckpt);
CheckpointFile load_checkpoint_file(const std::string& path);

template <typename T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
    return "f32";
}
template <>
inline const char* dtype_name<double>() {
    return "f64";
}

template <typename T>
CheckpointParam tensor_to_param(const std::string& name, const Tensor<T>& t) {
    CheckpointParam p;
    p.name = name;
    p.shape = t.shape;
    p.dtype = dtype_name<T>();
    p.bytes.resize(t.data.size() * sizeof(T));
    if (!t.data.empty()) std::memcpy(p.bytes.data(), t.data.data(), p.bytes.size());
    return p;
}

template <typename T>
Tensor<T> param_to_tensor(const CheckpointParam& p) {
    if (p.dtype != dtype_name<T>())
        throw CheckpointError("parameter '" + p.name + "' has dtype " + p.dtype + ", expected " + dtype_name<T>());
    Tensor<T> t;
    t.shape = p.shape;
    const int64_t n = shape_numel(p.shape);
    if (p.bytes.size() != static_cast<size_t>(n) * sizeof(T))
        throw CheckpointError("parameter '" + p.name + "' payload size does not match its shape");
    t.data.resize(static_cast<size_t>(n));
    if (n > 0) std::memcpy(t.data.data(), p.bytes.data(), p.bytes.size());
    return t;
}

}  // namespace aesfa
