#include "aesfa/checkpoint.hpp"

#include <cstdio>
#include <fstream>

namespace aesfa {

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}

uint64_t get_u64(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

size_t dtype_size(const std::string& dtype, const std::string& pname) {
    if (dtype == "f32") return 4;
    if (dtype == "f64") return 8;
    throw CheckpointError("parameter '" + pname + "' has unknown dtype '" + dtype + "'");
}

}  // namespace

void save_checkpoint_file(const std::string& path, const CheckpointFile& ckpt) {
    nlohmann::json manifest;
    manifest["meta"] = ckpt.meta;
    nlohmann::json params = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& p : ckpt.params) {
        nlohmann::json e;
        e["name"] = p.name;
        e["shape"] = p.shape;
        e["dtype"] = p.dtype;
        e["offset"] = offset;
        e["nbytes"] = p.bytes.size();
        params.push_back(std::move(e));
        offset += p.bytes.size();
    }
    manifest["params"] = std::move(params);
    const std::string mjson = manifest.dump();

    std::string header;
    header.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u32(header, ckpt.version);
    put_u64(header, mjson.size());

    // Write to a temp file and rename so readers never see a half-written
    // checkpoint.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open checkpoint for writing: " + tmp);
        f.write(header.data(), static_cast<std::streamsize>(header.size()));
        f.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
        for (const auto& p : ckpt.params)
            if (!p.bytes.empty())
                f.write(reinterpret_cast<const char*>(p.bytes.data()), static_cast<std::streamsize>(p.bytes.size()));
        if (!f) throw IoError("short write on checkpoint: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into place: " + path);
}

CheckpointFile load_checkpoint_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    const size_t header_size = sizeof(kCheckpointMagic) + 4 + 8;
    if (raw.size() < header_size) throw CheckpointError("checkpoint too small to hold a header: " + path);
    if (std::memcmp(raw.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw CheckpointError("bad magic; not a checkpoint container: " + path);
    CheckpointFile ckpt;
    ckpt.version = get_u32(raw.data() + sizeof(kCheckpointMagic));
    if (ckpt.version != kCheckpointVersion)
        throw CheckpointError("checkpoint format version " + std::to_string(ckpt.version) + " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + "): " + path);
    const uint64_t mlen = get_u64(raw.data() + sizeof(kCheckpointMagic) + 4);
    if (raw.size() < header_size + mlen) throw CheckpointError("manifest truncated: " + path);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(raw.begin() + static_cast<std::ptrdiff_t>(header_size),
                                         raw.begin() + static_cast<std::ptrdiff_t>(header_size + mlen));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("manifest is not valid JSON: ") + e.what());
    }
    ckpt.meta = manifest.value("meta", nlohmann::json::object());

    const unsigned char* payload = raw.data() + header_size + mlen;
    const uint64_t payload_size = raw.size() - header_size - mlen;
    uint64_t expected_offset = 0;
    for (const auto& e : manifest.at("params")) {
        CheckpointParam p;
        p.name = e.at("name").get<std::string>();
        p.shape = e.at("shape").get<Shape>();
        p.dtype = e.at("dtype").get<std::string>();
        const uint64_t offset = e.at("offset").get<uint64_t>();
        const uint64_t nbytes = e.at("nbytes").get<uint64_t>();
        if (offset != expected_offset)
            throw CheckpointError("parameter '" + p.name + "' has a gap or overlap in the payload layout");
        const uint64_t want = static_cast<uint64_t>(shape_numel(p.shape)) * dtype_size(p.dtype, p.name);
        if (nbytes != want)
            throw CheckpointError("parameter '" + p.name + "' declares " + std::to_string(nbytes) +
                                  " bytes but its shape needs " + std::to_string(want));
        if (offset + nbytes > payload_size)
            throw CheckpointError("payload truncated: parameter '" + p.name + "' extends past end of file");
        p.bytes.assign(payload + offset, payload + offset + nbytes);
        expected_offset = offset + nbytes;
        ckpt.params.push_back(std::move(p));
    }
    if (expected_offset != payload_size)
        throw CheckpointError("payload has " + std::to_string(payload_size - expected_offset) +
                              " trailing bytes not covered by the manifest: " + path);
    return ckpt;
}

}  // namespace aesfa
