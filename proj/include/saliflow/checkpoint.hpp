#pragma once

// Versioned checkpoint container: a JSON header (schema version, model
// config, scalar training state) followed by named float64 arrays. Loading
// validates the name set and every shape against the config and fails
// closed on any mismatch.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saliflow/error.hpp"
#include "saliflow/segnet.hpp"

namespace saliflow {

inline constexpr char kCheckpointMagic[8] = {'S', 'F', 'L', 'W', 'C', 'K', '0', '1'};

struct Checkpoint {
    ModelConfig model;
    std::map<std::string, Tensor> arrays;  // params plus optimizer state
    nlohmann::json extra;                  // step, cursor, optimizer scalars
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot open for write: " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    nlohmann::json header = {{"schema_version", 1},
                             {"model", ckpt.model.to_json()},
                             {"extra", ckpt.extra}};
    const std::string hs = header.dump();
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    const std::uint32_t count = static_cast<std::uint32_t>(ckpt.arrays.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& [name, tensor] : ckpt.arrays) {
        const std::uint16_t nlen = static_cast<std::uint16_t>(name.size());
        out.write(reinterpret_cast<const char*>(&nlen), 2);
        out.write(name.data(), nlen);
        const std::uint8_t ndim = static_cast<std::uint8_t>(tensor.shape().size());
        out.write(reinterpret_cast<const char*>(&ndim), 1);
        for (int d : tensor.shape()) {
            const std::uint32_t dim = static_cast<std::uint32_t>(d);
            out.write(reinterpret_cast<const char*>(&dim), 4);
        }
        out.write(reinterpret_cast<const char*>(tensor.data().data()),
                  static_cast<std::streamsize>(tensor.data().size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint: write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw FormatError("checkpoint: bad magic in " + path.string());
    std::uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
    if (!in) throw FormatError("checkpoint: truncated header: " + path.string());
    Checkpoint ckpt;
    try {
        nlohmann::json header = nlohmann::json::parse(hs);
        if (header.at("schema_version").get<int>() != 1)
            throw FormatError("checkpoint: unsupported schema version");
        ckpt.model = ModelConfig::from_json(header.at("model"));
        ckpt.extra = header.value("extra", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint: corrupt header: " + std::string(e.what()));
    }
    std::uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t nlen = 0;
        in.read(reinterpret_cast<char*>(&nlen), 2);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        std::uint8_t ndim = 0;
        in.read(reinterpret_cast<char*>(&ndim), 1);
        std::vector<int> shape(ndim);
        for (auto& d : shape) {
            std::uint32_t dim = 0;
            in.read(reinterpret_cast<char*>(&dim), 4);
            d = static_cast<int>(dim);
        }
        if (!in) throw FormatError("checkpoint: truncated array header: " + path.string());
        std::vector<double> data(Tensor::numel_of(shape));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(data.size() * sizeof(double)))
            throw FormatError("checkpoint: truncated array data: " + path.string());
        ckpt.arrays[name] = Tensor::from_vector(shape, std::move(data), true);
    }
    return ckpt;
}

// Extracts model parameters from a checkpoint, validating the exact name
// set and shapes implied by the config. Extra optimizer arrays (opt.*) are
// ignored here.
inline ParamStore params_from_checkpoint(const Checkpoint& ckpt) {
    const auto expected = param_shapes(ckpt.model);
    ParamStore store;
    for (const auto& [name, shape] : expected) {
        auto it = ckpt.arrays.find(name);
        if (it == ckpt.arrays.end())
            throw FormatError("checkpoint: missing parameter " + name);
        if (it->second.shape() != shape)
            throw FormatError("checkpoint: shape mismatch for " + name);
        store.params[name] = it->second;
    }
    return store;
}

}  // namespace saliflow
