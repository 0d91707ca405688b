#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cropnet/model.hpp"

namespace cropnet {

// Checkpoint layout: 8-byte magic, little-endian u32 version, u64 manifest
// byte length, single-line JSON manifest, then contiguous little-endian
// float32 payloads in manifest order. Trainable blocks carry value plus both
// Adam moments; buffers carry the value only.

inline constexpr char kBlobMagic[8] = {'C', 'R', 'O', 'P', 'N', 'E', 'T', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {

inline void write_f32(std::ofstream& out, const float* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(float)));
}

template <typename T>
void write_block(std::ofstream& out, const std::vector<T>& v) {
    std::vector<float> tmp(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) tmp[i] = static_cast<float>(v[i]);
    write_f32(out, tmp.data(), tmp.size());
}

template <typename T>
void read_block(std::ifstream& in, std::vector<T>& v, std::size_t count, const std::string& name) {
    v.resize(count);
    std::vector<float> tmp(count);
    in.read(reinterpret_cast<char*>(tmp.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
        throw CheckpointError("truncated payload while reading block " + name);
    for (std::size_t i = 0; i < count; ++i) v[i] = static_cast<T>(tmp[i]);
}

inline nlohmann::ordered_json config_to_json(const CropNetConfig& cfg) {
    nlohmann::ordered_json j;
    j["variant"] = cfg.variant == CropNetConfig::Variant::k2D ? "2d" : "1d";
    j["input_h"] = cfg.input_h;
    j["input_w"] = cfg.input_w;
    j["widths"] = cfg.widths;
    j["dropout_p"] = cfg.dropout_p;
    j["n_classes"] = cfg.n_classes;
    return j;
}

inline CropNetConfig config_from_json(const nlohmann::json& j) {
    CropNetConfig cfg;
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "2d")
        cfg.variant = CropNetConfig::Variant::k2D;
    else if (variant == "1d")
        cfg.variant = CropNetConfig::Variant::k1D;
    else
        throw CheckpointError("unknown model variant '" + variant + "'");
    cfg.input_h = j.at("input_h").get<int>();
    cfg.input_w = j.at("input_w").get<int>();
    auto widths = j.at("widths").get<std::vector<int>>();
    if (widths.size() != 4) throw CheckpointError("widths must have 4 entries");
    std::copy(widths.begin(), widths.end(), cfg.widths.begin());
    cfg.dropout_p = j.at("dropout_p").get<double>();
    cfg.n_classes = j.at("n_classes").get<int>();
    return cfg;
}

}  // namespace detail

template <typename T>
void save_checkpoint(CropNetModel<T>& m, const std::string& path) {
    nlohmann::ordered_json manifest;
    manifest["type"] = "cropnet-checkpoint";
    manifest["config"] = detail::config_to_json(m.cfg);
    manifest["adam"] = {{"step", m.adam_step},
                        {"lr", m.adam_hp.lr},
                        {"beta1", m.adam_hp.beta1},
                        {"beta2", m.adam_hp.beta2},
                        {"eps", m.adam_hp.eps}};
    auto blocks = nlohmann::ordered_json::array();
    for (const auto& b : parameter_blocks(m.cfg)) {
        nlohmann::ordered_json jb;
        jb["name"] = b.name;
        jb["shape"] = b.dims;
        jb["payloads"] = b.trainable ? std::vector<std::string>{"value", "adam_m", "adam_v"}
                                     : std::vector<std::string>{"value"};
        blocks.push_back(std::move(jb));
    }
    manifest["blocks"] = std::move(blocks);
    const std::string manifest_line = manifest.dump() + "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out.write(kBlobMagic, sizeof(kBlobMagic));
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t mlen = manifest_line.size();
    out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    out.write(manifest_line.data(), static_cast<std::streamsize>(manifest_line.size()));

    std::size_t i = 0;
    m.for_each_param([&](const std::string&, std::vector<T>& p) {
        detail::write_block(out, p);
        detail::write_block(out, m.adam_m.at(i));
        detail::write_block(out, m.adam_v.at(i));
        ++i;
    });
    m.for_each_buffer([&](const std::string&, std::vector<T>& p) { detail::write_block(out, p); });
    if (!out) throw CheckpointError("write failure on checkpoint: " + path);
}

template <typename T>
CropNetModel<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kBlobMagic, sizeof(magic)) != 0)
        throw CheckpointError("not a cropnet checkpoint (bad magic): " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (in.gcount() != sizeof(version) || version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    if (in.gcount() != sizeof(mlen)) throw CheckpointError("truncated manifest header");
    std::string manifest_line(mlen, '\0');
    in.read(manifest_line.data(), static_cast<std::streamsize>(mlen));
    if (static_cast<std::uint64_t>(in.gcount()) != mlen)
        throw CheckpointError("truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_line);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("unreadable manifest: ") + e.what());
    }
    CropNetConfig cfg = detail::config_from_json(manifest.at("config"));
    cfg.validate();

    // Shapes in the file must match what this config implies.
    const auto expected = parameter_blocks(cfg);
    const auto& jblocks = manifest.at("blocks");
    if (jblocks.size() != expected.size())
        throw CheckpointError("shape mismatch: block count differs from config");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (jblocks[i].at("name").get<std::string>() != expected[i].name ||
            jblocks[i].at("shape").get<std::vector<int>>() != expected[i].dims)
            throw CheckpointError("shape mismatch in block " + expected[i].name);
    }

    CropNetModel<T> m = build_cropnet<T>(cfg, 0);
    const auto& adam = manifest.at("adam");
    m.adam_step = adam.at("step").get<long>();
    m.adam_hp.lr = adam.at("lr").get<double>();
    m.adam_hp.beta1 = adam.at("beta1").get<double>();
    m.adam_hp.beta2 = adam.at("beta2").get<double>();
    m.adam_hp.eps = adam.at("eps").get<double>();

    std::size_t i = 0;
    m.for_each_param([&](const std::string& name, std::vector<T>& p) {
        const std::size_t count = p.size();
        detail::read_block(in, p, count, name);
        detail::read_block(in, m.adam_m.at(i), count, name + ".adam_m");
        detail::read_block(in, m.adam_v.at(i), count, name + ".adam_v");
        ++i;
    });
    m.for_each_buffer([&](const std::string& name, std::vector<T>& p) {
        detail::read_block(in, p, p.size(), name);
    });
    return m;
}

}  // namespace cropnet
