#pragma once

#include <fstream>
#include <string>

#include "cropnet/checkpoint.hpp"
#include "cropnet/eval.hpp"
#include "cropnet/reporting.hpp"

namespace cropnet {

// Long-format CSV. Median features carry named bands and time bins; flat
// features (harmonic, hyperspectral) use index rows with bin fixed at 0.
inline void write_features_csv(const BuiltFeatures& f, const Dataset& ds,
                               FeatureKind kind, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << "id,label,band,bin,value\n";
    const bool median = kind == FeatureKind::Median1D || kind == FeatureKind::Median2D;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        const Sample& s = ds.samples[f.kept[i]];
        const std::string& label = ds.schema.classes[static_cast<std::size_t>(s.label)];
        const auto& v = f.values[i];
        if (median) {
            const int t = static_cast<int>(v.size()) / kNumBands;
            for (int b = 0; b < kNumBands; ++b)
                for (int bin = 0; bin < t; ++bin)
                    out << s.id << ',' << label << ',' << kBandNames[static_cast<std::size_t>(b)]
                        << ',' << bin << ',' << report_detail::fmt(v[static_cast<std::size_t>(b * t + bin)], 9)
                        << "\n";
        } else {
            for (std::size_t k = 0; k < v.size(); ++k)
                out << s.id << ',' << label << ',' << k << ",0," << report_detail::fmt(v[k], 9)
                    << "\n";
        }
    }
}

// Checkpoint-framed binary blob: magic, version, manifest, float32 payloads
// (one block per sample, in dataset order).
inline void write_features_blob(const BuiltFeatures& f, const Dataset& ds,
                                FeatureKind kind, const std::string& path) {
    nlohmann::ordered_json manifest;
    manifest["type"] = "cropnet-features";
    manifest["feature"] = feature_name(kind);
    auto blocks = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        nlohmann::ordered_json jb;
        jb["name"] = ds.samples[f.kept[i]].id;
        jb["label"] = ds.schema.classes[static_cast<std::size_t>(ds.samples[f.kept[i]].label)];
        if (kind == FeatureKind::Median2D)
            jb["shape"] = std::vector<int>{kNumBands, static_cast<int>(f.values[i].size()) / kNumBands};
        else
            jb["shape"] = std::vector<int>{static_cast<int>(f.values[i].size())};
        jb["payloads"] = std::vector<std::string>{"value"};
        blocks.push_back(std::move(jb));
    }
    manifest["blocks"] = std::move(blocks);
    const std::string line = manifest.dump() + "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out.write(kBlobMagic, sizeof(kBlobMagic));
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t mlen = line.size();
    out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    for (const auto& v : f.values) detail::write_block(out, v);
}

}  // namespace cropnet
