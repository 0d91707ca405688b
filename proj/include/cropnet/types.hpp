#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cropnet/bands.hpp"
#include "cropnet/errors.hpp"

namespace cropnet {

// Irregular per-pixel observations: one DOY plus ten reflectances per date.
// Southern-hemisphere samples arrive already re-indexed so DOY 1 is the start
// of the region's 12-month window; nothing downstream knows about hemispheres.
struct SpectralTimeSeries {
    std::vector<int> doys;                         // strictly increasing, 1..365
    std::vector<std::array<double, 10>> refl;      // one row per doy

    void validate() const {
        if (refl.size() != doys.size())
            throw ValidationError("series: reflectance row count != doy count");
        for (std::size_t i = 0; i < doys.size(); ++i) {
            if (doys[i] < 1 || doys[i] > 365)
                throw ValidationError("series: doy " + std::to_string(doys[i]) +
                                      " outside 1..365");
            if (i > 0 && doys[i] <= doys[i - 1])
                throw ValidationError("series: doys not strictly increasing at index " +
                                      std::to_string(i));
            for (double v : refl[i]) {
                if (!std::isfinite(v) || v < 0.0 || v > 1.5)
                    throw ValidationError("series: reflectance outside [0, 1.5]");
            }
        }
    }

    std::size_t size() const { return doys.size(); }
};

struct LabelSchema {
    std::vector<std::string> classes;
    int other_index = -1;

    int size() const { return static_cast<int>(classes.size()); }

    int index_of(const std::string& name) const {
        for (int i = 0; i < size(); ++i)
            if (classes[i] == name) return i;
        return -1;
    }

    void validate() const {
        if (classes.empty()) throw ValidationError("schema: no classes");
        std::set<std::string> seen;
        int other_count = 0;
        for (const auto& c : classes) {
            if (!seen.insert(c).second)
                throw ValidationError("schema: duplicate class '" + c + "'");
            if (c == "Other") ++other_count;
        }
        if (other_count != 1)
            throw ValidationError("schema: 'Other' must appear exactly once");
        if (other_index < 0 || other_index >= size() || classes[other_index] != "Other")
            throw ValidationError("schema: other_index does not point at 'Other'");
    }

    bool operator==(const LabelSchema&) const = default;
};

inline LabelSchema make_schema(std::vector<std::string> classes) {
    LabelSchema s;
    s.classes = std::move(classes);
    for (int i = 0; i < s.size(); ++i)
        if (s.classes[i] == "Other") s.other_index = i;
    s.validate();
    return s;
}

struct Sample {
    std::string id;
    double lon = 0.0;
    double lat = 0.0;
    std::string country;
    int label = -1;
    SpectralTimeSeries series;
    std::optional<std::vector<double>> hyper;  // 242 or 484 values

    void validate(const LabelSchema& schema) const {
        if (label < 0 || label >= schema.size())
            throw ValidationError("sample " + id + ": label index out of schema");
        series.validate();
        if (hyper && hyper->size() != 242 && hyper->size() != 484)
            throw ValidationError("sample " + id + ": hyper length must be 242 or 484");
    }
};

struct Dataset {
    LabelSchema schema;
    std::vector<Sample> samples;
    std::string region;

    std::size_t size() const { return samples.size(); }

    std::vector<int> labels() const {
        std::vector<int> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(s.label);
        return out;
    }
};

// How source-schema predictions are reconciled with a target schema before
// scoring. reassign_to_other: affected source classes score as target "Other".
// drop_classes: target ground-truth rows of the affected classes are excluded
// (they cannot be merged into "Other" when the source never saw them).
struct ClassAlignmentRule {
    enum class Mode { identity, reassign_to_other, drop_classes };
    Mode mode = Mode::identity;
    std::set<int> affected;  // source indices for reassign, target indices for drop
};

}  // namespace cropnet
