#pragma once

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cropnet/rng.hpp"
#include "cropnet/types.hpp"

namespace cropnet {

// One sample per line:
// {"id":...,"lon":...,"lat":...,"country":...,"label":...,"doys":[...],"refl":[[...]],"hyper":[...]}
// Canonical form: keys in that order, no whitespace, shortest round-trip
// numbers, "hyper" omitted when absent. load -> serialize -> load is a fixed
// point.

struct LoadIssue {
    std::size_t line;  // 1-based
    std::string message;
};

struct LoadResult {
    Dataset dataset;
    std::vector<LoadIssue> issues;
};

inline std::string serialize_sample(const Sample& s, const LabelSchema& schema) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["lon"] = s.lon;
    j["lat"] = s.lat;
    j["country"] = s.country;
    j["label"] = schema.classes.at(static_cast<std::size_t>(s.label));
    j["doys"] = s.series.doys;
    auto refl = nlohmann::ordered_json::array();
    for (const auto& row : s.series.refl)
        refl.push_back(std::vector<double>(row.begin(), row.end()));
    j["refl"] = std::move(refl);
    if (s.hyper) j["hyper"] = *s.hyper;
    return j.dump();
}

inline Sample parse_sample_line(const std::string& line, const LabelSchema& schema) {
    nlohmann::json j = nlohmann::json::parse(line);
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.lon = j.at("lon").get<double>();
    s.lat = j.at("lat").get<double>();
    s.country = j.at("country").get<std::string>();
    const std::string label_name = j.at("label").get<std::string>();
    s.label = schema.index_of(label_name);
    if (s.label < 0)
        throw ValidationError("unknown label '" + label_name + "'");
    s.series.doys = j.at("doys").get<std::vector<int>>();
    for (const auto& row : j.at("refl")) {
        auto vals = row.get<std::vector<double>>();
        if (vals.size() != kNumBands)
            throw ValidationError("reflectance row must have 10 bands");
        std::array<double, 10> a{};
        std::copy(vals.begin(), vals.end(), a.begin());
        s.series.refl.push_back(a);
    }
    if (j.contains("hyper")) s.hyper = j.at("hyper").get<std::vector<double>>();
    s.validate(schema);
    return s;
}

// Strict-fail per line, but loading continues and collects an issue report;
// large files with sporadic corruption still yield their valid rows.
inline LoadResult load_dataset(const std::string& path, const LabelSchema& schema) {
    schema.validate();
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);
    LoadResult res;
    res.dataset.schema = schema;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            res.dataset.samples.push_back(parse_sample_line(line, schema));
        } catch (const nlohmann::json::exception& e) {
            res.issues.push_back({line_no, std::string("parse error: ") + e.what()});
        } catch (const Error& e) {
            res.issues.push_back({line_no, e.what()});
        }
    }
    return res;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open output file: " + path);
    for (const auto& s : ds.samples) out << serialize_sample(s, ds.schema) << '\n';
}

inline std::string serialize_dataset(const Dataset& ds) {
    std::ostringstream out;
    for (const auto& s : ds.samples) out << serialize_sample(s, ds.schema) << '\n';
    return out.str();
}

// Deterministic seeded shuffle; train size = round(fraction * N). Disjoint and
// exhaustive for every seed.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction,
                                                 std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("split_dataset: fraction must lie in (0,1)");
    if (ds.samples.empty()) throw ValidationError("split_dataset: empty dataset");
    const std::size_t n = ds.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::stream(seed, hash_string("split"));
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
        std::swap(order[i], order[j]);
    }
    const auto n_train =
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    Dataset train{ds.schema, {}, ds.region};
    Dataset test{ds.schema, {}, ds.region};
    for (std::size_t i = 0; i < n; ++i)
        (i < n_train ? train : test).samples.push_back(ds.samples[order[i]]);
    return {std::move(train), std::move(test)};
}

// Maps source-schema prediction indices into the target schema. Affected
// classes go to target "Other" under reassign_to_other; all other classes map
// by name. drop_classes does not touch predictions (exclusion applies to
// ground-truth rows, see excluded_truth_mask).
inline std::vector<int> align_predictions(const std::vector<int>& preds,
                                          const LabelSchema& source,
                                          const LabelSchema& target,
                                          const ClassAlignmentRule& rule) {
    using Mode = ClassAlignmentRule::Mode;
    if (rule.mode == Mode::reassign_to_other) {
        for (int c : rule.affected)
            if (c < 0 || c >= source.size())
                throw ValidationError("alignment rule references class absent from source");
    } else if (rule.mode == Mode::drop_classes) {
        for (int c : rule.affected)
            if (c < 0 || c >= target.size())
                throw ValidationError("alignment rule references class absent from target");
    }
    std::vector<int> name_map(static_cast<std::size_t>(source.size()));
    for (int i = 0; i < source.size(); ++i) {
        int t = target.index_of(source.classes[static_cast<std::size_t>(i)]);
        name_map[static_cast<std::size_t>(i)] = t;
    }
    std::vector<int> out;
    out.reserve(preds.size());
    for (int p : preds) {
        if (p < 0 || p >= source.size())
            throw ValidationError("prediction index outside source schema");
        if (rule.mode == Mode::reassign_to_other && rule.affected.count(p)) {
            out.push_back(target.other_index);
            continue;
        }
        int t = name_map[static_cast<std::size_t>(p)];
        if (t < 0)
            throw ValidationError("class '" + source.classes[static_cast<std::size_t>(p)] +
                                  "' has no counterpart in target schema");
        out.push_back(t);
    }
    return out;
}

// Ground-truth rows excluded from scoring under drop_classes.
inline std::vector<bool> excluded_truth_mask(const std::vector<int>& truth,
                                             const LabelSchema& target,
                                             const ClassAlignmentRule& rule) {
    std::vector<bool> mask(truth.size(), false);
    if (rule.mode != ClassAlignmentRule::Mode::drop_classes) return mask;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= target.size())
            throw ValidationError("truth index outside target schema");
        mask[i] = rule.affected.count(truth[i]) > 0;
    }
    return mask;
}

}  // namespace cropnet
