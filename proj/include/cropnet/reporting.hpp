#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cropnet/eval.hpp"
#include "cropnet/gradcam.hpp"

namespace cropnet {

// All quantitative outputs land in files with deterministic formatting, so a
// re-run from the resolved config reproduces them byte for byte.

namespace report_detail {

inline std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace report_detail

inline nlohmann::ordered_json report_to_json(const EvaluationReport& r,
                                             const std::string& experiment) {
    nlohmann::ordered_json j;
    j["experiment"] = experiment;
    j["source"] = r.source_region;
    j["target"] = r.target_region;
    j["feature"] = feature_name(r.feature);
    j["augmented"] = r.augmented;
    if (r.in_region_fraction)
        j["in_region_fraction"] = *r.in_region_fraction;
    j["classes"] = r.classes;
    j["oa"] = {{"mean", r.oa_mean}, {"std", r.oa_std}};
    j["mf1"] = {{"mean", r.mf1_mean}, {"std", r.mf1_std}};
    auto seeds = nlohmann::ordered_json::array();
    for (const auto& s : r.per_seed) {
        nlohmann::ordered_json js;
        js["seed"] = s.seed;
        js["oa"] = s.oa;
        js["mf1"] = s.mf1;
        js["excluded"] = s.excluded;
        seeds.push_back(std::move(js));
    }
    j["per_seed"] = std::move(seeds);
    auto cm = nlohmann::ordered_json::array();
    for (int t = 0; t < r.aggregated.k; ++t) {
        std::vector<std::int64_t> row(static_cast<std::size_t>(r.aggregated.k));
        for (int p = 0; p < r.aggregated.k; ++p) row[static_cast<std::size_t>(p)] = r.aggregated.at(t, p);
        cm.push_back(row);
    }
    j["confusion"] = std::move(cm);
    j["per_class_recall"] = r.per_class_recall;
    j["source_rejected"] = r.source_rejected;
    j["target_rejected"] = r.target_rejected;
    j["source_count"] = r.source_count;
    j["target_count"] = r.target_count;
    return j;
}

inline void write_report_json(const EvaluationReport& r, const std::string& experiment,
                              const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << report_to_json(r, experiment).dump(2) << "\n";
}

inline void write_summary_csv(const std::vector<EvaluationReport>& reports,
                              const std::vector<std::string>& names, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << "experiment,feature,seed,oa,mf1\n";
    for (std::size_t i = 0; i < reports.size(); ++i)
        for (const auto& s : reports[i].per_seed)
            out << names[i] << ',' << feature_name(reports[i].feature) << ',' << s.seed << ','
                << report_detail::fmt(s.oa) << ',' << report_detail::fmt(s.mf1) << "\n";
}

inline void write_confusion_csv(const ConfusionMatrix& cm,
                                const std::vector<std::string>& classes,
                                const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << "truth\\pred";
    for (const auto& c : classes) out << ',' << c;
    out << "\n";
    for (int t = 0; t < cm.k; ++t) {
        out << classes[static_cast<std::size_t>(t)];
        for (int p = 0; p < cm.k; ++p) out << ',' << cm.at(t, p);
        out << "\n";
    }
}

inline void write_importance_csv(const ImportanceMap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << "band,bin,value\n";
    for (int b = 0; b < map.rows; ++b)
        for (int i = 0; i < map.cols; ++i)
            out << kBandNames[static_cast<std::size_t>(b)] << ',' << i << ','
                << report_detail::fmt(map.at(b, i), 9) << "\n";
}

inline void write_sensitivity_csv(const std::vector<SensitivityCell>& rows,
                                  const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << "d,t_s,t_e,oa_mean,oa_std,mf1_mean\n";
    for (const auto& r : rows)
        out << r.d << ',' << r.t_s << ',' << r.t_e << ',' << report_detail::fmt(r.oa_mean) << ','
            << report_detail::fmt(r.oa_std) << ',' << report_detail::fmt(r.mf1_mean) << "\n";
}

}  // namespace cropnet
