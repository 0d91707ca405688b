#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cropnet/augment.hpp"
#include "cropnet/composite.hpp"
#include "cropnet/eval.hpp"
#include "cropnet/synth.hpp"

namespace cropnet {

// INI-style experiment file: [section] headers (dots allowed), key = value
// lines, '#' comments. Flags override file values; the resolved merge is what
// gets snapshotted next to the outputs.

class ConfigMap {
public:
    void set(const std::string& section, const std::string& key, const std::string& value) {
        values_[section + "/" + key] = value;
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "/" + key) > 0;
    }

    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const {
        auto it = values_.find(section + "/" + key);
        return it == values_.end() ? fallback : it->second;
    }

    static ConfigMap parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        ConfigMap m;
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": expected key = value");
            m.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return m;
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    std::map<std::string, std::string> values_;
};

namespace cfgdetail {

inline int to_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("expected integer for " + what + ", got '" + s + "'");
    }
}

inline double to_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("expected number for " + what + ", got '" + s + "'");
    }
}

inline bool to_bool(const std::string& s, const std::string& what) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("expected boolean for " + what + ", got '" + s + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = ConfigMap::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<int> to_int_list(const std::string& s, const std::string& what) {
    std::vector<int> out;
    for (const auto& item : split(s, ',')) out.push_back(to_int(item, what));
    return out;
}

}  // namespace cfgdetail

struct SynthRegionSettings {
    RegionConfig region;
    std::uint64_t seed = 42;
};

// Everything a run needs, resolvable from file + flag overrides and
// serializable back out as the snapshot.
struct ExperimentConfig {
    std::string name = "experiment";
    std::string out_dir = "runs/out";
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    int threads = 1;
    bool strict = false;

    std::string source = "synth";  // dataset path or "synth"
    std::string target = "";       // dataset path, "synth", or empty
    std::vector<std::string> classes;  // empty -> synth fixture schema

    std::uint64_t synth_seed = 42;
    RegionConfig synth_source;
    RegionConfig synth_target;

    CompositeConfig composite;
    bool aug_enabled = false;
    AugmentationConfig aug;

    std::string variant = "2d";
    std::array<int, 4> widths{64, 128, 256, 512};
    double dropout_p = 0.1;

    TrainHyper train;

    std::string feature = "median2d";
    std::string rule_mode = "identity";
    std::vector<std::string> rule_classes;
    double in_region_fraction = 0.8;
    std::vector<int> windows = {5, 10, 15, 30};
    std::vector<std::pair<int, int>> spans = {{121, 334}};

    static ExperimentConfig from_map(const ConfigMap& m) {
        using namespace cfgdetail;
        ExperimentConfig c;
        c.synth_source.name = "source";
        c.synth_target.name = "target";
        c.synth_source.class_counts.assign(5, 120);
        c.synth_target.class_counts.assign(5, 120);
        c.synth_source.cadence = 5;
        c.synth_target.cadence = 5;
        c.synth_source.gap_probability = 0.1;
        c.synth_target.gap_probability = 0.1;
        c.synth_source.noise_sigma = 0.01;
        c.synth_target.noise_sigma = 0.01;
        c.synth_source.jitter_days = 5;
        c.synth_target.jitter_days = 5;
        c.synth_source.amplitude_jitter = 0.05;
        c.synth_target.amplitude_jitter = 0.05;

        c.name = m.get("experiment", "name", c.name);
        c.out_dir = m.get("experiment", "out", c.out_dir);
        if (m.has("experiment", "seeds")) {
            c.seeds.clear();
            for (int s : to_int_list(m.get("experiment", "seeds", ""), "experiment.seeds"))
                c.seeds.push_back(static_cast<std::uint64_t>(s));
            if (c.seeds.empty()) throw ConfigError("experiment.seeds must be nonempty");
        }
        c.threads = to_int(m.get("experiment", "threads", "1"), "experiment.threads");
        c.strict = to_bool(m.get("experiment", "strict", "false"), "experiment.strict");

        c.source = m.get("data", "source", c.source);
        c.target = m.get("data", "target", c.target);
        if (m.has("data", "classes")) c.classes = split(m.get("data", "classes", ""), ',');

        c.synth_seed =
            static_cast<std::uint64_t>(to_int(m.get("synth", "seed", "42"), "synth.seed"));
        auto region_from = [&](const std::string& sub, RegionConfig base) {
            auto get = [&](const std::string& key, const std::string& fallback) {
                // per-region section wins over shared [synth]
                if (m.has("synth." + sub, key)) return m.get("synth." + sub, key, fallback);
                return m.get("synth", key, fallback);
            };
            RegionConfig r = base;
            r.name = get("name", base.name);
            r.phenology_shift = to_double(get("phenology_shift", "0"), "synth phenology_shift");
            r.amplitude_scale = to_double(get("amplitude_scale", "1"), "synth amplitude_scale");
            r.cadence = to_int(get("cadence", "5"), "synth cadence");
            r.gap_probability = to_double(get("gap_probability", "0.1"), "synth gap_probability");
            r.noise_sigma = to_double(get("noise_sigma", "0.01"), "synth noise_sigma");
            r.jitter_days = to_int(get("jitter_days", "5"), "synth jitter_days");
            r.amplitude_jitter =
                to_double(get("amplitude_jitter", "0.05"), "synth amplitude_jitter");
            r.length_jitter_days =
                to_int(get("length_jitter_days", "0"), "synth length_jitter_days");
            r.with_hyper = to_bool(get("with_hyper", "false"), "synth with_hyper");
            if (m.has("synth." + sub, "counts") || m.has("synth", "counts"))
                r.class_counts = to_int_list(get("counts", ""), "synth counts");
            return r;
        };
        c.synth_source = region_from("source", c.synth_source);
        c.synth_target = region_from("target", c.synth_target);

        c.composite.t_s = to_int(m.get("composite", "t_s", "121"), "composite.t_s");
        c.composite.t_e = to_int(m.get("composite", "t_e", "334"), "composite.t_e");
        c.composite.d = to_int(m.get("composite", "d", "5"), "composite.d");
        c.composite.max_missing_fraction = to_double(
            m.get("composite", "max_missing_fraction", "0.4"), "composite.max_missing_fraction");

        c.aug_enabled = to_bool(m.get("augment", "enabled", "false"), "augment.enabled");
        if (m.has("augment", "shift")) {
            auto v = to_int_list(m.get("augment", "shift", ""), "augment.shift");
            if (v.size() != 2) throw ConfigError("augment.shift needs lo,hi");
            c.aug.shift_lo = v[0];
            c.aug.shift_hi = v[1];
        }
        if (m.has("augment", "scale")) {
            auto v = to_int_list(m.get("augment", "scale", ""), "augment.scale");
            if (v.size() != 2) throw ConfigError("augment.scale needs lo,hi");
            c.aug.scale_lo = v[0];
            c.aug.scale_hi = v[1];
        }
        c.aug.warp_sigma =
            to_double(m.get("augment", "warp_sigma", "0.2"), "augment.warp_sigma");
        c.aug.warp_knots = to_int(m.get("augment", "warp_knots", "5"), "augment.warp_knots");
        c.aug.apply_prob =
            to_double(m.get("augment", "apply_prob", "0.5"), "augment.apply_prob");

        c.variant = m.get("model", "variant", "2d");
        if (m.has("model", "widths")) {
            auto v = to_int_list(m.get("model", "widths", ""), "model.widths");
            if (v.size() != 4) throw ConfigError("model.widths needs 4 entries");
            std::copy(v.begin(), v.end(), c.widths.begin());
        }
        c.dropout_p = to_double(m.get("model", "dropout_p", "0.1"), "model.dropout_p");

        c.train.lr = to_double(m.get("train", "lr", "0.0001"), "train.lr");
        c.train.batch_size = to_int(m.get("train", "batch", "256"), "train.batch");
        c.train.epochs = to_int(m.get("train", "epochs", "50"), "train.epochs");

        c.feature = m.get("eval", "feature", "median2d");
        c.rule_mode = m.get("eval", "rule", "identity");
        if (m.has("eval", "rule_classes"))
            c.rule_classes = split(m.get("eval", "rule_classes", ""), ',');
        c.in_region_fraction = to_double(m.get("eval", "in_region_fraction", "0.8"),
                                         "eval.in_region_fraction");
        if (m.has("eval", "windows")) c.windows = to_int_list(m.get("eval", "windows", ""), "eval.windows");
        if (m.has("eval", "spans")) {
            c.spans.clear();
            for (const auto& sp : split(m.get("eval", "spans", ""), ',')) {
                auto parts = split(sp, ':');
                if (parts.size() != 2) throw ConfigError("eval.spans entries look like t_s:t_e");
                c.spans.emplace_back(to_int(parts[0], "span start"), to_int(parts[1], "span end"));
            }
            if (c.spans.empty()) throw ConfigError("eval.spans must be nonempty");
        }
        return c;
    }

    std::string to_text() const {
        std::ostringstream o;
        o << "[experiment]\n";
        o << "name = " << name << "\n";
        o << "out = " << out_dir << "\n";
        o << "seeds = " << join_u64(seeds) << "\n";
        o << "threads = " << threads << "\n";
        o << "strict = " << (strict ? "true" : "false") << "\n\n";
        o << "[data]\n";
        o << "source = " << source << "\n";
        o << "target = " << target << "\n";
        if (!classes.empty()) o << "classes = " << join_str(classes) << "\n";
        o << "\n[synth]\n";
        o << "seed = " << synth_seed << "\n";
        o << region_text("synth.source", synth_source);
        o << region_text("synth.target", synth_target);
        o << "[composite]\n";
        o << "t_s = " << composite.t_s << "\n";
        o << "t_e = " << composite.t_e << "\n";
        o << "d = " << composite.d << "\n";
        o << "max_missing_fraction = " << composite.max_missing_fraction << "\n\n";
        o << "[augment]\n";
        o << "enabled = " << (aug_enabled ? "true" : "false") << "\n";
        o << "shift = " << aug.shift_lo << "," << aug.shift_hi << "\n";
        o << "scale = " << aug.scale_lo << "," << aug.scale_hi << "\n";
        o << "warp_sigma = " << aug.warp_sigma << "\n";
        o << "warp_knots = " << aug.warp_knots << "\n";
        o << "apply_prob = " << aug.apply_prob << "\n\n";
        o << "[model]\n";
        o << "variant = " << variant << "\n";
        o << "widths = " << widths[0] << "," << widths[1] << "," << widths[2] << ","
          << widths[3] << "\n";
        o << "dropout_p = " << dropout_p << "\n\n";
        o << "[train]\n";
        o << "lr = " << train.lr << "\n";
        o << "batch = " << train.batch_size << "\n";
        o << "epochs = " << train.epochs << "\n\n";
        o << "[eval]\n";
        o << "feature = " << feature << "\n";
        o << "rule = " << rule_mode << "\n";
        if (!rule_classes.empty()) o << "rule_classes = " << join_str(rule_classes) << "\n";
        o << "in_region_fraction = " << in_region_fraction << "\n";
        o << "windows = " << join_int(windows) << "\n";
        o << "spans = " << join_spans(spans) << "\n";
        return o.str();
    }

private:
    static std::string join_str(const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
        return s;
    }
    static std::string join_int(const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    }
    static std::string join_u64(const std::vector<std::uint64_t>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    }
    static std::string join_spans(const std::vector<std::pair<int, int>>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? "," : "") + std::to_string(v[i].first) + ":" + std::to_string(v[i].second);
        return s;
    }
    static std::string region_text(const std::string& section, const RegionConfig& r) {
        std::ostringstream o;
        o << "[" << section << "]\n";
        o << "name = " << r.name << "\n";
        o << "phenology_shift = " << r.phenology_shift << "\n";
        o << "amplitude_scale = " << r.amplitude_scale << "\n";
        o << "cadence = " << r.cadence << "\n";
        o << "gap_probability = " << r.gap_probability << "\n";
        o << "noise_sigma = " << r.noise_sigma << "\n";
        o << "jitter_days = " << r.jitter_days << "\n";
        o << "amplitude_jitter = " << r.amplitude_jitter << "\n";
        o << "length_jitter_days = " << r.length_jitter_days << "\n";
        o << "with_hyper = " << (r.with_hyper ? "true" : "false") << "\n";
        std::string counts;
        for (std::size_t i = 0; i < r.class_counts.size(); ++i)
            counts += (i ? "," : "") + std::to_string(r.class_counts[i]);
        o << "counts = " << counts << "\n\n";
        return o.str();
    }
};

}  // namespace cropnet
