#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cropnet/augment.hpp"
#include "cropnet/checkpoint.hpp"
#include "cropnet/dataset_io.hpp"
#include "cropnet/harmonic.hpp"
#include "cropnet/metrics.hpp"
#include "cropnet/model.hpp"

namespace cropnet {

enum class FeatureKind { Median1D, Median2D, Harmonic, Hyper };

inline std::string feature_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::Median1D: return "median1d";
        case FeatureKind::Median2D: return "median2d";
        case FeatureKind::Harmonic: return "harmonic";
        case FeatureKind::Hyper: return "hyper";
    }
    return "?";
}

inline FeatureKind feature_from_name(const std::string& s) {
    if (s == "median1d") return FeatureKind::Median1D;
    if (s == "median2d") return FeatureKind::Median2D;
    if (s == "harmonic") return FeatureKind::Harmonic;
    if (s == "hyper") return FeatureKind::Hyper;
    throw ConfigError("unknown feature kind '" + s + "'");
}

struct ExperimentOptions {
    FeatureKind feature = FeatureKind::Median2D;
    CompositeConfig composite;
    std::optional<AugmentationConfig> aug;
    ClassAlignmentRule rule;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    TrainHyper hyper;
    std::array<int, 4> widths{64, 128, 256, 512};
    double dropout_p = 0.1;
    bool strict = false;         // rejected target samples count against OA
    std::ostream* progress = nullptr;  // per-seed and per-epoch lines
};

// Per-sample features in net-input layout, with rejected samples dropped.
struct BuiltFeatures {
    CropNetConfig::Variant variant = CropNetConfig::Variant::k2D;
    int h = 0, w = 0;
    std::vector<std::vector<double>> values;
    std::vector<int> labels;
    std::vector<std::size_t> kept;  // indices into the originating dataset
    std::size_t rejected = 0;
};

inline BuiltFeatures build_features(const Dataset& ds, FeatureKind kind,
                                    const CompositeConfig& cfg) {
    cfg.validate();
    BuiltFeatures out;
    const int t = cfg.bin_count();
    switch (kind) {
        case FeatureKind::Median2D:
            out.variant = CropNetConfig::Variant::k2D;
            out.h = kNumBands;
            out.w = t;
            break;
        case FeatureKind::Median1D:
            out.variant = CropNetConfig::Variant::k1D;
            out.h = kNumBands * t;
            out.w = 1;
            break;
        case FeatureKind::Harmonic:
            out.variant = CropNetConfig::Variant::k1D;
            out.h = kHarmonicFeatureLength;
            out.w = 1;
            break;
        case FeatureKind::Hyper:
            out.variant = CropNetConfig::Variant::k1D;
            out.h = 0;  // fixed by the first sample that carries a vector
            out.w = 1;
            break;
    }
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        try {
            std::vector<double> v;
            switch (kind) {
                case FeatureKind::Median2D:
                case FeatureKind::Median1D:
                    v = compose_median(s.series, cfg).values;
                    break;
                case FeatureKind::Harmonic:
                    v = harmonic_features(s.series, cfg).coeffs;
                    break;
                case FeatureKind::Hyper: {
                    if (!s.hyper)
                        throw RejectionError("sample has no hyperspectral vector", 1.0);
                    v = *s.hyper;
                    if (out.h == 0) out.h = static_cast<int>(v.size());
                    if (static_cast<int>(v.size()) != out.h)
                        throw ValidationError("mixed hyperspectral lengths in dataset");
                    break;
                }
            }
            out.values.push_back(std::move(v));
            out.labels.push_back(s.label);
            out.kept.push_back(i);
        } catch (const RejectionError&) {
            ++out.rejected;
        } catch (const InsufficientDataError&) {
            ++out.rejected;
        }
    }
    return out;
}

struct SeedOutcome {
    std::uint64_t seed = 0;
    double oa = 0.0;
    double mf1 = 0.0;
    ConfusionMatrix cm;
    std::size_t excluded = 0;
};

struct EvaluationReport {
    std::string source_region, target_region;
    FeatureKind feature = FeatureKind::Median2D;
    bool augmented = false;
    std::optional<double> in_region_fraction;
    std::vector<std::string> classes;  // target schema
    std::vector<SeedOutcome> per_seed;
    double oa_mean = 0.0, oa_std = 0.0;
    double mf1_mean = 0.0, mf1_std = 0.0;
    ConfusionMatrix aggregated;
    std::vector<double> per_class_recall;
    std::size_t source_rejected = 0, target_rejected = 0;
    std::size_t source_count = 0, target_count = 0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

// Eval-mode argmax predictions in bounded-size batches.
template <typename T>
std::vector<int> predict_all(CropNetModel<T>& model, const BuiltFeatures& f) {
    std::vector<int> preds;
    preds.reserve(f.values.size());
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < f.values.size(); start += chunk) {
        const std::size_t end = std::min(f.values.size(), start + chunk);
        Array4<T> batch(static_cast<int>(end - start), 1, f.h, f.w);
        for (std::size_t i = start; i < end; ++i) {
            const auto& v = f.values[i];
            T* p = batch.plane(static_cast<int>(i - start), 0);
            for (std::size_t k = 0; k < v.size(); ++k) p[k] = static_cast<T>(v[k]);
        }
        auto c = predict_classes(model, batch);
        preds.insert(preds.end(), c.begin(), c.end());
    }
    return preds;
}

}  // namespace detail

// Net-input model config implied by the features.
inline CropNetConfig model_config_for(const BuiltFeatures& f, const std::array<int, 4>& widths,
                                      double dropout_p, int n_classes) {
    CropNetConfig cfg;
    cfg.variant = f.variant;
    cfg.input_h = f.h;
    cfg.input_w = f.w;
    cfg.widths = widths;
    cfg.dropout_p = dropout_p;
    cfg.n_classes = n_classes;
    return cfg;
}

// Provider over precomputed features, optionally re-deriving each sample per
// epoch through the augmentation pipeline, falling back to the baseline
// feature whenever recomposition rejects the perturbed span.
template <typename T>
FeatureProvider<T> make_feature_provider(const Dataset& source, const BuiltFeatures& src,
                                         const std::optional<AugmentationConfig>& aug,
                                         const CompositeConfig& base, std::uint64_t seed,
                                         FeatureKind kind) {
    if (!aug) {
        return [&src](std::size_t i, std::uint64_t) {
            Array4<T> x(1, 1, src.h, src.w);
            const auto& v = src.values[i];
            for (std::size_t k = 0; k < v.size(); ++k) x.v[k] = static_cast<T>(v[k]);
            return x;
        };
    }
    const AugmentationConfig acfg = *aug;
    const bool flatten_to_1d = kind == FeatureKind::Median1D;
    return [&source, &src, acfg, base, seed, flatten_to_1d](std::size_t i, std::uint64_t epoch) {
        const Sample& s = source.samples[src.kept[i]];
        AugmentStream stream{seed, hash_string(s.id), epoch};
        try {
            MedianFeature2D f = augment(s.series, base, acfg, stream);
            if (flatten_to_1d) return to_input<T>(flatten(f).values);
            return to_input<T>(f);
        } catch (const RejectionError&) {
            Array4<T> x(1, 1, src.h, src.w);
            const auto& v = src.values[i];
            for (std::size_t k = 0; k < v.size(); ++k) x.v[k] = static_cast<T>(v[k]);
            return x;
        }
    };
}

// Trains on source only, predicts the target, aligns predictions, scores.
// Nothing derived from the target influences training. One model per seed;
// the trained model of the last seed can be captured via `last_model_out`.
template <typename T = float>
EvaluationReport run_transfer(const Dataset& source, const Dataset& target,
                              const ExperimentOptions& opts,
                              CropNetModel<T>* last_model_out = nullptr) {
    if (opts.seeds.empty()) throw ConfigError("run_transfer: need at least one seed");
    if (opts.aug && opts.feature != FeatureKind::Median1D && opts.feature != FeatureKind::Median2D)
        throw ConfigError("augmentation applies to median features only");

    BuiltFeatures src = build_features(source, opts.feature, opts.composite);
    BuiltFeatures tgt = build_features(target, opts.feature, opts.composite);
    if (src.values.empty()) throw ValidationError("run_transfer: no usable source samples");
    if (tgt.values.empty()) throw ValidationError("run_transfer: all target samples rejected");
    if (opts.feature == FeatureKind::Hyper && src.h != tgt.h)
        throw ValidationError("run_transfer: source/target hyperspectral lengths differ");

    std::vector<int> truth;
    truth.reserve(tgt.kept.size());
    for (std::size_t i : tgt.kept) truth.push_back(target.samples[i].label);
    const std::vector<bool> excluded = excluded_truth_mask(truth, target.schema, opts.rule);

    const CropNetConfig cfg =
        model_config_for(src, opts.widths, opts.dropout_p, source.schema.size());

    EvaluationReport rep;
    rep.source_region = source.region;
    rep.target_region = target.region;
    rep.feature = opts.feature;
    rep.augmented = opts.aug.has_value();
    rep.classes = target.schema.classes;
    rep.aggregated = ConfusionMatrix(target.schema.size());
    rep.source_rejected = src.rejected;
    rep.target_rejected = tgt.rejected;
    rep.source_count = source.size();
    rep.target_count = target.size();

    TrainData<T> data;
    data.count = src.values.size();
    data.labels = src.labels;

    std::vector<double> oas, mf1s;
    for (std::uint64_t seed : opts.seeds) {
        auto model = build_cropnet<T>(cfg, seed);
        model.adam_hp.lr = opts.hyper.lr;
        data.features =
            make_feature_provider<T>(source, src, opts.aug, opts.composite, seed, opts.feature);

        EpochCallback on_epoch;
        if (opts.progress) {
            std::ostream* prog = opts.progress;
            on_epoch = [prog, seed](int epoch, const EpochStats& st) {
                (*prog) << "seed " << seed << " epoch " << epoch << ": loss=" << st.loss
                        << " acc=" << st.accuracy << "\n";
            };
        }
        train_cropnet(model, data, opts.hyper, seed, on_epoch);

        std::vector<int> raw_preds = detail::predict_all(model, tgt);
        std::vector<int> preds =
            align_predictions(raw_preds, source.schema, target.schema, opts.rule);

        SeedOutcome o;
        o.seed = seed;
        o.cm = confusion_matrix(truth, preds, target.schema.size(), &excluded);
        for (bool e : excluded) o.excluded += e ? 1 : 0;
        Metrics ms = metrics(o.cm);
        o.oa = ms.oa;
        o.mf1 = ms.mf1;
        if (opts.strict && tgt.rejected > 0) {
            // Rejected target samples count as errors in the OA denominator.
            const double scored = static_cast<double>(o.cm.total());
            o.oa = o.oa * scored / (scored + static_cast<double>(tgt.rejected));
        }
        rep.aggregated.add(o.cm);
        oas.push_back(o.oa);
        mf1s.push_back(o.mf1);
        if (opts.progress)
            (*opts.progress) << "seed " << seed << ": oa=" << o.oa << " mf1=" << o.mf1 << "\n";
        rep.per_seed.push_back(std::move(o));

        if (last_model_out && seed == opts.seeds.back()) *last_model_out = std::move(model);
    }

    std::tie(rep.oa_mean, rep.oa_std) = detail::mean_std(oas);
    std::tie(rep.mf1_mean, rep.mf1_std) = detail::mean_std(mf1s);
    rep.per_class_recall = metrics(rep.aggregated).per_class_recall;
    return rep;
}

// In-region protocol: fresh train/test split per seed, identity alignment.
template <typename T = float>
EvaluationReport run_in_region(const Dataset& ds, double train_fraction,
                               const ExperimentOptions& opts) {
    if (opts.seeds.empty()) throw ConfigError("run_in_region: need at least one seed");
    EvaluationReport rep;
    std::vector<double> oas, mf1s;
    bool first = true;
    for (std::uint64_t seed : opts.seeds) {
        auto [train, test] = split_dataset(ds, train_fraction, seed);
        ExperimentOptions one = opts;
        one.seeds = {seed};
        one.rule = ClassAlignmentRule{};  // same schema on both sides
        EvaluationReport r = run_transfer<T>(train, test, one);
        if (first) {
            rep = r;
            rep.per_seed.clear();
            rep.aggregated = ConfusionMatrix(ds.schema.size());
            first = false;
        }
        rep.per_seed.push_back(r.per_seed.front());
        rep.aggregated.add(r.per_seed.front().cm);
        oas.push_back(r.per_seed.front().oa);
        mf1s.push_back(r.per_seed.front().mf1);
    }
    rep.source_region = ds.region;
    rep.target_region = ds.region;
    rep.in_region_fraction = train_fraction;
    std::tie(rep.oa_mean, rep.oa_std) = detail::mean_std(oas);
    std::tie(rep.mf1_mean, rep.mf1_std) = detail::mean_std(mf1s);
    rep.per_class_recall = metrics(rep.aggregated).per_class_recall;
    return rep;
}

struct SensitivityCell {
    int d = 0;
    int t_s = 0, t_e = 0;
    double oa_mean = 0.0, oa_std = 0.0;
    double mf1_mean = 0.0;
};

// One transfer run per (window, span) grid cell.
template <typename T = float>
std::vector<SensitivityCell> run_sensitivity(const Dataset& source, const Dataset& target,
                                             const std::vector<int>& windows,
                                             const std::vector<std::pair<int, int>>& spans,
                                             const ExperimentOptions& base) {
    if (windows.empty() || spans.empty())
        throw ConfigError("run_sensitivity: empty grid");
    std::vector<SensitivityCell> rows;
    for (const auto& span : spans) {
        for (int d : windows) {
            ExperimentOptions opts = base;
            opts.composite.t_s = span.first;
            opts.composite.t_e = span.second;
            opts.composite.d = d;
            EvaluationReport r = run_transfer<T>(source, target, opts);
            rows.push_back({d, span.first, span.second, r.oa_mean, r.oa_std, r.mf1_mean});
        }
    }
    return rows;
}

// Table-7-style ladder: none, +shift, +shift+scale, +all.
struct AblationRung {
    std::string name;
    std::optional<AugmentationConfig> aug;
};

inline std::vector<AblationRung> ablation_ladder(const AugmentationConfig& full) {
    AugmentationConfig shift_only = full;
    shift_only.enable_scale = false;
    shift_only.enable_warp = false;
    AugmentationConfig shift_scale = full;
    shift_scale.enable_warp = false;
    return {{"none", std::nullopt},
            {"shift", shift_only},
            {"shift+scale", shift_scale},
            {"shift+scale+warp", full}};
}

}  // namespace cropnet
