#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cropnet/expconfig.hpp"
#include "cropnet/feature_export.hpp"
#include "cropnet/gradcam.hpp"
#include "cropnet/reporting.hpp"
#include "cropnet/synth.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace cropnet::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config error.

namespace detail {

struct FlagOverrides {
    std::optional<std::string> out, source, target, input, checkpoint, feature, variant,
        rule, seed_list, widths, windows, spans;
    std::optional<int> threads, epochs, batch, d, t_s, t_e, n_classes, max_per_class;
    std::optional<double> lr, fraction;
    bool strict = false;
    bool augment = false;
    bool no_augment = false;
};

inline ExperimentConfig resolve_config(const std::string& config_path, const FlagOverrides& f) {
    ConfigMap m = config_path.empty() ? ConfigMap{} : ConfigMap::parse_file(config_path);
    ExperimentConfig cfg = ExperimentConfig::from_map(m);
    if (f.out) cfg.out_dir = *f.out;
    if (f.source) cfg.source = *f.source;
    if (f.target) cfg.target = *f.target;
    if (f.feature) cfg.feature = *f.feature;
    if (f.variant) cfg.variant = *f.variant;
    if (f.rule) cfg.rule_mode = *f.rule;
    if (f.seed_list) {
        cfg.seeds.clear();
        for (int s : cfgdetail::to_int_list(*f.seed_list, "--seed-list"))
            cfg.seeds.push_back(static_cast<std::uint64_t>(s));
        if (cfg.seeds.empty()) throw ConfigError("--seed-list must be nonempty");
    }
    if (f.widths) {
        auto v = cfgdetail::to_int_list(*f.widths, "--widths");
        if (v.size() != 4) throw ConfigError("--widths needs 4 entries");
        std::copy(v.begin(), v.end(), cfg.widths.begin());
    }
    if (f.windows) cfg.windows = cfgdetail::to_int_list(*f.windows, "--windows");
    if (f.spans) {
        cfg.spans.clear();
        for (const auto& sp : cfgdetail::split(*f.spans, ',')) {
            auto parts = cfgdetail::split(sp, ':');
            if (parts.size() != 2) throw ConfigError("--spans entries look like t_s:t_e");
            cfg.spans.emplace_back(cfgdetail::to_int(parts[0], "span start"),
                                   cfgdetail::to_int(parts[1], "span end"));
        }
    }
    if (f.threads) cfg.threads = *f.threads;
    if (f.epochs) cfg.train.epochs = *f.epochs;
    if (f.batch) cfg.train.batch_size = *f.batch;
    if (f.lr) cfg.train.lr = *f.lr;
    if (f.d) cfg.composite.d = *f.d;
    if (f.t_s) cfg.composite.t_s = *f.t_s;
    if (f.t_e) cfg.composite.t_e = *f.t_e;
    if (f.fraction) cfg.in_region_fraction = *f.fraction;
    if (f.strict) cfg.strict = true;
    if (f.augment) cfg.aug_enabled = true;
    if (f.no_augment) cfg.aug_enabled = false;
    return cfg;
}

inline void apply_threads(const ExperimentConfig& cfg) {
#if defined(_OPENMP)
    omp_set_num_threads(cfg.threads > 0 ? cfg.threads : 1);
#else
    (void)cfg;
#endif
}

inline LabelSchema schema_from(const ExperimentConfig& cfg) {
    if (cfg.classes.empty()) return default_synth_schema();
    return make_schema(cfg.classes);
}

inline Dataset synth_dataset(const ExperimentConfig& cfg, bool is_target) {
    const RegionConfig& region = is_target ? cfg.synth_target : cfg.synth_source;
    // Distinct deterministic generator streams per role.
    const std::uint64_t seed = is_target ? cfg.synth_seed + 1 : cfg.synth_seed;
    return generate_region(default_templates(), default_synth_schema(), region, seed);
}

inline Dataset load_or_synth(const ExperimentConfig& cfg, const std::string& spec, bool is_target,
                             std::ostream& err) {
    if (spec.empty())
        throw ConfigError(std::string(is_target ? "target" : "source") + " dataset not set");
    if (spec == "synth") return synth_dataset(cfg, is_target);
    LoadResult r = load_dataset(spec, schema_from(cfg));
    for (const auto& issue : r.issues)
        err << spec << ":" << issue.line << ": " << issue.message << "\n";
    r.dataset.region = std::filesystem::path(spec).stem().string();
    return r.dataset;
}

inline ClassAlignmentRule rule_from(const ExperimentConfig& cfg, const LabelSchema& source,
                                    const LabelSchema& target) {
    ClassAlignmentRule rule;
    if (cfg.rule_mode == "identity") {
        rule.mode = ClassAlignmentRule::Mode::identity;
    } else if (cfg.rule_mode == "reassign_to_other") {
        rule.mode = ClassAlignmentRule::Mode::reassign_to_other;
    } else if (cfg.rule_mode == "drop_classes") {
        rule.mode = ClassAlignmentRule::Mode::drop_classes;
    } else {
        throw ConfigError("unknown alignment rule '" + cfg.rule_mode + "'");
    }
    const LabelSchema& lookup =
        rule.mode == ClassAlignmentRule::Mode::drop_classes ? target : source;
    for (const auto& name : cfg.rule_classes) {
        const int idx = lookup.index_of(name);
        if (idx < 0) throw ConfigError("alignment rule class '" + name + "' not in schema");
        rule.affected.insert(idx);
    }
    return rule;
}

inline ExperimentOptions options_from(const ExperimentConfig& cfg) {
    ExperimentOptions opts;
    opts.feature = feature_from_name(cfg.feature);
    opts.composite = cfg.composite;
    opts.composite.validate();
    if (cfg.aug_enabled) {
        cfg.aug.validate();
        opts.aug = cfg.aug;
    }
    opts.seeds = cfg.seeds;
    opts.hyper = cfg.train;
    opts.widths = cfg.widths;
    opts.dropout_p = cfg.dropout_p;
    opts.strict = cfg.strict;
    return opts;
}

inline std::filesystem::path prepare_out(const ExperimentConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    std::ofstream snap(dir / "config.resolved", std::ios::binary);
    if (!snap) throw ValidationError("cannot write config snapshot in " + cfg.out_dir);
    snap << cfg.to_text();
    return dir;
}

inline void write_transfer_outputs(const EvaluationReport& rep, const ExperimentConfig& cfg,
                                   const std::filesystem::path& dir) {
    write_report_json(rep, cfg.name, (dir / "report.json").string());
    write_summary_csv({rep}, {cfg.name}, (dir / "summary.csv").string());
    for (const auto& s : rep.per_seed)
        write_confusion_csv(s.cm, rep.classes,
                            (dir / ("confusion_" + std::to_string(s.seed) + ".csv")).string());
}

}  // namespace detail

inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"cropnet: spectral-temporal crop features, augmentation, and transfer evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    detail::FlagOverrides f;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config file");
        sub->add_option("--out", [&](const CLI::results_t& v) { f.out = v[0]; return true; },
                        "output directory");
        sub->add_option("--seed-list",
                        [&](const CLI::results_t& v) { f.seed_list = v[0]; return true; },
                        "comma-separated seeds");
        sub->add_option("--threads", [&](const CLI::results_t& v) {
                            f.threads = std::stoi(v[0]); return true; },
                        "worker threads");
        sub->add_flag("--strict", f.strict, "count rejected target samples against OA");
        sub->add_option("--feature", [&](const CLI::results_t& v) { f.feature = v[0]; return true; },
                        "median1d|median2d|harmonic|hyper");
        sub->add_option("--epochs", [&](const CLI::results_t& v) {
                            f.epochs = std::stoi(v[0]); return true; }, "training epochs");
        sub->add_option("--batch", [&](const CLI::results_t& v) {
                            f.batch = std::stoi(v[0]); return true; }, "batch size");
        sub->add_option("--lr", [&](const CLI::results_t& v) {
                            f.lr = std::stod(v[0]); return true; }, "learning rate");
        sub->add_option("--widths", [&](const CLI::results_t& v) { f.widths = v[0]; return true; },
                        "4 comma-separated channel widths");
        sub->add_option("--window", [&](const CLI::results_t& v) {
                            f.d = std::stoi(v[0]); return true; }, "composite window d, days");
        sub->add_option("--t-s", [&](const CLI::results_t& v) {
                            f.t_s = std::stoi(v[0]); return true; }, "span start DOY");
        sub->add_option("--t-e", [&](const CLI::results_t& v) {
                            f.t_e = std::stoi(v[0]); return true; }, "span end DOY");
        sub->add_option("--source", [&](const CLI::results_t& v) { f.source = v[0]; return true; },
                        "source dataset path or 'synth'");
        sub->add_option("--target", [&](const CLI::results_t& v) { f.target = v[0]; return true; },
                        "target dataset path or 'synth'");
        sub->add_option("--rule", [&](const CLI::results_t& v) { f.rule = v[0]; return true; },
                        "identity|reassign_to_other|drop_classes");
        sub->add_flag("--augment", f.augment, "enable training-time augmentation");
        sub->add_flag("--no-augment", f.no_augment, "disable training-time augmentation");
        return sub;
    };

    auto* synth = add_common(app.add_subcommand("synth", "generate synthetic source/target datasets"));
    auto* validate = add_common(app.add_subcommand("validate", "validate a dataset file"));
    validate->add_option("--input", [&](const CLI::results_t& v) { f.input = v[0]; return true; },
                         "dataset to validate");
    auto* featurize = add_common(app.add_subcommand("featurize", "export features as CSV and blob"));
    featurize->add_option("--input", [&](const CLI::results_t& v) { f.input = v[0]; return true; },
                          "dataset to featurize");
    auto* params = app.add_subcommand("params", "print the model parameter count");
    params->add_option("--widths", [&](const CLI::results_t& v) { f.widths = v[0]; return true; },
                       "4 comma-separated channel widths");
    params->add_option("--variant", [&](const CLI::results_t& v) { f.variant = v[0]; return true; },
                       "2d|1d");
    params->add_option("--classes", [&](const CLI::results_t& v) {
                           f.n_classes = std::stoi(v[0]); return true; }, "number of classes");
    params->add_option("--config", config_path, "experiment config file");
    auto* train = add_common(app.add_subcommand("train", "train one model on the source dataset"));
    auto* eval = add_common(app.add_subcommand("eval", "in-region split evaluation"));
    eval->add_option("--fraction", [&](const CLI::results_t& v) {
                         f.fraction = std::stod(v[0]); return true; }, "train fraction");
    auto* transfer = add_common(app.add_subcommand("transfer", "cross-region transfer evaluation"));
    auto* sensitivity = add_common(
        app.add_subcommand("sensitivity", "window/span sensitivity grid"));
    sensitivity->add_option("--windows", [&](const CLI::results_t& v) { f.windows = v[0]; return true; },
                            "comma-separated window lengths");
    sensitivity->add_option("--spans", [&](const CLI::results_t& v) { f.spans = v[0]; return true; },
                            "comma-separated t_s:t_e spans");
    auto* ablate = add_common(app.add_subcommand("ablate", "augmentation ablation ladder"));
    auto* cam = add_common(app.add_subcommand("cam", "class activation importance maps"));
    cam->add_option("--checkpoint", [&](const CLI::results_t& v) { f.checkpoint = v[0]; return true; },
                    "model checkpoint");
    cam->add_option("--input", [&](const CLI::results_t& v) { f.input = v[0]; return true; },
                    "dataset to explain");
    cam->add_option("--max-per-class", [&](const CLI::results_t& v) {
                        f.max_per_class = std::stoi(v[0]); return true; },
                    "samples averaged per class");
    int cam_layer = kDefaultCamLayer;
    cam->add_option("--cam-layer", cam_layer, "conv layer whose activations are mapped (0-7)");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        ExperimentConfig cfg = detail::resolve_config(config_path, f);
        detail::apply_threads(cfg);

        if (params->parsed()) {
            CropNetConfig mc;
            mc.variant = (f.variant.value_or(cfg.variant) == "1d") ? CropNetConfig::Variant::k1D
                                                                   : CropNetConfig::Variant::k2D;
            if (mc.variant == CropNetConfig::Variant::k1D) {
                mc.input_h = kNumBands * cfg.composite.bin_count();
                mc.input_w = 1;
            } else {
                mc.input_h = kNumBands;
                mc.input_w = cfg.composite.bin_count();
            }
            mc.widths = cfg.widths;
            mc.n_classes = f.n_classes.value_or(7);
            out << parameter_count(mc) << "\n";
            return 0;
        }

        if (synth->parsed()) {
            auto dir = detail::prepare_out(cfg);
            Dataset src = detail::synth_dataset(cfg, false);
            Dataset tgt = detail::synth_dataset(cfg, true);
            save_dataset(src, (dir / "source.jsonl").string());
            save_dataset(tgt, (dir / "target.jsonl").string());
            out << "source=" << src.size() << " target=" << tgt.size() << " classes="
                << src.schema.size() << "\n";
            return 0;
        }

        if (validate->parsed()) {
            const std::string path = f.input.value_or(cfg.source);
            if (path.empty() || path == "synth")
                throw ConfigError("validate needs --input pointing at a dataset file");
            LoadResult r = load_dataset(path, detail::schema_from(cfg));
            out << "samples=" << r.dataset.size() << " classes=" << r.dataset.schema.size()
                << " issues=" << r.issues.size() << "\n";
            for (const auto& issue : r.issues)
                out << "line " << issue.line << ": " << issue.message << "\n";
            return r.issues.empty() ? 0 : 1;
        }

        if (featurize->parsed()) {
            auto dir = detail::prepare_out(cfg);
            const std::string spec = f.input.value_or(cfg.source);
            Dataset ds = detail::load_or_synth(cfg, spec, false, err);
            const FeatureKind kind = feature_from_name(cfg.feature);
            BuiltFeatures feats = build_features(ds, kind, cfg.composite);
            write_features_csv(feats, ds, kind, (dir / "features.csv").string());
            write_features_blob(feats, ds, kind, (dir / "features.bin").string());
            out << "features=" << feats.values.size() << " rejected=" << feats.rejected << "\n";
            return 0;
        }

        if (train->parsed()) {
            auto dir = detail::prepare_out(cfg);
            Dataset src = detail::load_or_synth(cfg, cfg.source, false, err);
            ExperimentOptions opts = detail::options_from(cfg);
            const std::uint64_t seed = cfg.seeds.front();

            BuiltFeatures feats = build_features(src, opts.feature, opts.composite);
            if (feats.values.empty()) throw ValidationError("train: no usable samples");
            CropNetConfig mc =
                model_config_for(feats, opts.widths, opts.dropout_p, src.schema.size());
            auto model = build_cropnet<float>(mc, seed);
            model.adam_hp.lr = opts.hyper.lr;

            TrainData<float> data;
            data.count = feats.values.size();
            data.labels = feats.labels;
            data.features = make_feature_provider<float>(src, feats, opts.aug, opts.composite,
                                                         seed, opts.feature);
            auto history = train_cropnet(model, data, opts.hyper, seed,
                                         [&err, seed](int epoch, const EpochStats& st) {
                                             err << "seed " << seed << " epoch " << epoch
                                                 << ": loss=" << st.loss << " acc=" << st.accuracy
                                                 << "\n";
                                         });
            save_checkpoint(model, (dir / "checkpoint.bin").string());
            std::ofstream hist(dir / "history.csv", std::ios::binary);
            hist << "epoch,loss,accuracy\n";
            for (std::size_t e = 0; e < history.size(); ++e)
                hist << e << ',' << report_detail::fmt(history[e].loss) << ','
                     << report_detail::fmt(history[e].accuracy) << "\n";
            out << "checkpoint=" << (dir / "checkpoint.bin").string()
                << " params=" << parameter_count(mc) << " rejected=" << feats.rejected << "\n";
            return 0;
        }

        if (eval->parsed() || transfer->parsed() || sensitivity->parsed() || ablate->parsed()) {
            auto dir = detail::prepare_out(cfg);
            Dataset src = detail::load_or_synth(cfg, cfg.source, false, err);
            ExperimentOptions opts = detail::options_from(cfg);
            opts.progress = &err;

            if (eval->parsed()) {
                EvaluationReport rep = run_in_region<float>(src, cfg.in_region_fraction, opts);
                detail::write_transfer_outputs(rep, cfg, dir);
                out << "oa=" << report_detail::fmt(rep.oa_mean) << "±"
                    << report_detail::fmt(rep.oa_std) << " mf1=" << report_detail::fmt(rep.mf1_mean)
                    << "\n";
                return 0;
            }

            Dataset tgt = detail::load_or_synth(cfg, cfg.target.empty() ? "synth" : cfg.target,
                                                true, err);
            opts.rule = detail::rule_from(cfg, src.schema, tgt.schema);

            if (transfer->parsed()) {
                CropNetModel<float> model;
                EvaluationReport rep = run_transfer<float>(src, tgt, opts, &model);
                detail::write_transfer_outputs(rep, cfg, dir);
                save_checkpoint(model, (dir / "checkpoint.bin").string());
                out << "oa=" << report_detail::fmt(rep.oa_mean) << "±"
                    << report_detail::fmt(rep.oa_std) << " mf1=" << report_detail::fmt(rep.mf1_mean)
                    << "\n";
                return 0;
            }

            if (sensitivity->parsed()) {
                auto rows = run_sensitivity<float>(src, tgt, cfg.windows, cfg.spans, opts);
                write_sensitivity_csv(rows, (dir / "sensitivity.csv").string());
                out << "cells=" << rows.size() << "\n";
                return 0;
            }

            // ablate: none -> +shift -> +shift+scale -> +all
            cfg.aug.validate();
            std::vector<EvaluationReport> reports;
            std::vector<std::string> names;
            for (const auto& rung : ablation_ladder(cfg.aug)) {
                ExperimentOptions ropts = opts;
                ropts.aug = rung.aug;
                reports.push_back(run_transfer<float>(src, tgt, ropts));
                names.push_back(rung.name);
                err << "ablate " << rung.name << ": oa=" << report_detail::fmt(reports.back().oa_mean)
                    << "\n";
            }
            std::ofstream ab(dir / "ablation.csv", std::ios::binary);
            ab << "components,oa_mean,oa_std,mf1_mean,mf1_std\n";
            for (std::size_t i = 0; i < reports.size(); ++i)
                ab << names[i] << ',' << report_detail::fmt(reports[i].oa_mean) << ','
                   << report_detail::fmt(reports[i].oa_std) << ','
                   << report_detail::fmt(reports[i].mf1_mean) << ','
                   << report_detail::fmt(reports[i].mf1_std) << "\n";
            write_summary_csv(reports, names, (dir / "summary.csv").string());
            write_report_json(reports.back(), cfg.name + "/" + names.back(),
                              (dir / "report.json").string());
            out << "rungs=" << reports.size() << "\n";
            return 0;
        }

        if (cam->parsed()) {
            auto dir = detail::prepare_out(cfg);
            const std::string ckpt =
                f.checkpoint.value_or((dir / "checkpoint.bin").string());
            CropNetModel<float> model = load_checkpoint<float>(ckpt);
            const std::string spec = f.input.value_or(cfg.target.empty() ? cfg.source : cfg.target);
            Dataset ds = detail::load_or_synth(cfg, spec, true, err);
            const int max_per = f.max_per_class.value_or(8);
            BuiltFeatures feats = build_features(ds, FeatureKind::Median2D, cfg.composite);
            for (int cls = 0; cls < ds.schema.size(); ++cls) {
                ImportanceMap mean_map;
                int used = 0;
                for (std::size_t i = 0; i < feats.values.size() && used < max_per; ++i) {
                    if (feats.labels[i] != cls) continue;
                    MedianFeature2D fm{feats.values[i],
                                       static_cast<int>(feats.values[i].size()) / kNumBands};
                    ImportanceMap one = grad_cam(model, fm, cls, cam_layer);
                    if (used == 0) {
                        mean_map = one;
                    } else {
                        for (std::size_t k = 0; k < one.values.size(); ++k)
                            mean_map.values[k] += one.values[k];
                    }
                    ++used;
                }
                if (used == 0) continue;
                for (auto& v : mean_map.values) v /= used;
                const double mx = *std::max_element(mean_map.values.begin(), mean_map.values.end());
                if (mx > 0.0)
                    for (auto& v : mean_map.values) v /= mx;
                write_importance_csv(
                    mean_map,
                    (dir / ("cam_" + ds.schema.classes[static_cast<std::size_t>(cls)] + ".csv"))
                        .string());
            }
            out << "maps written to " << dir.string() << "\n";
            return 0;
        }

        err << "error: no subcommand handled\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace cropnet::cli
