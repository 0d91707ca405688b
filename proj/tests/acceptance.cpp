#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "cropnet/cli.hpp"
#include "cropnet/eval.hpp"
#include "cropnet/gradcheck.hpp"
#include "cropnet/reporting.hpp"
#include "cropnet/synth.hpp"
#include "test_support.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

using namespace cropnet;
using namespace testsupport;

namespace {

void report(int criterion, const char* name, bool ok, const std::string& details) {
    std::printf("[acceptance] criterion %02d %-24s %s  (%s)\n", criterion, name,
                ok ? "PASS" : "FAIL", details.c_str());
    std::fflush(stdout);
    CHECK(ok);
}

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

void use_threads(int n) {
#if defined(_OPENMP)
    omp_set_num_threads(n);
#else
    (void)n;
#endif
}

// Desk-scale domains: phenologically staggered classes; the target differs by
// a phenology shift and an amplitude scale.
RegionConfig desk_region(const std::string& name, double shift, double amplitude,
                         int jitter_days, double amp_jitter, int per_class) {
    RegionConfig r;
    r.name = name;
    r.phenology_shift = shift;
    r.amplitude_scale = amplitude;
    r.cadence = 5;
    r.gap_probability = 0.12;
    r.noise_sigma = 0.012;
    r.jitter_days = jitter_days;
    r.amplitude_jitter = amp_jitter;
    r.class_counts.assign(5, per_class);
    return r;
}

ExperimentOptions desk_options(FeatureKind kind, int epochs) {
    ExperimentOptions opts;
    opts.feature = kind;
    opts.composite = CompositeConfig{};  // 121..334, d = 5
    opts.widths = {16, 32, 64, 128};
    opts.dropout_p = 0.1;
    opts.hyper.lr = 1e-3;
    opts.hyper.batch_size = 16;
    opts.hyper.epochs = epochs;
    opts.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    return opts;
}

}  // namespace

TEST_CASE("criterion 01 parameter-budget") {
    CropNetConfig cfg;  // defaults: 2D, widths 64/128/256/512, 7 classes
    const std::size_t count = parameter_count(cfg);
    report(1, "parameter-budget", count == 4691655u, "count=" + std::to_string(count));
}

TEST_CASE("criterion 02 gradient-correctness") {
    use_threads(1);
    double worst_layer = 0.0;
    worst_layer = std::max(worst_layer, gradient_check_conv(2, 2, 3, 4, 4, 3, 1, 11));
    worst_layer = std::max(worst_layer, gradient_check_conv(1, 2, 2, 5, 4, 3, 2, 12));
    worst_layer = std::max(worst_layer, gradient_check_conv(2, 1, 3, 9, 1, 1, 1, 13));
    worst_layer = std::max(worst_layer, gradient_check_conv(1, 2, 2, 8, 1, 1, 2, 14));
    worst_layer = std::max(worst_layer, gradient_check_batchnorm(3, 2, 4, 3, 21));
    worst_layer = std::max(worst_layer, gradient_check_linear(3, 6, 4, 31));
    worst_layer = std::max(worst_layer, gradient_check_softmax(4, 7, 32));
    worst_layer = std::max(worst_layer, gradient_check_conv_bn_relu(2, 2, 3, 4, 4, 41));

    CropNetConfig tiny;
    tiny.widths = {2, 3, 4, 5};
    tiny.n_classes = 3;
    tiny.input_h = 10;
    tiny.input_w = 8;
    const double full = gradient_check_cropnet(tiny, 2, 51);

    char detail[128];
    std::snprintf(detail, sizeof(detail), "worst layer=%.2e, full model=%.2e", worst_layer, full);
    report(2, "gradient-correctness", worst_layer < 1e-6 && full < 1e-5, detail);
}

TEST_CASE("criterion 03 compositor-oracle") {
    Rng rng = Rng::stream(2024);
    int rejections = 0, accepted = 0, mismatches = 0;
    for (int round = 0; round < 1000; ++round) {
        SpectralTimeSeries s =
            round % 3 == 0 ? random_series(rng, 3, 45) : random_series(rng, 45, 130);
        CompositeConfig cfg;
        OracleResult expect =
            oracle_compose(s, cfg.t_s, cfg.t_e, cfg.d, cfg.bin_count(), cfg.max_missing_fraction);
        if (expect.rejected) {
            ++rejections;
            try {
                compose_median(s, cfg);
                ++mismatches;
            } catch (const RejectionError&) {
            }
        } else {
            ++accepted;
            auto f = compose_median(s, cfg);
            for (std::size_t i = 0; i < f.values.size(); ++i)
                if (f.values[i] != expect.values[i]) ++mismatches;
        }
    }
    const bool coverage = rejections > 50 && accepted > 400;
    report(3, "compositor-oracle", mismatches == 0 && coverage,
           "mismatches=" + std::to_string(mismatches) + ", accepted=" + std::to_string(accepted) +
               ", rejected=" + std::to_string(rejections));
}

TEST_CASE("criterion 04 harmonic-recovery") {
    CompositeConfig cfg;
    const double period = cfg.t_e - cfg.t_s;
    Rng rng = Rng::stream(31);
    double worst = 0.0;
    bool all_35 = true;
    for (int trial = 0; trial < 20; ++trial) {
        std::set<int> pool;
        while (pool.size() < 40) pool.insert(rng.uniform_int(cfg.t_s, cfg.t_e));
        std::vector<int> doys(pool.begin(), pool.end());
        std::array<double, 7> planted{};
        planted[0] = 0.2 + 0.2 * rng.uniform();
        for (int k = 1; k < 7; ++k) planted[static_cast<std::size_t>(k)] = 0.08 * (rng.uniform() - 0.5);
        SpectralTimeSeries s;
        for (int doy : doys) {
            const double tau = doy - cfg.t_s;
            double v = planted[0];
            for (int k = 1; k <= 3; ++k) {
                v += planted[static_cast<std::size_t>(2 * k - 1)] * std::sin(2 * M_PI * k * tau / period);
                v += planted[static_cast<std::size_t>(2 * k)] * std::cos(2 * M_PI * k * tau / period);
            }
            std::array<double, 10> r{};
            r.fill(std::min(1.5, std::max(0.0, v)));
            r[band::kGreen] = 0.5;
            s.doys.push_back(doy);
            s.refl.push_back(r);
        }
        auto h = harmonic_features(s, cfg);
        all_35 = all_35 && h.coeffs.size() == 35;
        for (int k = 0; k < 7; ++k)
            worst = std::max(worst, std::abs(h.coeffs[static_cast<std::size_t>(k)] -
                                             planted[static_cast<std::size_t>(k)]));
    }
    char detail[96];
    std::snprintf(detail, sizeof(detail), "worst coefficient error=%.2e, length-35=%s", worst,
                  all_35 ? "yes" : "no");
    report(4, "harmonic-recovery", worst < 1e-8 && all_35, detail);
}

TEST_CASE("criterion 05 augmentation-identities") {
    // dense series so every recomposition succeeds
    Rng gen = Rng::stream(99);
    SpectralTimeSeries s;
    for (int doy = 2; doy <= 365; doy += 3) {
        std::array<double, 10> r{};
        for (auto& v : r) v = 0.1 + 0.8 * gen.uniform();
        s.doys.push_back(doy);
        s.refl.push_back(r);
    }
    CompositeConfig cfg;
    auto base = compose_median(s, cfg);

    const bool shift_id = time_shift(s, cfg, 0).values == base.values;
    const bool scale_id = time_scale(s, cfg, 0, 0).values == base.values;
    Rng wrng = Rng::stream(100);
    const bool warp_id =
        magnitude_warp(reshape_2d(base), 0.0, 5, wrng).values == reshape_2d(base).values;

    AugmentationConfig aug;
    std::set<int> shift_support, scale_support;
    Rng draw = Rng::stream(101);
    for (int i = 0; i < 100000; ++i) {
        shift_support.insert(draw.uniform_int(aug.shift_lo, aug.shift_hi));
        scale_support.insert(draw.uniform_int(aug.scale_lo, aug.scale_hi));
    }
    const bool supports = shift_support.size() == 21 && *shift_support.begin() == -10 &&
                          *shift_support.rbegin() == 10 && scale_support.size() == 41 &&
                          *scale_support.begin() == -30 && *scale_support.rbegin() == 10;

    int warp_applied = 0;
    const int rounds = 10000;
    for (int epoch = 0; epoch < rounds; ++epoch) {
        Rng warp_rng = Rng::stream(7, 555, static_cast<std::uint64_t>(epoch), aug_tag::kWarp);
        warp_applied += warp_rng.bernoulli(aug.apply_prob) ? 1 : 0;
    }
    const double freq = warp_applied / static_cast<double>(rounds);
    const bool freq_ok = freq >= 0.48 && freq <= 0.52;

    char detail[128];
    std::snprintf(detail, sizeof(detail),
                  "identities=%s/%s/%s, supports=%s, warp freq=%.3f",
                  shift_id ? "shift" : "SHIFT-FAIL", scale_id ? "scale" : "SCALE-FAIL",
                  warp_id ? "warp" : "WARP-FAIL", supports ? "exact" : "WRONG", freq);
    report(5, "augmentation-identities", shift_id && scale_id && warp_id && supports && freq_ok,
           detail);
}

TEST_CASE("criterion 06 shape-trace") {
    CropNetConfig cfg;
    auto trace = cropnet_shape_trace(cfg);
    const bool plan = trace[0] == std::pair{10, 43} && trace[2] == std::pair{5, 22} &&
                      trace[4] == std::pair{5, 22} && trace[6] == std::pair{3, 11} &&
                      trace[8] == std::pair{3, 11};

    CropNetConfig small = cfg;
    small.widths = {4, 4, 4, 4};
    auto m = build_cropnet<float>(small, 1);
    ForwardCache<float> cache;
    ForwardOpts opts;
    cropnet_forward(m, Array4<float>(1, 1, 10, 43), opts, &cache);
    const bool live = cache.features.h == 3 && cache.features.w == 11;
    report(6, "shape-trace", plan && live,
           "10x43 -> 5x22 -> 3x11 -> GAP, live feature map " +
               std::to_string(cache.features.h) + "x" + std::to_string(cache.features.w));
}

TEST_CASE("criterion 07 transfer-ordering") {
    use_threads(2);
    Dataset source = generate_region(default_templates(), default_synth_schema(),
                                     desk_region("source", 0.0, 1.0, 8, 0.05, 60), 42);
    Dataset target = generate_region(default_templates(), default_synth_schema(),
                                     desk_region("target", 10.0, 0.9, 8, 0.05, 60), 43);

    auto rep2d = run_transfer<float>(source, target, desk_options(FeatureKind::Median2D, 10));
    auto rep1d = run_transfer<float>(source, target, desk_options(FeatureKind::Median1D, 10));
    auto repha = run_transfer<float>(source, target, desk_options(FeatureKind::Harmonic, 10));

    int ordered_seeds = 0;
    for (std::size_t i = 0; i < rep2d.per_seed.size(); ++i)
        if (rep2d.per_seed[i].oa > rep1d.per_seed[i].oa &&
            rep1d.per_seed[i].oa > repha.per_seed[i].oa)
            ++ordered_seeds;

    const double gap21 = rep2d.oa_mean - rep1d.oa_mean;
    const double gap1h = rep1d.oa_mean - repha.oa_mean;
    const bool ok = gap21 >= 2.0 && gap1h >= 2.0 && ordered_seeds >= 8;
    report(7, "transfer-ordering", ok,
           "OA 2D=" + fmt2(rep2d.oa_mean) + " 1D=" + fmt2(rep1d.oa_mean) + " harm=" +
               fmt2(repha.oa_mean) + ", ordered seeds=" + std::to_string(ordered_seeds) + "/10");
}

TEST_CASE("criterion 08 augmentation-gain") {
    use_threads(2);
    // single sub-population in the source (no within-region diversity at
    // all), strongly shifted and amplitude-perturbed target
    Dataset source = generate_region(default_templates(), default_synth_schema(),
                                     desk_region("source", 0.0, 1.0, 0, 0.0, 60), 42);
    Dataset target = generate_region(default_templates(), default_synth_schema(),
                                     desk_region("target", 15.0, 0.9, 8, 0.18, 60), 43);

    AugmentationConfig full;
    std::vector<double> means;
    std::string detail;
    for (const auto& rung : ablation_ladder(full)) {
        ExperimentOptions opts = desk_options(FeatureKind::Median2D, 10);
        opts.aug = rung.aug;
        auto rep = run_transfer<float>(source, target, opts);
        means.push_back(rep.oa_mean);
        detail += rung.name + "=" + fmt2(rep.oa_mean) + " ";
    }
    const double gain = means.back() - means.front();
    bool monotone = true;
    for (std::size_t i = 1; i < means.size(); ++i) monotone = monotone && means[i] >= means[i - 1];
    report(8, "augmentation-gain", gain >= 3.0 && monotone,
           detail + "gain=" + fmt2(gain) + (monotone ? ", ladder monotone" : ", LADDER INVERTED"));
}

TEST_CASE("criterion 09 sensitivity-direction") {
    use_threads(2);
    Dataset source = generate_region(default_templates(), default_synth_schema(),
                                     desk_region("source", 0.0, 1.0, 8, 0.05, 60), 42);
    Dataset target = generate_region(default_templates(), default_synth_schema(),
                                     desk_region("target", 10.0, 0.9, 8, 0.05, 60), 43);
    auto rows = run_sensitivity<float>(source, target, {5, 30}, {{121, 334}},
                                       desk_options(FeatureKind::Median2D, 10));
    const double oa5 = rows[0].oa_mean, oa30 = rows[1].oa_mean;
    report(9, "sensitivity-direction", oa5 >= oa30,
           "OA d=5: " + fmt2(oa5) + ", d=30: " + fmt2(oa30));
}

TEST_CASE("criterion 10 metrics-exactness") {
    // hand-constructed confusion matrices
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 1;
    cm.at(0, 1) = 1;
    cm.at(1, 1) = 1;
    auto ms = metrics(cm);
    const bool hand = std::abs(ms.oa - 200.0 / 3.0) < 1e-9 &&
                      std::abs(ms.mf1 - 200.0 / 3.0) < 1e-9 &&
                      std::abs(ms.per_class_f1[0] - 200.0 / 3.0) < 1e-9;

    ConfusionMatrix diag(3);
    diag.at(0, 0) = 4;
    diag.at(1, 1) = 2;
    diag.at(2, 2) = 9;
    auto msd = metrics(diag);
    const bool perfect = std::abs(msd.oa - 100.0) < 1e-9 && std::abs(msd.mf1 - 100.0) < 1e-9;

    // soybean predicted in a binary-target region scores as Other
    LabelSchema usa =
        make_schema({"corn", "soybeans", "rice", "wheat", "sugarcane", "cotton", "Other"});
    LabelSchema aus = make_schema({"sugarcane", "cotton", "Other"});
    ClassAlignmentRule reassign;
    reassign.mode = ClassAlignmentRule::Mode::reassign_to_other;
    reassign.affected = {0, 1, 2, 3};
    auto aligned = align_predictions({usa.index_of("soybeans")}, usa, aus, reassign);
    const bool soy_to_other = aligned == std::vector<int>{aus.other_index};

    // drop-classes exclusion count equals the ground-truth count of the classes
    ClassAlignmentRule drop;
    drop.mode = ClassAlignmentRule::Mode::drop_classes;
    drop.affected = {usa.index_of("sugarcane"), usa.index_of("cotton")};
    Rng rng = Rng::stream(8);
    std::vector<int> truth(1000);
    std::size_t expect = 0;
    for (auto& v : truth) {
        v = rng.uniform_int(0, usa.size() - 1);
        if (drop.affected.count(v)) ++expect;
    }
    auto mask = excluded_truth_mask(truth, usa, drop);
    std::size_t got = 0;
    for (bool b : mask) got += b ? 1 : 0;

    report(10, "metrics-exactness", hand && perfect && soy_to_other && got == expect,
           "hand OA/mF1 ok=" + std::string(hand && perfect ? "yes" : "no") +
               ", soybean->Other=" + (soy_to_other ? "yes" : "no") + ", excluded " +
               std::to_string(got) + "/" + std::to_string(expect));
}

TEST_CASE("criterion 11 reproducibility") {
    use_threads(1);
    Dataset source = generate_region(default_templates(), default_synth_schema(),
                                     desk_region("source", 0.0, 1.0, 4, 0.05, 16), 7);
    Dataset target = generate_region(default_templates(), default_synth_schema(),
                                     desk_region("target", 8.0, 0.95, 4, 0.05, 16), 8);
    ExperimentOptions opts = desk_options(FeatureKind::Median2D, 2);
    opts.widths = {4, 4, 4, 4};
    opts.composite.d = 15;
    opts.seeds = {5};

    auto dir = std::filesystem::temp_directory_path() / "cropnet_acceptance_repro";
    std::filesystem::create_directories(dir);

    auto run_once = [&](const std::string& tag) {
        CropNetModel<float> model;
        EvaluationReport rep = run_transfer<float>(source, target, opts, &model);
        save_checkpoint(model, (dir / ("ckpt_" + tag + ".bin")).string());
        BuiltFeatures tgt_feats = build_features(target, opts.feature, opts.composite);
        Array4<float> batch(static_cast<int>(tgt_feats.values.size()), 1, tgt_feats.h, tgt_feats.w);
        for (std::size_t i = 0; i < tgt_feats.values.size(); ++i)
            for (std::size_t k = 0; k < tgt_feats.values[i].size(); ++k)
                batch.plane(static_cast<int>(i), 0)[k] =
                    static_cast<float>(tgt_feats.values[i][k]);
        auto probs = predict(model, batch);
        return std::tuple{report_to_json(rep, "repro").dump(), probs.v};
    };

    auto [rep_a, probs_a] = run_once("a");
    auto [rep_b, probs_b] = run_once("b");

    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    const bool ckpt_same = slurp(dir / "ckpt_a.bin") == slurp(dir / "ckpt_b.bin");
    const bool rep_same = rep_a == rep_b;
    const bool probs_same = probs_a == probs_b;

    // checkpoint round trip preserves predictions bitwise
    auto loaded = load_checkpoint<float>((dir / "ckpt_a.bin").string());
    BuiltFeatures tgt_feats = build_features(target, opts.feature, opts.composite);
    Array4<float> batch(static_cast<int>(tgt_feats.values.size()), 1, tgt_feats.h, tgt_feats.w);
    for (std::size_t i = 0; i < tgt_feats.values.size(); ++i)
        for (std::size_t k = 0; k < tgt_feats.values[i].size(); ++k)
            batch.plane(static_cast<int>(i), 0)[k] = static_cast<float>(tgt_feats.values[i][k]);
    const bool roundtrip = predict(loaded, batch).v == probs_a;

    report(11, "reproducibility", ckpt_same && rep_same && probs_same && roundtrip,
           std::string("checkpoints=") + (ckpt_same ? "same" : "DIFFER") + ", reports=" +
               (rep_same ? "same" : "DIFFER") + ", predictions=" + (probs_same ? "same" : "DIFFER") +
               ", reload=" + (roundtrip ? "bitwise" : "DIFFER"));
}

TEST_CASE("criterion 12 in-region-sanity") {
    use_threads(2);
    Dataset ds = generate_region(default_templates(), default_synth_schema(),
                                 desk_region("region", 0.0, 1.0, 8, 0.05, 60), 42);
    ExperimentOptions opts = desk_options(FeatureKind::Median2D, 8);
    auto rep = run_in_region<float>(ds, 0.8, opts);
    report(12, "in-region-sanity", rep.oa_mean >= 95.0,
           "mean OA=" + fmt2(rep.oa_mean) + " ± " + fmt2(rep.oa_std) + " over 10 seeds");
}
