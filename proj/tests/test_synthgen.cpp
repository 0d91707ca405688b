#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cropnet/bands.hpp"
#include "cropnet/dataset_io.hpp"
#include "cropnet/eval.hpp"
#include "cropnet/synth.hpp"

using namespace cropnet;

namespace {

CropTemplate symmetric_template() {
    CropTemplate t = default_templates()[0];
    t.greenup_doy = 150;
    t.senescence_doy = 250;
    t.growth_rate = 0.12;
    t.decay_rate = 0.12;  // symmetric rates put the peak at the midpoint
    return t;
}

}  // namespace

TEST_CASE("logistic tail vanishes far before green-up") {
    CropTemplate t = symmetric_template();
    RegionConfig r;
    r.class_counts.assign(5, 0);
    CHECK(phenology_curve(t, r, t.greenup_doy - 100) < 1e-3);
}

TEST_CASE("symmetric rates peak at the shifted midpoint") {
    CropTemplate t = symmetric_template();
    RegionConfig r;
    r.phenology_shift = 12.0;
    r.class_counts.assign(5, 0);
    const double mid = 0.5 * (t.greenup_doy + t.senescence_doy) + r.phenology_shift;
    // numeric argmax over a fine grid
    double best_doy = 0.0, best = -1.0;
    for (double doy = 1.0; doy <= 365.0; doy += 0.25) {
        const double f = phenology_curve(t, r, doy);
        if (f > best) {
            best = f;
            best_doy = doy;
        }
    }
    CHECK(std::abs(best_doy - mid) < 1.0);
}

TEST_CASE("zero amplitude scale annihilates the curve") {
    CropTemplate t = symmetric_template();
    RegionConfig r;
    r.amplitude_scale = 0.0;
    r.class_counts.assign(5, 0);
    for (double doy = 1.0; doy <= 365.0; doy += 10.0)
        CHECK(phenology_curve(t, r, doy) == 0.0);
}

TEST_CASE("same seed produces byte-identical dataset files") {
    RegionConfig region;
    region.class_counts = {10, 10, 10, 10, 10};
    region.gap_probability = 0.2;
    region.noise_sigma = 0.02;
    region.jitter_days = 5;
    region.amplitude_jitter = 0.1;
    region.with_hyper = true;
    Dataset a = generate_region(default_templates(), default_synth_schema(), region, 77);
    Dataset b = generate_region(default_templates(), default_synth_schema(), region, 77);
    CHECK(serialize_dataset(a) == serialize_dataset(b));
    Dataset c = generate_region(default_templates(), default_synth_schema(), region, 78);
    CHECK(serialize_dataset(a) != serialize_dataset(c));
}

TEST_CASE("a pure delta shift reproduces the source curve evaluated earlier") {
    RegionConfig src;
    src.class_counts.assign(5, 1);
    RegionConfig tgt = src;
    tgt.phenology_shift = 10.0;
    const CropTemplate t = symmetric_template();
    for (int doy = 60; doy <= 360; doy += 7) {
        const double shifted = phenology_curve(t, tgt, static_cast<double>(doy));
        const double source = phenology_curve(t, src, static_cast<double>(doy - 10));
        CHECK(shifted == doctest::Approx(source).epsilon(1e-12));
    }
}

TEST_CASE("noiseless generation with equal seeds differs only by the shift") {
    RegionConfig src;
    src.class_counts = {3, 3, 3, 3, 3};
    src.noise_sigma = 0.0;
    src.gap_probability = 0.0;
    src.jitter_days = 0;
    src.amplitude_jitter = 0.0;
    RegionConfig tgt = src;
    tgt.phenology_shift = 10.0;
    Dataset a = generate_region(default_templates(), default_synth_schema(), src, 5);
    Dataset b = generate_region(default_templates(), default_synth_schema(), tgt, 5);
    REQUIRE(a.size() == b.size());
    // same seed, same cadence draw: identical DOY grids
    const auto& t = default_templates();
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a.samples[i].series.doys == b.samples[i].series.doys);
        const CropTemplate& tmpl = t[static_cast<std::size_t>(a.samples[i].label)];
        for (std::size_t k = 0; k < a.samples[i].series.doys.size(); ++k) {
            const double doy = a.samples[i].series.doys[k];
            const double f_src = phenology_curve(tmpl, src, doy);
            const double f_tgt = phenology_curve(tmpl, tgt, doy);
            const double f_src_shifted = phenology_curve(tmpl, src, doy - 10.0);
            CHECK(f_tgt == doctest::Approx(f_src_shifted).epsilon(1e-12));
            // and the emitted reflectance mixes exactly those fractions
            const double nir_expected =
                f_tgt * tmpl.veg[band::kNir] + (1.0 - f_tgt) * tmpl.soil[band::kNir];
            CHECK(b.samples[i].series.refl[k][band::kNir] ==
                  doctest::Approx(nir_expected).epsilon(1e-12));
            (void)f_src;
        }
    }
}

TEST_CASE("generated NDVI of a corn-like template peaks near the shifted midpoint") {
    CropTemplate t = symmetric_template();
    RegionConfig region;
    region.phenology_shift = 8.0;
    region.class_counts = {40, 0, 0, 0, 0};
    region.cadence = 3;
    region.noise_sigma = 0.0;
    region.gap_probability = 0.0;
    region.jitter_days = 0;
    region.amplitude_jitter = 0.0;
    Dataset ds = generate_region({t}, default_synth_schema(), region, 9);
    const double mid = 0.5 * (t.greenup_doy + t.senescence_doy) + region.phenology_shift;
    for (const auto& s : ds.samples) {
        double best_ndvi = -2.0;
        int best_doy = 0;
        for (std::size_t k = 0; k < s.series.doys.size(); ++k) {
            const double ndvi = vegetation_index(s.series.refl[k], VegIndex::NDVI);
            if (ndvi > best_ndvi) {
                best_ndvi = ndvi;
                best_doy = s.series.doys[k];
            }
        }
        CHECK(std::abs(best_doy - mid) <= 3.0);
        CHECK(best_ndvi > 0.5);
    }
}

TEST_CASE("reflectance stays within 0 and 1.5 even under heavy noise") {
    RegionConfig region;
    region.class_counts = {30, 30, 30, 30, 30};
    region.noise_sigma = 0.5;
    Dataset ds = generate_region(default_templates(), default_synth_schema(), region, 13);
    for (const auto& s : ds.samples)
        for (const auto& row : s.series.refl)
            for (double v : row) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.5);
            }
}

TEST_CASE("hyperspectral vectors come out 242 long and valid") {
    RegionConfig region;
    region.class_counts = {4, 4, 4, 4, 4};
    region.with_hyper = true;
    Dataset ds = generate_region(default_templates(), default_synth_schema(), region, 3);
    for (const auto& s : ds.samples) {
        REQUIRE(s.hyper.has_value());
        CHECK(s.hyper->size() == 242);
    }
}

namespace {

RegionConfig trend_region(const std::string& name, double shift, int per_class) {
    RegionConfig r;
    r.name = name;
    r.phenology_shift = shift;
    r.cadence = 5;
    r.gap_probability = 0.1;
    r.noise_sigma = 0.012;
    r.jitter_days = 4;
    r.amplitude_jitter = 0.05;
    r.class_counts.assign(5, per_class);
    return r;
}

ExperimentOptions trend_options() {
    ExperimentOptions opts;
    opts.feature = FeatureKind::Median2D;
    opts.composite.d = 15;  // 15 bins keeps each run small
    opts.widths = {16, 32, 64, 128};
    opts.hyper.lr = 1e-3;
    opts.hyper.batch_size = 16;
    opts.hyper.epochs = 8;
    return opts;
}

}  // namespace

TEST_CASE("identical generator laws make transfer match in-region within 2 points") {
    Dataset src = generate_region(default_templates(), default_synth_schema(),
                                  trend_region("src", 0.0, 40), 21);
    Dataset tgt = generate_region(default_templates(), default_synth_schema(),
                                  trend_region("tgt", 0.0, 40), 22);
    ExperimentOptions opts = trend_options();
    auto transfer = run_transfer<float>(src, tgt, opts);
    auto in_region = run_in_region<float>(src, 0.8, opts);
    CHECK(std::abs(transfer.oa_mean - in_region.oa_mean) <= 2.0);
}

TEST_CASE("growing the phenology shift never improves un-augmented transfer") {
    Dataset src = generate_region(default_templates(), default_synth_schema(),
                                  trend_region("src", 0.0, 40), 21);
    ExperimentOptions opts = trend_options();
    std::vector<double> means;
    for (double delta : {0.0, 5.0, 10.0, 15.0}) {
        Dataset tgt = generate_region(default_templates(), default_synth_schema(),
                                      trend_region("tgt", delta, 40), 22);
        means.push_back(run_transfer<float>(src, tgt, opts).oa_mean);
    }
    for (std::size_t i = 1; i < means.size(); ++i) CHECK(means[i] <= means[i - 1]);
}

TEST_CASE("misconfiguration errors") {
    RegionConfig region;
    region.class_counts = {1, 1};  // wrong size for the 5-class schema
    CHECK_THROWS_AS(generate_region(default_templates(), default_synth_schema(), region, 1),
                    ValidationError);
    RegionConfig bad_cadence;
    bad_cadence.class_counts.assign(5, 1);
    bad_cadence.cadence = 0;
    CHECK_THROWS_AS(generate_region(default_templates(), default_synth_schema(), bad_cadence, 1),
                    ValidationError);
}
