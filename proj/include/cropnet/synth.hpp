#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cropnet/bands.hpp"
#include "cropnet/rng.hpp"
#include "cropnet/types.hpp"

namespace cropnet {

// Test fixture, not a claim about real crops: double-logistic canopy curves
// mixed between vegetation and soil endmembers, with region-level phenology
// shift and amplitude scaling as the domain-shift knobs.

struct CropTemplate {
    int label = 0;
    double greenup_doy = 150.0;      // g
    double senescence_doy = 260.0;   // s
    double growth_rate = 0.10;       // 1/days
    double decay_rate = 0.10;
    double peak_fraction = 0.9;      // A in (0, 1]
    std::array<double, 10> veg{};    // vegetation endmember
    std::array<double, 10> soil{};   // soil endmember

    void validate() const {
        if (greenup_doy >= senescence_doy)
            throw ValidationError("template: green-up must precede senescence");
        if (peak_fraction <= 0.0 || peak_fraction > 1.0)
            throw ValidationError("template: peak fraction outside (0,1]");
        for (double v : veg)
            if (v < 0.0 || v > 1.0) throw ValidationError("template: endmember outside [0,1]");
        for (double v : soil)
            if (v < 0.0 || v > 1.0) throw ValidationError("template: endmember outside [0,1]");
    }
};

struct RegionConfig {
    std::string name = "region";
    double phenology_shift = 0.0;   // delta, days; applied to g and s
    double amplitude_scale = 1.0;   // lambda
    int cadence = 5;                // mean days between cloud-free observations
    double gap_probability = 0.0;
    double noise_sigma = 0.0;       // reflectance units
    std::vector<int> class_counts;  // per schema class
    // Within-region diversity; zero jitter makes every sample of a class an
    // identical sub-population up to noise. Length jitter stretches or
    // shrinks the growing season by moving senescence only.
    int jitter_days = 0;
    double amplitude_jitter = 0.0;
    int length_jitter_days = 0;
    bool with_hyper = false;

    void validate() const {
        if (cadence < 1) throw ValidationError("region: cadence must be >= 1 day");
        if (gap_probability < 0.0 || gap_probability > 1.0)
            throw ValidationError("region: gap probability outside [0,1]");
        if (noise_sigma < 0.0) throw ValidationError("region: noise sigma must be >= 0");
        if (amplitude_jitter < 0.0 || jitter_days < 0 || length_jitter_days < 0)
            throw ValidationError("region: jitter must be >= 0");
    }
};

// f(doy) = lambda * A * [logistic(r1(doy-(g+delta))) - logistic(r2(doy-(s+delta)))],
// clamped to [0, 1].
inline double phenology_curve(const CropTemplate& tmpl, const RegionConfig& region, double doy) {
    const double g = tmpl.greenup_doy + region.phenology_shift;
    const double s = tmpl.senescence_doy + region.phenology_shift;
    const double up = 1.0 / (1.0 + std::exp(-tmpl.growth_rate * (doy - g)));
    const double down = 1.0 / (1.0 + std::exp(-tmpl.decay_rate * (doy - s)));
    const double f = region.amplitude_scale * tmpl.peak_fraction * (up - down);
    return std::min(1.0, std::max(0.0, f));
}

namespace synth_tag {
inline constexpr std::uint64_t kDoys = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kJitter = 3;
inline constexpr std::uint64_t kHyper = 4;
}  // namespace synth_tag

namespace detail {

inline double clamp_reflectance(double v) { return std::min(1.5, std::max(0.0, v)); }

// Hyperspectral stand-in: 242 waveband reflectances interpolated across the
// ten endmember anchors at a fixed mid-season date.
inline std::vector<double> synth_hyper(const CropTemplate& tmpl, double f, double noise_sigma,
                                       Rng& rng) {
    std::vector<double> out(242);
    for (int i = 0; i < 242; ++i) {
        const double pos = static_cast<double>(i) * (kNumBands - 1) / 241.0;
        const int b0 = static_cast<int>(pos);
        const int b1 = std::min(b0 + 1, kNumBands - 1);
        const double w = pos - b0;
        const double veg = (1.0 - w) * tmpl.veg[static_cast<std::size_t>(b0)] +
                           w * tmpl.veg[static_cast<std::size_t>(b1)];
        const double soil = (1.0 - w) * tmpl.soil[static_cast<std::size_t>(b0)] +
                            w * tmpl.soil[static_cast<std::size_t>(b1)];
        out[static_cast<std::size_t>(i)] =
            clamp_reflectance(f * veg + (1.0 - f) * soil + rng.normal(0.0, noise_sigma));
    }
    return out;
}

}  // namespace detail

// Deterministic per (seed, sample index); samples are emitted in index order
// grouped by class.
inline Dataset generate_region(const std::vector<CropTemplate>& templates,
                               const LabelSchema& schema, const RegionConfig& region,
                               std::uint64_t seed) {
    schema.validate();
    region.validate();
    if (region.class_counts.size() != static_cast<std::size_t>(schema.size()))
        throw ValidationError("region: class_counts must match schema size");
    for (int c : region.class_counts)
        if (c < 0) throw ValidationError("region: negative class count");
    std::vector<const CropTemplate*> by_label(static_cast<std::size_t>(schema.size()), nullptr);
    for (const auto& t : templates) {
        t.validate();
        if (t.label < 0 || t.label >= schema.size())
            throw ValidationError("template label outside schema");
        by_label[static_cast<std::size_t>(t.label)] = &t;
    }

    Dataset ds;
    ds.schema = schema;
    ds.region = region.name;
    std::uint64_t sample_index = 0;
    for (int cls = 0; cls < schema.size(); ++cls) {
        const int count = region.class_counts[static_cast<std::size_t>(cls)];
        if (count == 0) continue;
        const CropTemplate* tmpl = by_label[static_cast<std::size_t>(cls)];
        if (!tmpl)
            throw ValidationError("no template for class '" +
                                  schema.classes[static_cast<std::size_t>(cls)] + "'");
        for (int i = 0; i < count; ++i, ++sample_index) {
            Rng doy_rng = Rng::stream(seed, sample_index, synth_tag::kDoys);
            Rng noise_rng = Rng::stream(seed, sample_index, synth_tag::kNoise);
            Rng jitter_rng = Rng::stream(seed, sample_index, synth_tag::kJitter);

            CropTemplate local = *tmpl;
            if (region.jitter_days > 0) {
                const int u = jitter_rng.uniform_int(-region.jitter_days, region.jitter_days);
                local.greenup_doy += u;
                local.senescence_doy += u;
            }
            if (region.length_jitter_days > 0) {
                const int v = jitter_rng.uniform_int(-region.length_jitter_days,
                                                     region.length_jitter_days);
                local.senescence_doy =
                    std::max(local.greenup_doy + 10.0, local.senescence_doy + v);
            }
            double amp = 1.0;
            if (region.amplitude_jitter > 0.0)
                amp = 1.0 + region.amplitude_jitter * (2.0 * jitter_rng.uniform() - 1.0);

            Sample s;
            s.id = region.name + "-" + std::to_string(sample_index);
            s.country = region.name;
            s.label = cls;
            s.lon = -120.0 + 0.01 * static_cast<double>(sample_index % 1000);
            s.lat = 30.0 + 0.01 * static_cast<double>(sample_index / 1000);

            const int start = doy_rng.uniform_int(1, region.cadence);
            std::vector<int> grid;
            for (int doy = start; doy <= 365; doy += region.cadence) grid.push_back(doy);
            std::vector<int> kept;
            for (int doy : grid)
                if (region.gap_probability == 0.0 || !doy_rng.bernoulli(region.gap_probability))
                    kept.push_back(doy);
            if (kept.size() < 4) kept = grid;  // degenerate gap draw; keep the full grid

            for (int doy : kept) {
                const double f =
                    std::min(1.0, amp * phenology_curve(local, region, static_cast<double>(doy)));
                std::array<double, 10> refl{};
                for (int b = 0; b < kNumBands; ++b) {
                    double v = f * local.veg[static_cast<std::size_t>(b)] +
                               (1.0 - f) * local.soil[static_cast<std::size_t>(b)];
                    if (region.noise_sigma > 0.0) v += noise_rng.normal(0.0, region.noise_sigma);
                    refl[static_cast<std::size_t>(b)] = detail::clamp_reflectance(v);
                }
                s.series.doys.push_back(doy);
                s.series.refl.push_back(refl);
            }

            if (region.with_hyper) {
                Rng hyper_rng = Rng::stream(seed, sample_index, synth_tag::kHyper);
                const double mid = 0.5 * (local.greenup_doy + local.senescence_doy) +
                                   region.phenology_shift;
                const double f = std::min(1.0, amp * phenology_curve(local, region, mid));
                s.hyper = detail::synth_hyper(local, f, region.noise_sigma, hyper_rng);
            }

            s.validate(schema);
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

// Five-class fixture: staggered seasons with small spectral offsets so classes
// are separable in-region but confusable once phenology shifts.
inline std::vector<CropTemplate> default_templates() {
    const std::array<double, 10> soil = {0.10, 0.12, 0.14, 0.18, 0.15,
                                         0.16, 0.17, 0.18, 0.28, 0.24};
    const std::array<double, 10> veg_base = {0.04, 0.07, 0.04, 0.48, 0.12,
                                             0.30, 0.42, 0.50, 0.22, 0.12};
    std::vector<CropTemplate> t(5);

    t[0].label = 0;  // corn-like
    t[0].greenup_doy = 152;
    t[0].senescence_doy = 258;
    t[0].growth_rate = 0.12;
    t[0].decay_rate = 0.10;
    t[0].peak_fraction = 0.95;
    t[0].veg = veg_base;
    t[0].soil = soil;

    // soybean-like: 15 days later than corn, separated spectrally only in the
    // red-edge bands, which the harmonic series (B8A/B11/B12/B8/GCVI) never
    // sees; under a phenology shift the timing aliases onto corn
    t[1] = t[0];
    t[1].label = 1;
    t[1].greenup_doy = 167;
    t[1].senescence_doy = 272;
    t[1].growth_rate = 0.10;
    t[1].decay_rate = 0.12;
    t[1].peak_fraction = 0.90;
    t[1].veg[band::kRedEdge1] = 0.17;
    t[1].veg[band::kRedEdge2] = 0.36;
    t[1].veg[band::kRedEdge3] = 0.48;

    t[2] = t[0];  // rice-like: long flooded season, softly depressed SWIR background
    t[2].label = 2;
    t[2].greenup_doy = 145;
    t[2].senescence_doy = 285;
    t[2].growth_rate = 0.08;
    t[2].decay_rate = 0.09;
    t[2].peak_fraction = 0.85;
    t[2].soil[band::kRedEdge1] = 0.12;
    t[2].soil[band::kRedEdge2] = 0.13;
    t[2].soil[band::kRedEdge3] = 0.14;
    t[2].veg[band::kRedEdge2] = 0.27;

    t[3] = t[0];  // wheat-like: early season, decline visible through mid-span
    t[3].label = 3;
    t[3].greenup_doy = 108;
    t[3].senescence_doy = 205;
    t[3].growth_rate = 0.11;
    t[3].decay_rate = 0.13;
    t[3].peak_fraction = 0.92;
    t[3].veg[band::kRedEdge1] = 0.15;
    t[3].veg[band::kBlue] = 0.06;

    t[4] = t[0];  // Other: broad, low-amplitude grassy cover, muted red edge
    t[4].label = 4;
    t[4].greenup_doy = 120;
    t[4].senescence_doy = 320;
    t[4].growth_rate = 0.05;
    t[4].decay_rate = 0.05;
    t[4].peak_fraction = 0.55;
    t[4].veg[band::kNir] = 0.40;
    t[4].veg[band::kRed] = 0.07;
    t[4].veg[band::kRedEdge1] = 0.11;
    t[4].veg[band::kRedEdge2] = 0.26;
    t[4].veg[band::kRedEdge3] = 0.36;

    return t;
}

inline LabelSchema default_synth_schema() {
    return make_schema({"corn", "soybeans", "rice", "wheat", "Other"});
}

}  // namespace cropnet
