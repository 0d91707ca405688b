#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cropnet/types.hpp"

namespace cropnet {

// Windowed median compositing over [t_s, t_e) in bins of d days.
struct CompositeConfig {
    int t_s = 121;   // start DOY (May 1)
    int t_e = 334;   // end DOY (Nov 30)
    int d = 5;       // window length, days
    double max_missing_fraction = 0.4;

    int bin_count() const { return static_cast<int>((t_e - t_s + d - 1) / d); }

    void validate() const {
        if (t_s >= t_e) throw ValidationError("composite: t_s must be < t_e");
        if (d < 1) throw ValidationError("composite: window d must be >= 1");
        if (bin_count() < 2) throw ValidationError("composite: need at least 2 bins");
        if (max_missing_fraction < 0.0 || max_missing_fraction > 1.0)
            throw ValidationError("composite: max_missing_fraction outside [0,1]");
    }
};

// Band-major: band b occupies positions b*t .. b*t + t-1.
struct MedianFeature1D {
    std::vector<double> values;
    int t = 0;
};

// 10 rows (fixed band order) by t time-bin columns.
struct MedianFeature2D {
    std::vector<double> values;  // row-major
    int t = 0;

    double& at(int band, int bin) { return values[static_cast<std::size_t>(band) * t + bin]; }
    double at(int band, int bin) const {
        return values[static_cast<std::size_t>(band) * t + bin];
    }
};

inline MedianFeature2D reshape_2d(const MedianFeature1D& f) {
    if (f.t < 1 || f.values.size() != static_cast<std::size_t>(kNumBands) * f.t)
        throw ValidationError("reshape_2d: length is not 10*t");
    return MedianFeature2D{f.values, f.t};
}

inline MedianFeature1D flatten(const MedianFeature2D& f) {
    return MedianFeature1D{f.values, f.t};
}

namespace detail {

inline double median_of(std::vector<double>& v) {
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
}

}  // namespace detail

// Core compositor with an explicit bin count, shared by the base feature and
// the time-scale augmentation (which keeps t fixed while d changes). Bins are
// half-open [t_s + i*d, t_s + (i+1)*d); bins that start at or past t_e exist
// only because t*d can overshoot the span, and are treated as trailing edge
// gaps rather than missing data.
inline MedianFeature1D compose_median_span(const SpectralTimeSeries& series, int t_s, int t_e,
                                           int d, int nbins, double max_missing_fraction) {
    if (t_s >= t_e) throw ValidationError("compose: span start must precede end");
    if (d < 1 || nbins < 1) throw ValidationError("compose: bad window/bin count");

    // Observations per bin; a bin is empty for all bands or none.
    std::vector<std::vector<int>> bin_obs(static_cast<std::size_t>(nbins));
    for (std::size_t k = 0; k < series.doys.size(); ++k) {
        const int doy = series.doys[k];
        if (doy < t_s || doy >= t_e) continue;
        const int idx = (doy - t_s) / d;
        if (idx < nbins) bin_obs[static_cast<std::size_t>(idx)].push_back(static_cast<int>(k));
    }

    int overlap = 0;  // bins whose start lies inside the span
    for (int i = 0; i < nbins; ++i)
        if (t_s + i * d < t_e) ++overlap;

    int empty = 0;
    for (int i = 0; i < overlap; ++i)
        if (bin_obs[static_cast<std::size_t>(i)].empty()) ++empty;
    const double empty_fraction =
        overlap > 0 ? static_cast<double>(empty) / overlap : 1.0;
    if (empty == overlap)
        throw RejectionError("compose: all bins empty", 1.0);
    if (empty_fraction > max_missing_fraction)
        throw RejectionError("compose: empty-bin fraction " + std::to_string(empty_fraction) +
                                 " exceeds limit " + std::to_string(max_missing_fraction),
                             empty_fraction);

    MedianFeature1D out;
    out.t = nbins;
    out.values.assign(static_cast<std::size_t>(kNumBands) * nbins, 0.0);

    std::vector<int> filled;  // non-empty bin indices, shared across bands
    filled.reserve(static_cast<std::size_t>(nbins));
    for (int i = 0; i < nbins; ++i)
        if (!bin_obs[static_cast<std::size_t>(i)].empty()) filled.push_back(i);

    std::vector<double> vals;
    for (int b = 0; b < kNumBands; ++b) {
        double* row = out.values.data() + static_cast<std::size_t>(b) * nbins;
        for (int i : filled) {
            vals.clear();
            for (int k : bin_obs[static_cast<std::size_t>(i)])
                vals.push_back(series.refl[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)]);
            row[i] = detail::median_of(vals);
        }
        // Interior gaps: linear interpolation on bin indices. Edge gaps
        // (including bins past the span end) take the nearest filled value;
        // extrapolating can go negative.
        for (std::size_t a = 0; a + 1 < filled.size(); ++a) {
            const int lo = filled[a], hi = filled[a + 1];
            for (int i = lo + 1; i < hi; ++i) {
                const double w = static_cast<double>(i - lo) / (hi - lo);
                row[i] = row[lo] + w * (row[hi] - row[lo]);
            }
        }
        for (int i = 0; i < filled.front(); ++i) row[i] = row[filled.front()];
        for (int i = filled.back() + 1; i < nbins; ++i) row[i] = row[filled.back()];
    }
    return out;
}

inline MedianFeature1D compose_median(const SpectralTimeSeries& series,
                                      const CompositeConfig& cfg) {
    cfg.validate();
    return compose_median_span(series, cfg.t_s, cfg.t_e, cfg.d, cfg.bin_count(),
                               cfg.max_missing_fraction);
}

}  // namespace cropnet
