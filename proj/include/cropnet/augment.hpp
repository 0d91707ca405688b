#pragma once

#include <cstdint>
#include <vector>

#include "cropnet/composite.hpp"
#include "cropnet/rng.hpp"
#include "cropnet/spline.hpp"
#include "cropnet/types.hpp"

namespace cropnet {

// Training-time transformations: shift the span, rescale it keeping the bin
// count, and warp amplitudes with a random smooth multiplier. Each applies
// independently with apply_prob during training.
struct AugmentationConfig {
    int shift_lo = -10, shift_hi = 10;
    int scale_lo = -30, scale_hi = 10;
    double warp_sigma = 0.2;
    int warp_knots = 5;
    double apply_prob = 0.5;
    // Ablation switches; a disabled transformation never flips its coin.
    bool enable_shift = true;
    bool enable_scale = true;
    bool enable_warp = true;

    void validate() const {
        if (shift_lo > shift_hi || scale_lo > scale_hi)
            throw ValidationError("augment: range lo must be <= hi");
        if (warp_sigma < 0.0) throw ValidationError("augment: warp sigma must be >= 0");
        if (warp_knots < 2) throw ValidationError("augment: need >= 2 warp knots");
        if (apply_prob < 0.0 || apply_prob > 1.0)
            throw ValidationError("augment: apply_prob outside [0,1]");
    }
};

// Stream tags; one independent RNG stream per transformation so draws stay
// reproducible under any scheduling.
namespace aug_tag {
inline constexpr std::uint64_t kShift = 1;
inline constexpr std::uint64_t kScale = 2;
inline constexpr std::uint64_t kWarp = 3;
}  // namespace aug_tag

// Knots kappa_j = 1 + (j-1)(t-1)/(K-1), ordinates ~ Normal(1, sigma^2),
// weights w_i = S(i) for i = 1..t. sigma = 0 makes every weight exactly 1.
struct WarpSpline {
    std::vector<double> knots;
    std::vector<double> ordinates;
    std::vector<double> weights;  // length t
};

inline WarpSpline warp_spline_from_ordinates(int t, std::vector<double> ordinates) {
    const int K = static_cast<int>(ordinates.size());
    if (K < 2) throw ValidationError("warp: need >= 2 knots");
    if (K > t) throw ValidationError("warp: more knots than bins");
    WarpSpline w;
    w.knots.resize(static_cast<std::size_t>(K));
    for (int j = 0; j < K; ++j)
        w.knots[static_cast<std::size_t>(j)] =
            1.0 + static_cast<double>(j) * (t - 1) / (K - 1);
    w.ordinates = std::move(ordinates);
    CubicSpline s(w.knots, w.ordinates);
    w.weights.resize(static_cast<std::size_t>(t));
    for (int i = 1; i <= t; ++i) w.weights[static_cast<std::size_t>(i - 1)] = s(i);
    return w;
}

inline WarpSpline make_warp_spline(int t, int K, double sigma, Rng& rng) {
    std::vector<double> ords(static_cast<std::size_t>(K));
    for (auto& o : ords) o = rng.normal(1.0, sigma);
    if (sigma == 0.0) std::fill(ords.begin(), ords.end(), 1.0);
    return warp_spline_from_ordinates(t, std::move(ords));
}

// Same weights for every band; warped values clamp at 0 to stay physical.
inline MedianFeature2D magnitude_warp(const MedianFeature2D& f, const WarpSpline& w) {
    if (static_cast<int>(w.weights.size()) != f.t)
        throw ValidationError("warp: weight count does not match bin count");
    MedianFeature2D out = f;
    for (int b = 0; b < kNumBands; ++b)
        for (int i = 0; i < f.t; ++i) {
            const double v = f.at(b, i) * w.weights[static_cast<std::size_t>(i)];
            out.at(b, i) = v < 0.0 ? 0.0 : v;
        }
    return out;
}

inline MedianFeature2D magnitude_warp(const MedianFeature2D& f, double sigma, int K, Rng& rng) {
    return magnitude_warp(f, make_warp_spline(f.t, K, sigma, rng));
}

// Recompute medians over [t_s + delta, t_e + delta] with the same window d;
// the span length and hence t are unchanged.
inline MedianFeature1D time_shift(const SpectralTimeSeries& series, const CompositeConfig& base,
                                  int delta) {
    base.validate();
    return compose_median_span(series, base.t_s + delta, base.t_e + delta, base.d,
                               base.bin_count(), base.max_missing_fraction);
}

// Perturb both endpoints, then recompute with t bins of width
// d' = ceil(span'/t); the last bins may overshoot the span and are edge-filled.
inline MedianFeature1D time_scale(const SpectralTimeSeries& series, const CompositeConfig& base,
                                  int delta_s, int delta_e) {
    base.validate();
    const int t_s = base.t_s + delta_s;
    const int t_e = base.t_e + delta_e;
    if (t_s >= t_e) throw ValidationError("time_scale: scaled span is empty");
    const int t = base.bin_count();
    const int d = (t_e - t_s + t - 1) / t;
    return compose_median_span(series, t_s, t_e, d, t, base.max_missing_fraction);
}

// Per-sample stream identity; epoch varies between passes over the data.
struct AugmentStream {
    std::uint64_t seed = 0;
    std::uint64_t sample_hash = 0;
    std::uint64_t epoch = 0;
};

// Three independent coin flips. Shift and scale offsets sum onto the span
// endpoints and the feature is composed once; warping follows on the binned
// values. Deterministic given (seed, sample id, epoch).
inline MedianFeature2D augment(const SpectralTimeSeries& series, const CompositeConfig& base,
                               const AugmentationConfig& cfg, const AugmentStream& stream) {
    base.validate();
    cfg.validate();

    Rng shift_rng = Rng::stream(stream.seed, stream.sample_hash, stream.epoch, aug_tag::kShift);
    Rng scale_rng = Rng::stream(stream.seed, stream.sample_hash, stream.epoch, aug_tag::kScale);
    Rng warp_rng = Rng::stream(stream.seed, stream.sample_hash, stream.epoch, aug_tag::kWarp);

    int t_s = base.t_s, t_e = base.t_e;
    if (cfg.enable_shift && shift_rng.bernoulli(cfg.apply_prob)) {
        const int delta = shift_rng.uniform_int(cfg.shift_lo, cfg.shift_hi);
        t_s += delta;
        t_e += delta;
    }
    bool scaled = false;
    if (cfg.enable_scale && scale_rng.bernoulli(cfg.apply_prob)) {
        scaled = true;
        t_s += scale_rng.uniform_int(cfg.scale_lo, cfg.scale_hi);
        t_e += scale_rng.uniform_int(cfg.scale_lo, cfg.scale_hi);
    }
    if (t_s >= t_e) throw ValidationError("augment: perturbed span is empty");

    const int t = base.bin_count();
    const int d = scaled ? (t_e - t_s + t - 1) / t : base.d;
    MedianFeature2D f =
        reshape_2d(compose_median_span(series, t_s, t_e, d, t, base.max_missing_fraction));

    if (cfg.enable_warp && warp_rng.bernoulli(cfg.apply_prob))
        f = magnitude_warp(f, cfg.warp_sigma, cfg.warp_knots, warp_rng);
    return f;
}

}  // namespace cropnet
