#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "cropnet/composite.hpp"
#include "cropnet/types.hpp"

namespace cropnet {

// 35 coefficients: for each of the five series (Narrow NIR, SWIR 1, SWIR 2,
// NIR, GCVI), the intercept plus three sine/cosine pairs
// [c0, a1, b1, a2, b2, a3, b3].
struct HarmonicFeature {
    std::vector<double> coeffs;  // length 35
};

inline constexpr int kHarmonicOrder = 3;
inline constexpr int kCoeffsPerSeries = 2 * kHarmonicOrder + 1;
inline constexpr int kHarmonicSeriesCount = 5;
inline constexpr int kHarmonicFeatureLength = kHarmonicSeriesCount * kCoeffsPerSeries;

namespace detail {

// Householder QR least squares; solves min ||A x - y|| for a thin n x m
// system. A is overwritten.
inline std::vector<double> qr_least_squares(std::vector<double>& a, std::vector<double>& y,
                                            int n, int m) {
    for (int k = 0; k < m; ++k) {
        double norm = 0.0;
        for (int i = k; i < n; ++i) norm += a[static_cast<std::size_t>(i) * m + k] * a[static_cast<std::size_t>(i) * m + k];
        norm = std::sqrt(norm);
        if (norm < 1e-12)
            throw SingularFitError("harmonic fit: rank-deficient design matrix");
        double akk = a[static_cast<std::size_t>(k) * m + k];
        const double alpha = akk > 0 ? -norm : norm;
        // Householder vector v, stored in-place below the diagonal.
        double vk = akk - alpha;
        a[static_cast<std::size_t>(k) * m + k] = alpha;
        double vnorm2 = vk * vk;
        for (int i = k + 1; i < n; ++i) {
            const double v = a[static_cast<std::size_t>(i) * m + k];
            vnorm2 += v * v;
        }
        if (vnorm2 < 1e-300)
            continue;  // column already triangular
        for (int j = k + 1; j < m; ++j) {
            double dot = vk * a[static_cast<std::size_t>(k) * m + j];
            for (int i = k + 1; i < n; ++i)
                dot += a[static_cast<std::size_t>(i) * m + k] * a[static_cast<std::size_t>(i) * m + j];
            const double f = 2.0 * dot / vnorm2;
            a[static_cast<std::size_t>(k) * m + j] -= f * vk;
            for (int i = k + 1; i < n; ++i)
                a[static_cast<std::size_t>(i) * m + j] -= f * a[static_cast<std::size_t>(i) * m + k];
        }
        double dot = vk * y[static_cast<std::size_t>(k)];
        for (int i = k + 1; i < n; ++i) dot += a[static_cast<std::size_t>(i) * m + k] * y[static_cast<std::size_t>(i)];
        const double f = 2.0 * dot / vnorm2;
        y[static_cast<std::size_t>(k)] -= f * vk;
        for (int i = k + 1; i < n; ++i) y[static_cast<std::size_t>(i)] -= f * a[static_cast<std::size_t>(i) * m + k];
    }
    std::vector<double> x(static_cast<std::size_t>(m));
    for (int k = m - 1; k >= 0; --k) {
        double s = y[static_cast<std::size_t>(k)];
        for (int j = k + 1; j < m; ++j) s -= a[static_cast<std::size_t>(k) * m + j] * x[static_cast<std::size_t>(j)];
        const double r = a[static_cast<std::size_t>(k) * m + k];
        if (std::abs(r) < 1e-12)
            throw SingularFitError("harmonic fit: rank-deficient design matrix");
        x[static_cast<std::size_t>(k)] = s / r;
    }
    return x;
}

// OLS fit of y(tau) = c0 + sum_k a_k sin(2 pi k tau / period) + b_k cos(...).
inline std::vector<double> fit_harmonic_series(const std::vector<double>& tau,
                                               const std::vector<double>& y, double period) {
    const int n = static_cast<int>(tau.size());
    if (n < kCoeffsPerSeries)
        throw InsufficientDataError("harmonic fit: need at least 7 observations, have " +
                                    std::to_string(n));
    std::vector<double> a(static_cast<std::size_t>(n) * kCoeffsPerSeries);
    for (int i = 0; i < n; ++i) {
        double* row = a.data() + static_cast<std::size_t>(i) * kCoeffsPerSeries;
        row[0] = 1.0;
        for (int k = 1; k <= kHarmonicOrder; ++k) {
            const double angle = 2.0 * M_PI * k * tau[static_cast<std::size_t>(i)] / period;
            row[2 * k - 1] = std::sin(angle);
            row[2 * k] = std::cos(angle);
        }
    }
    std::vector<double> rhs = y;
    return qr_least_squares(a, rhs, n, kCoeffsPerSeries);
}

}  // namespace detail

// Third-order harmonic regression over raw observations inside [t_s, t_e],
// with tau = doy - t_s and period = t_e - t_s. The GCVI series silently drops
// observations whose Green reflectance is 0.
inline HarmonicFeature harmonic_features(const SpectralTimeSeries& series,
                                         const CompositeConfig& cfg) {
    cfg.validate();
    const double period = cfg.t_e - cfg.t_s;

    std::vector<double> tau;
    std::vector<std::size_t> obs_idx;
    for (std::size_t k = 0; k < series.doys.size(); ++k) {
        const int doy = series.doys[k];
        if (doy < cfg.t_s || doy > cfg.t_e) continue;
        tau.push_back(static_cast<double>(doy - cfg.t_s));
        obs_idx.push_back(k);
    }

    constexpr int series_bands[4] = {band::kNarrowNir, band::kSwir1, band::kSwir2, band::kNir};
    HarmonicFeature out;
    out.coeffs.reserve(kHarmonicFeatureLength);

    std::vector<double> y(tau.size());
    for (int sb : series_bands) {
        for (std::size_t i = 0; i < obs_idx.size(); ++i)
            y[i] = series.refl[obs_idx[i]][static_cast<std::size_t>(sb)];
        auto c = detail::fit_harmonic_series(tau, y, period);
        out.coeffs.insert(out.coeffs.end(), c.begin(), c.end());
    }

    std::vector<double> gtau, gy;
    for (std::size_t i = 0; i < obs_idx.size(); ++i) {
        const auto& r = series.refl[obs_idx[i]];
        if (r[band::kGreen] == 0.0) continue;
        gtau.push_back(tau[i]);
        gy.push_back(r[band::kNir] / r[band::kGreen] - 1.0);
    }
    auto c = detail::fit_harmonic_series(gtau, gy, period);
    out.coeffs.insert(out.coeffs.end(), c.begin(), c.end());
    return out;
}

// Single-date passthrough (242) or two dates concatenated (484).
struct HyperFeature {
    std::vector<double> values;
};

inline HyperFeature concat_hyperspectral(const std::vector<double>& a,
                                         const std::vector<double>* b = nullptr) {
    if (a.size() != 242)
        throw ValidationError("hyperspectral vector must have 242 values");
    HyperFeature out{a};
    if (b) {
        if (b->size() != 242)
            throw ValidationError("hyperspectral vector must have 242 values");
        out.values.insert(out.values.end(), b->begin(), b->end());
    }
    return out;
}

}  // namespace cropnet
