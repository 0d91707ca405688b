#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "cropnet/errors.hpp"

namespace cropnet {

// Fixed Sentinel-2 band order used everywhere: feature rows, checkpoints,
// importance maps. Never reordered.
inline constexpr int kNumBands = 10;

inline constexpr std::array<std::string_view, kNumBands> kBandNames = {
    "B2", "B3", "B4", "B8", "B5", "B6", "B7", "B8A", "B11", "B12"};

// Indices into the fixed order.
namespace band {
inline constexpr int kBlue = 0;       // B2
inline constexpr int kGreen = 1;      // B3
inline constexpr int kRed = 2;        // B4
inline constexpr int kNir = 3;        // B8
inline constexpr int kRedEdge1 = 4;   // B5
inline constexpr int kRedEdge2 = 5;   // B6
inline constexpr int kRedEdge3 = 6;   // B7
inline constexpr int kNarrowNir = 7;  // B8A
inline constexpr int kSwir1 = 8;      // B11
inline constexpr int kSwir2 = 9;      // B12
}  // namespace band

enum class VegIndex { NDVI, GCVI };

// NDVI = (NIR - Red) / (NIR + Red), defined as 0 when the denominator is 0.
// GCVI = NIR / Green - 1; Green == 0 is non-physical and rejected.
template <typename Vec>
double vegetation_index(const Vec& refl, VegIndex kind) {
    if (static_cast<int>(refl.size()) != kNumBands)
        throw ValidationError("vegetation_index: expected 10-band vector");
    if (kind == VegIndex::NDVI) {
        const double nir = refl[band::kNir], red = refl[band::kRed];
        const double denom = nir + red;
        return denom == 0.0 ? 0.0 : (nir - red) / denom;
    }
    const double green = refl[band::kGreen];
    if (green == 0.0)
        throw RejectionError("GCVI undefined: Green reflectance is 0", 0.0);
    return refl[band::kNir] / green - 1.0;
}

}  // namespace cropnet
