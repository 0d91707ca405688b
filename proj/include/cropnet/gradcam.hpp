#pragma once

#include <algorithm>
#include <vector>

#include "cropnet/composite.hpp"
#include "cropnet/model.hpp"

namespace cropnet {

// Non-negative spectral-temporal importance, max-normalized to 1 (all zero if
// the class evidence is entirely negative).
struct ImportanceMap {
    int rows = 0, cols = 0;
    std::vector<double> values;
    int class_index = -1;

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

namespace detail {

// Bilinear resize; endpoints map onto endpoints.
inline std::vector<double> bilinear_resize(const std::vector<double>& src, int sh, int sw,
                                           int dh, int dw) {
    std::vector<double> dst(static_cast<std::size_t>(dh) * dw);
    for (int r = 0; r < dh; ++r) {
        const double fy = dh > 1 ? static_cast<double>(r) * (sh - 1) / (dh - 1) : 0.0;
        const int y0 = std::min(static_cast<int>(fy), sh - 1);
        const int y1 = std::min(y0 + 1, sh - 1);
        const double wy = fy - y0;
        for (int c = 0; c < dw; ++c) {
            const double fx = dw > 1 ? static_cast<double>(c) * (sw - 1) / (dw - 1) : 0.0;
            const int x0 = std::min(static_cast<int>(fx), sw - 1);
            const int x1 = std::min(x0 + 1, sw - 1);
            const double wx = fx - x0;
            const double top = (1.0 - wx) * src[static_cast<std::size_t>(y0) * sw + x0] +
                               wx * src[static_cast<std::size_t>(y0) * sw + x1];
            const double bot = (1.0 - wx) * src[static_cast<std::size_t>(y1) * sw + x0] +
                               wx * src[static_cast<std::size_t>(y1) * sw + x1];
            dst[static_cast<std::size_t>(r) * dw + c] = (1.0 - wy) * top + wy * bot;
        }
    }
    return dst;
}

// d(class score)/d(post-ReLU activations of conv layer `layer`) in eval mode:
// dropout is the identity and batch normalization backs through the running
// statistics only.
template <typename T>
Array4<T> class_score_gradient_at_layer(CropNetModel<T>& m, const ForwardCache<T>& cache,
                                        int class_idx, int layer) {
    Mat<T> glog(1, m.cfg.n_classes);
    glog.at(0, class_idx) = T(1);
    LinearGrads<T> lg = linear_backward(glog, cache.pooled, m.head_w);
    Array4<T> g = global_avg_pool_backward(lg.x, cache.features.h, cache.features.w);
    for (int k = kConvLayers - 1; k > layer; --k) {
        g = relu_backward(g, cache.bn_out[static_cast<std::size_t>(k)]);
        const auto& bnc = cache.bn_cache[static_cast<std::size_t>(k)];
        for (int c = 0; c < g.c; ++c) {
            const T f = m.bn_gamma[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] *
                        bnc.invstd[static_cast<std::size_t>(c)];
            for (int n = 0; n < g.n; ++n) {
                T* p = g.plane(n, c);
                for (std::size_t i = 0; i < static_cast<std::size_t>(g.h) * g.w; ++i)
                    p[i] *= f;
            }
        }
        const int s = conv_stride(k);
        const int sw = m.cfg.variant == CropNetConfig::Variant::k2D ? s : 1;
        g = conv_backward(g, cache.conv_in[static_cast<std::size_t>(k)],
                          m.conv_w[static_cast<std::size_t>(k)], s, sw)
                .x;
    }
    return g;
}

}  // namespace detail

// Importance from the post-ReLU activations of one convolutional layer
// (0-based). Early layers keep the band axis resolvable; the default sits in
// the first block where the map is still 5 rows tall. Channel weights are the
// spatial means of the class-score gradient at that layer; the map is
// ReLU(sum_k alpha_k A_k), bilinearly upsampled to the input grid and
// max-normalized.
inline constexpr int kDefaultCamLayer = 1;

template <typename T>
ImportanceMap grad_cam(CropNetModel<T>& m, const MedianFeature2D& feature, int class_idx,
                       int layer = kDefaultCamLayer) {
    if (m.cfg.variant != CropNetConfig::Variant::k2D)
        throw ValidationError("grad_cam: requires the 2D variant");
    if (class_idx < 0 || class_idx >= m.cfg.n_classes)
        throw ValidationError("grad_cam: class index out of range");
    if (layer < 0 || layer >= kConvLayers)
        throw ValidationError("grad_cam: layer must be 0..7");
    if (feature.t != m.cfg.input_w)
        throw ValidationError("grad_cam: feature bin count does not match model input");

    Array4<T> x = to_input<T>(feature);
    ForwardCache<T> cache;
    ForwardOpts opts;  // eval mode
    cropnet_forward(m, x, opts, &cache);

    // Post-ReLU activations of the chosen layer; in eval mode the block
    // boundary dropout is the identity, so the next conv's input (or the GAP
    // input after the last layer) is exactly that tensor.
    const Array4<T>& acts = layer == kConvLayers - 1
                                ? cache.features
                                : cache.conv_in[static_cast<std::size_t>(layer + 1)];
    Array4<T> grad = detail::class_score_gradient_at_layer(m, cache, class_idx, layer);
    if (!grad.same_shape(acts))
        throw ValidationError("grad_cam: internal shape mismatch");

    const std::size_t plane = static_cast<std::size_t>(acts.h) * acts.w;
    std::vector<double> raw(plane, 0.0);
    for (int k = 0; k < acts.c; ++k) {
        const T* gp = grad.plane(0, k);
        double alpha = 0.0;
        for (std::size_t i = 0; i < plane; ++i) alpha += static_cast<double>(gp[i]);
        alpha /= static_cast<double>(plane);
        const T* a = acts.plane(0, k);
        for (std::size_t i = 0; i < plane; ++i) raw[i] += alpha * static_cast<double>(a[i]);
    }
    for (auto& v : raw) v = std::max(v, 0.0);

    ImportanceMap map;
    map.rows = kNumBands;
    map.cols = feature.t;
    map.class_index = class_idx;
    map.values = detail::bilinear_resize(raw, acts.h, acts.w, kNumBands, feature.t);
    const double mx = *std::max_element(map.values.begin(), map.values.end());
    if (mx > 0.0)
        for (auto& v : map.values) v /= mx;
    return map;
}

}  // namespace cropnet
