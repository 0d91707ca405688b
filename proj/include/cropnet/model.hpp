#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "cropnet/augment.hpp"
#include "cropnet/nn.hpp"
#include "cropnet/rng.hpp"
#include "cropnet/tensor.hpp"

namespace cropnet {

// Four blocks of two convs each (BN + ReLU after every conv, spatial dropout
// after every block), stride 2 on the first conv of blocks 1 and 3, then
// global average pooling and a linear head. The 1D variant keeps the same
// plan with 3x1 kernels on (L, 1) inputs and strides only along the feature
// axis.
struct CropNetConfig {
    enum class Variant { k2D, k1D };
    Variant variant = Variant::k2D;
    int input_h = 10;
    int input_w = 43;
    std::array<int, 4> widths{64, 128, 256, 512};
    double dropout_p = 0.1;
    int n_classes = 7;

    int kernel_w() const { return variant == Variant::k2D ? 3 : 1; }

    void validate() const {
        for (int w : widths)
            if (w < 1) throw ValidationError("cropnet: widths must be positive");
        if (n_classes < 2) throw ValidationError("cropnet: need at least 2 classes");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw ValidationError("cropnet: dropout_p must lie in [0,1)");
        if (input_h < 4)
            throw ValidationError("cropnet: input height " + std::to_string(input_h) +
                                  " too small for two stride-2 stages");
        if (variant == Variant::k2D && input_w < 4)
            throw ValidationError("cropnet: input width too small for two stride-2 stages");
        if (variant == Variant::k1D && input_w != 1)
            throw ValidationError("cropnet: 1D variant expects width-1 input");
    }
};

inline constexpr int kConvLayers = 8;

inline int conv_block(int layer) { return layer / 2; }
inline bool conv_is_first_in_block(int layer) { return layer % 2 == 0; }
inline int conv_stride(int layer) {
    const int blk = conv_block(layer);
    return conv_is_first_in_block(layer) && (blk == 0 || blk == 2) ? 2 : 1;
}
inline int conv_in_channels(const CropNetConfig& cfg, int layer) {
    if (layer == 0) return 1;
    return conv_is_first_in_block(layer) ? cfg.widths[static_cast<std::size_t>(conv_block(layer) - 1)]
                                         : cfg.widths[static_cast<std::size_t>(conv_block(layer))];
}
inline int conv_out_channels(const CropNetConfig& cfg, int layer) {
    return cfg.widths[static_cast<std::size_t>(conv_block(layer))];
}

// Spatial sizes after each conv layer; index 0 is the input.
inline std::vector<std::pair<int, int>> cropnet_shape_trace(const CropNetConfig& cfg) {
    std::vector<std::pair<int, int>> trace;
    int h = cfg.input_h, w = cfg.input_w;
    trace.emplace_back(h, w);
    for (int k = 0; k < kConvLayers; ++k) {
        const int s = conv_stride(k);
        h = conv_out_dim(h, 3, s);
        w = conv_out_dim(w, cfg.kernel_w(), cfg.variant == CropNetConfig::Variant::k2D ? s : 1);
        trace.emplace_back(h, w);
    }
    return trace;
}

struct BlockShape {
    std::string name;
    std::vector<int> dims;
    bool trainable = true;

    std::size_t count() const {
        std::size_t n = 1;
        for (int d : dims) n *= static_cast<std::size_t>(d);
        return n;
    }
};

// Parameter blocks in checkpoint/optimizer order; running stats follow the
// trainable blocks.
inline std::vector<BlockShape> parameter_blocks(const CropNetConfig& cfg) {
    std::vector<BlockShape> blocks;
    for (int k = 0; k < kConvLayers; ++k) {
        const std::string p = "conv" + std::to_string(k);
        const int ci = conv_in_channels(cfg, k), co = conv_out_channels(cfg, k);
        blocks.push_back({p + ".weight", {co, ci, 3, cfg.kernel_w()}, true});
        blocks.push_back({p + ".bias", {co}, true});
        blocks.push_back({"bn" + std::to_string(k) + ".gamma", {co}, true});
        blocks.push_back({"bn" + std::to_string(k) + ".beta", {co}, true});
    }
    blocks.push_back({"head.weight", {cfg.n_classes, cfg.widths[3]}, true});
    blocks.push_back({"head.bias", {cfg.n_classes}, true});
    for (int k = 0; k < kConvLayers; ++k) {
        blocks.push_back({"bn" + std::to_string(k) + ".running_mean", {conv_out_channels(cfg, k)}, false});
        blocks.push_back({"bn" + std::to_string(k) + ".running_var", {conv_out_channels(cfg, k)}, false});
    }
    return blocks;
}

inline std::size_t parameter_count(const CropNetConfig& cfg) {
    std::size_t n = 0;
    for (const auto& b : parameter_blocks(cfg))
        if (b.trainable) n += b.count();
    return n;
}

template <typename T>
struct CropNetModel {
    CropNetConfig cfg;
    std::array<Array4<T>, kConvLayers> conv_w;
    std::array<std::vector<T>, kConvLayers> conv_b;
    std::array<std::vector<T>, kConvLayers> bn_gamma, bn_beta, bn_rmean, bn_rvar;
    Mat<T> head_w;
    std::vector<T> head_b;

    // Adam moments aligned with the trainable block enumeration.
    std::vector<std::vector<T>> adam_m, adam_v;
    long adam_step = 0;
    AdamHyper adam_hp;

    static constexpr T kBnEps = static_cast<T>(1e-5);
    static constexpr T kBnMomentum = static_cast<T>(0.1);

    // Trainable blocks in checkpoint order.
    template <typename Fn>
    void for_each_param(Fn&& fn) {
        for (int k = 0; k < kConvLayers; ++k) {
            fn("conv" + std::to_string(k) + ".weight", conv_w[static_cast<std::size_t>(k)].v);
            fn("conv" + std::to_string(k) + ".bias", conv_b[static_cast<std::size_t>(k)]);
            fn("bn" + std::to_string(k) + ".gamma", bn_gamma[static_cast<std::size_t>(k)]);
            fn("bn" + std::to_string(k) + ".beta", bn_beta[static_cast<std::size_t>(k)]);
        }
        fn("head.weight", head_w.v);
        fn("head.bias", head_b);
    }

    template <typename Fn>
    void for_each_buffer(Fn&& fn) {
        for (int k = 0; k < kConvLayers; ++k) {
            fn("bn" + std::to_string(k) + ".running_mean", bn_rmean[static_cast<std::size_t>(k)]);
            fn("bn" + std::to_string(k) + ".running_var", bn_rvar[static_cast<std::size_t>(k)]);
        }
    }
};

// He-normal conv/linear weights, zero biases, identity BN, zeroed Adam state.
template <typename T>
CropNetModel<T> build_cropnet(const CropNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    CropNetModel<T> m;
    m.cfg = cfg;
    for (int k = 0; k < kConvLayers; ++k) {
        const int ci = conv_in_channels(cfg, k), co = conv_out_channels(cfg, k);
        Rng rng = Rng::stream(seed, hash_string("conv.weight"), static_cast<std::uint64_t>(k));
        auto& w = m.conv_w[static_cast<std::size_t>(k)];
        w = Array4<T>(co, ci, 3, cfg.kernel_w());
        const double stddev = std::sqrt(2.0 / (static_cast<double>(ci) * 3 * cfg.kernel_w()));
        for (auto& v : w.v) v = static_cast<T>(rng.normal(0.0, stddev));
        m.conv_b[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(co), T(0));
        m.bn_gamma[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(co), T(1));
        m.bn_beta[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(co), T(0));
        m.bn_rmean[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(co), T(0));
        m.bn_rvar[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(co), T(1));
    }
    Rng rng = Rng::stream(seed, hash_string("head.weight"));
    m.head_w = Mat<T>(cfg.n_classes, cfg.widths[3]);
    const double stddev = std::sqrt(2.0 / static_cast<double>(cfg.widths[3]));
    for (auto& v : m.head_w.v) v = static_cast<T>(rng.normal(0.0, stddev));
    m.head_b.assign(static_cast<std::size_t>(cfg.n_classes), T(0));

    m.for_each_param([&](const std::string&, std::vector<T>& p) {
        m.adam_m.emplace_back(p.size(), T(0));
        m.adam_v.emplace_back(p.size(), T(0));
    });
    return m;
}

template <typename T>
struct ForwardCache {
    std::array<Array4<T>, kConvLayers> conv_in;   // input of conv k
    std::array<Array4<T>, kConvLayers> conv_out;  // pre-BN
    std::array<Array4<T>, kConvLayers> bn_out;    // pre-ReLU
    std::array<BatchNormCache<T>, kConvLayers> bn_cache;
    std::array<std::vector<T>, 4> dropout_mask;
    Array4<T> features;  // post-dropout output of block 4 (GAP input)
    Mat<T> pooled;
};

struct ForwardOpts {
    bool train = false;
    bool update_running_stats = false;  // only the training loop sets this
    std::uint64_t dropout_seed = 0;
    std::uint64_t dropout_round = 0;    // distinct per optimizer step
};

template <typename T>
Mat<T> cropnet_forward(CropNetModel<T>& m, const Array4<T>& x, const ForwardOpts& opts,
                       ForwardCache<T>* cache = nullptr) {
    if (x.c != 1 || x.h != m.cfg.input_h || x.w != m.cfg.input_w)
        throw ValidationError("cropnet forward: input shape mismatch");
    Array4<T> cur = x;
    for (int blk = 0; blk < 4; ++blk) {
        for (int half = 0; half < 2; ++half) {
            const int k = blk * 2 + half;
            const int s = conv_stride(k);
            const int sw = m.cfg.variant == CropNetConfig::Variant::k2D ? s : 1;
            if (cache) cache->conv_in[static_cast<std::size_t>(k)] = cur;
            Array4<T> z = conv_forward(cur, m.conv_w[static_cast<std::size_t>(k)],
                                       m.conv_b[static_cast<std::size_t>(k)], s, sw);
            if (cache) cache->conv_out[static_cast<std::size_t>(k)] = z;
            Array4<T> bn = batchnorm_forward(
                z, m.bn_gamma[static_cast<std::size_t>(k)], m.bn_beta[static_cast<std::size_t>(k)],
                m.bn_rmean[static_cast<std::size_t>(k)], m.bn_rvar[static_cast<std::size_t>(k)],
                opts.train, CropNetModel<T>::kBnMomentum, CropNetModel<T>::kBnEps,
                cache ? &cache->bn_cache[static_cast<std::size_t>(k)] : nullptr,
                opts.update_running_stats);
            if (cache) cache->bn_out[static_cast<std::size_t>(k)] = bn;
            cur = relu_forward(bn);
        }
        Rng drop_rng = Rng::stream(opts.dropout_seed, hash_string("dropout"), opts.dropout_round,
                                   static_cast<std::uint64_t>(blk));
        cur = spatial_dropout_forward(cur, m.cfg.dropout_p, opts.train, drop_rng,
                                      cache ? &cache->dropout_mask[static_cast<std::size_t>(blk)]
                                            : nullptr);
    }
    if (cache) cache->features = cur;
    Mat<T> pooled = global_avg_pool(cur);
    if (cache) cache->pooled = pooled;
    return linear_forward(pooled, m.head_w, m.head_b);
}

// Gradients for every trainable block, same order as for_each_param, plus the
// gradient with respect to the input batch.
template <typename T>
struct ModelGrads {
    std::vector<std::vector<T>> blocks;
    Array4<T> input;
};

template <typename T>
ModelGrads<T> cropnet_backward(CropNetModel<T>& m, const ForwardCache<T>& cache,
                               const Mat<T>& grad_logits) {
    std::array<std::vector<T>, kConvLayers> g_conv_w, g_conv_b, g_gamma, g_beta;

    LinearGrads<T> lg = linear_backward(grad_logits, cache.pooled, m.head_w);
    Array4<T> grad = global_avg_pool_backward(lg.x, cache.features.h, cache.features.w);

    for (int blk = 3; blk >= 0; --blk) {
        grad = spatial_dropout_backward(grad, cache.dropout_mask[static_cast<std::size_t>(blk)]);
        for (int half = 1; half >= 0; --half) {
            const int k = blk * 2 + half;
            grad = relu_backward(grad, cache.bn_out[static_cast<std::size_t>(k)]);
            BatchNormGrads<T> bg =
                batchnorm_backward(grad, cache.conv_out[static_cast<std::size_t>(k)],
                                   m.bn_gamma[static_cast<std::size_t>(k)],
                                   cache.bn_cache[static_cast<std::size_t>(k)]);
            g_gamma[static_cast<std::size_t>(k)] = std::move(bg.gamma);
            g_beta[static_cast<std::size_t>(k)] = std::move(bg.beta);
            const int s = conv_stride(k);
            const int sw = m.cfg.variant == CropNetConfig::Variant::k2D ? s : 1;
            ConvGrads<T> cg = conv_backward(bg.x, cache.conv_in[static_cast<std::size_t>(k)],
                                            m.conv_w[static_cast<std::size_t>(k)], s, sw);
            g_conv_w[static_cast<std::size_t>(k)] = std::move(cg.w.v);
            g_conv_b[static_cast<std::size_t>(k)] = std::move(cg.b);
            grad = std::move(cg.x);
        }
    }

    ModelGrads<T> g;
    for (int k = 0; k < kConvLayers; ++k) {
        g.blocks.push_back(std::move(g_conv_w[static_cast<std::size_t>(k)]));
        g.blocks.push_back(std::move(g_conv_b[static_cast<std::size_t>(k)]));
        g.blocks.push_back(std::move(g_gamma[static_cast<std::size_t>(k)]));
        g.blocks.push_back(std::move(g_beta[static_cast<std::size_t>(k)]));
    }
    g.blocks.push_back(std::move(lg.w.v));
    g.blocks.push_back(std::move(lg.b));
    g.input = std::move(grad);
    return g;
}

template <typename T>
void apply_gradients(CropNetModel<T>& m, const ModelGrads<T>& grads) {
    ++m.adam_step;
    std::size_t i = 0;
    m.for_each_param([&](const std::string& name, std::vector<T>& p) {
        adam_update(p, grads.blocks.at(i), m.adam_m.at(i), m.adam_v.at(i), m.adam_step,
                    m.adam_hp, name);
        ++i;
    });
}

// ---- Training -----------------------------------------------------------

struct TrainHyper {
    double lr = 1e-4;
    int batch_size = 256;
    int epochs = 50;
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Returns one feature tensor (C=1) per request; the augmenting provider
// re-derives features per epoch, the plain one returns precomputed values.
template <typename T>
using FeatureProvider = std::function<Array4<T>(std::size_t sample, std::uint64_t epoch)>;

template <typename T>
struct TrainData {
    std::size_t count = 0;
    FeatureProvider<T> features;
    std::vector<int> labels;
};

template <typename T>
Array4<T> to_input(const MedianFeature2D& f) {
    Array4<T> x(1, 1, kNumBands, f.t);
    for (std::size_t k = 0; k < f.values.size(); ++k) x.v[k] = static_cast<T>(f.values[k]);
    return x;
}

template <typename T>
Array4<T> to_input(const std::vector<double>& flat) {
    Array4<T> x(1, 1, static_cast<int>(flat.size()), 1);
    for (std::size_t k = 0; k < flat.size(); ++k) x.v[k] = static_cast<T>(flat[k]);
    return x;
}

using EpochCallback = std::function<void(int epoch, const EpochStats&)>;

// Seeded shuffled mini-batches; per-sample features may change across epochs
// via the provider. Aborts on a non-finite loss, naming the failing batch.
template <typename T>
std::vector<EpochStats> train_cropnet(CropNetModel<T>& m, const TrainData<T>& data,
                                      const TrainHyper& hp, std::uint64_t seed,
                                      const EpochCallback& on_epoch = {}) {
    if (data.count == 0) throw ValidationError("train: empty training set");
    if (data.labels.size() != data.count)
        throw ValidationError("train: label count mismatch");
    m.adam_hp.lr = hp.lr;

    std::vector<EpochStats> history;
    std::vector<std::size_t> order(data.count);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(seed, hash_string("shuffle"), static_cast<std::uint64_t>(epoch));
        for (std::size_t i = data.count - 1; i > 0; --i) {
            const auto j =
                static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i)));
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        std::size_t correct = 0, seen = 0;
        for (std::size_t start = 0; start < data.count; start += static_cast<std::size_t>(hp.batch_size)) {
            const std::size_t end = std::min(data.count, start + static_cast<std::size_t>(hp.batch_size));
            const int bn = static_cast<int>(end - start);

            Array4<T> batch;
            std::vector<int> labels(static_cast<std::size_t>(bn));
            for (int i = 0; i < bn; ++i) {
                const std::size_t s = order[start + static_cast<std::size_t>(i)];
                Array4<T> f = data.features(s, static_cast<std::uint64_t>(epoch));
                if (i == 0) batch = Array4<T>(bn, 1, f.h, f.w);
                if (f.h != batch.h || f.w != batch.w)
                    throw ValidationError("train: inhomogeneous feature shapes");
                std::copy(f.v.begin(), f.v.end(), batch.plane(i, 0));
                labels[static_cast<std::size_t>(i)] = data.labels[s];
            }

            ForwardCache<T> cache;
            ForwardOpts opts;
            opts.train = true;
            opts.update_running_stats = true;
            opts.dropout_seed = seed;
            opts.dropout_round = static_cast<std::uint64_t>(epoch) * (data.count + 1) + start;
            Mat<T> logits = cropnet_forward(m, batch, opts, &cache);
            SoftmaxLoss<T> sl = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(sl.loss))
                throw ValidationError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch offset " + std::to_string(start));
            loss_sum += sl.loss * bn;
            for (int i = 0; i < bn; ++i) {
                const T* row = logits.row(i);
                int arg = 0;
                for (int k = 1; k < logits.cols; ++k)
                    if (row[k] > row[arg]) arg = k;
                if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
            }
            seen += static_cast<std::size_t>(bn);

            ModelGrads<T> grads = cropnet_backward(m, cache, sl.grad);
            apply_gradients(m, grads);
        }
        history.push_back({loss_sum / static_cast<double>(seen),
                           static_cast<double>(correct) / static_cast<double>(seen)});
        if (on_epoch) on_epoch(epoch, history.back());
    }
    return history;
}

// Eval-mode class probabilities; rows sum to 1.
template <typename T>
Mat<T> predict(CropNetModel<T>& m, const Array4<T>& batch) {
    ForwardOpts opts;  // eval: no dropout, running stats
    Mat<T> logits = cropnet_forward(m, batch, opts);
    return softmax(logits);
}

template <typename T>
std::vector<int> predict_classes(CropNetModel<T>& m, const Array4<T>& batch) {
    Mat<T> p = predict(m, batch);
    std::vector<int> out(static_cast<std::size_t>(p.rows));
    for (int r = 0; r < p.rows; ++r) {
        const T* row = p.row(r);
        int arg = 0;
        for (int k = 1; k < p.cols; ++k)
            if (row[k] > row[arg]) arg = k;  // ties resolve to the lowest index
        out[static_cast<std::size_t>(r)] = arg;
    }
    return out;
}

}  // namespace cropnet
