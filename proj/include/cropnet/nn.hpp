#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cropnet/rng.hpp"
#include "cropnet/tensor.hpp"

namespace cropnet {

// Cross-correlation (no kernel flip) with zero padding kh/2 x kw/2, so output
// spatial size is ceil(H/stride) x ceil(W/stride) for odd kernels.

inline int conv_out_dim(int in, int k, int stride) {
    const int pad = k / 2;
    return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// Patch matrix for one sample: row p = (oh * OW + ow) holds the receptive
// field flattened as (ic, kh, kw), zero where it pads. Kernel weights for one
// output channel are contiguous in exactly the same order, so the conv
// becomes long dot products the compiler can vectorize.
template <typename T>
void im2row(const Array4<T>& x, int n, int kh, int kw, int sh, int sw, int oh_dim, int ow_dim,
            T* bt) {
    const int ph = kh / 2, pw = kw / 2;
    const int patch = x.c * kh * kw;
    for (int oh = 0; oh < oh_dim; ++oh) {
        for (int ow = 0; ow < ow_dim; ++ow) {
            T* row = bt + static_cast<std::size_t>(oh * ow_dim + ow) * patch;
            std::fill(row, row + patch, T(0));
            for (int ic = 0; ic < x.c; ++ic) {
                const T* xp = x.plane(n, ic);
                for (int i = 0; i < kh; ++i) {
                    const int ih = oh * sh + i - ph;
                    if (ih < 0 || ih >= x.h) continue;
                    const T* xrow = xp + static_cast<std::size_t>(ih) * x.w;
                    T* dst = row + (ic * kh + i) * kw;
                    for (int j = 0; j < kw; ++j) {
                        const int iw = ow * sw + j - pw;
                        if (iw >= 0 && iw < x.w) dst[j] = xrow[iw];
                    }
                }
            }
        }
    }
}

template <typename T>
std::vector<T>& im2row_scratch() {
    static thread_local std::vector<T> scratch;
    return scratch;
}

// Eight independent accumulation lanes so the reduction vectorizes without
// relaxed FP semantics; the summation order is fixed, results are bitwise
// stable.
template <typename T>
T dot(const T* a, const T* b, int k) {
    T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
    T s4 = T(0), s5 = T(0), s6 = T(0), s7 = T(0);
    int i = 0;
    for (; i + 8 <= k; i += 8) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        s4 += a[i + 4] * b[i + 4];
        s5 += a[i + 5] * b[i + 5];
        s6 += a[i + 6] * b[i + 6];
        s7 += a[i + 7] * b[i + 7];
    }
    T tail = T(0);
    for (; i < k; ++i) tail += a[i] * b[i];
    return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7)) + tail;
}

}  // namespace detail

template <typename T>
Array4<T> conv_forward(const Array4<T>& x, const Array4<T>& w, const std::vector<T>& b,
                       int sh, int sw) {
    if (x.c != w.c) throw ValidationError("conv: input channels do not match kernel");
    if (static_cast<int>(b.size()) != w.n) throw ValidationError("conv: bias size mismatch");
    const int kh = w.h, kw = w.w;
    const int oh_dim = conv_out_dim(x.h, kh, sh);
    const int ow_dim = conv_out_dim(x.w, kw, sw);
    const int patch = x.c * kh * kw;
    const int positions = oh_dim * ow_dim;
    const int oc_n = w.n;
    Array4<T> y(x.n, oc_n, oh_dim, ow_dim);

    // Transposed weights: wt[k][oc], so the accumulation runs over contiguous
    // output channels.
    std::vector<T> wt(static_cast<std::size_t>(patch) * oc_n);
    for (int oc = 0; oc < oc_n; ++oc)
        for (int k = 0; k < patch; ++k)
            wt[static_cast<std::size_t>(k) * oc_n + oc] = w.v[static_cast<std::size_t>(oc) * patch + k];

    CROPNET_OMP_FOR
    for (int in = 0; in < x.n; ++in) {
        auto& bt = detail::im2row_scratch<T>();
        bt.resize(static_cast<std::size_t>(positions) * patch);
        detail::im2row(x, in, kh, kw, sh, sw, oh_dim, ow_dim, bt.data());
        std::vector<T> yrow(static_cast<std::size_t>(oc_n));
        for (int p = 0; p < positions; ++p) {
            std::copy(b.begin(), b.end(), yrow.begin());
            const T* brow = bt.data() + static_cast<std::size_t>(p) * patch;
            for (int k = 0; k < patch; ++k) {
                const T v = brow[k];
                if (v == T(0)) continue;
                const T* wtrow = wt.data() + static_cast<std::size_t>(k) * oc_n;
                for (int oc = 0; oc < oc_n; ++oc) yrow[static_cast<std::size_t>(oc)] += v * wtrow[oc];
            }
            for (int oc = 0; oc < oc_n; ++oc) y.plane(in, oc)[p] = yrow[static_cast<std::size_t>(oc)];
        }
    }
    return y;
}

template <typename T>
struct ConvGrads {
    Array4<T> x;
    Array4<T> w;
    std::vector<T> b;
};

template <typename T>
ConvGrads<T> conv_backward(const Array4<T>& gout, const Array4<T>& x, const Array4<T>& w,
                           int sh, int sw) {
    const int kh = w.h, kw = w.w;
    const int ph = kh / 2, pw = kw / 2;
    const int oh_dim = conv_out_dim(x.h, kh, sh);
    const int ow_dim = conv_out_dim(x.w, kw, sw);
    if (gout.n != x.n || gout.c != w.n || gout.h != oh_dim || gout.w != ow_dim)
        throw ValidationError("conv backward: gradient shape mismatch");

    ConvGrads<T> g;
    g.x = Array4<T>(x.n, x.c, x.h, x.w);
    g.w = Array4<T>(w.n, w.c, w.h, w.w);
    g.b.assign(static_cast<std::size_t>(w.n), T(0));

    const int patch = x.c * kh * kw;
    const int positions = oh_dim * ow_dim;
    std::vector<T> bt(static_cast<std::size_t>(positions) * patch);
    std::vector<T> gcols(static_cast<std::size_t>(positions) * patch);

    // Samples stay sequential so weight gradients accumulate in a fixed
    // order; the loops inside each sample write disjoint slices.
    for (int in = 0; in < x.n; ++in) {
        detail::im2row(x, in, kh, kw, sh, sw, oh_dim, ow_dim, bt.data());

        // dL/d(patch rows): gcols[p] = sum_oc gout[oc][p] * w[oc]
        CROPNET_OMP_FOR
        for (int p = 0; p < positions; ++p) {
            T* gc = gcols.data() + static_cast<std::size_t>(p) * patch;
            std::fill(gc, gc + patch, T(0));
            for (int oc = 0; oc < w.n; ++oc) {
                const T gv = gout.plane(in, oc)[p];
                if (gv == T(0)) continue;
                const T* wrow = w.v.data() + static_cast<std::size_t>(oc) * patch;
                for (int k = 0; k < patch; ++k) gc[k] += gv * wrow[k];
            }
        }

        // Scatter patch gradients back; each input channel owns its plane.
        CROPNET_OMP_FOR
        for (int ic = 0; ic < x.c; ++ic) {
            T* gx = g.x.plane(in, ic);
            for (int oh = 0; oh < oh_dim; ++oh) {
                for (int ow = 0; ow < ow_dim; ++ow) {
                    const T* gc = gcols.data() +
                                  static_cast<std::size_t>(oh * ow_dim + ow) * patch +
                                  static_cast<std::size_t>(ic) * kh * kw;
                    for (int i = 0; i < kh; ++i) {
                        const int ih = oh * sh + i - ph;
                        if (ih < 0 || ih >= x.h) continue;
                        for (int j = 0; j < kw; ++j) {
                            const int iw = ow * sw + j - pw;
                            if (iw >= 0 && iw < x.w)
                                gx[static_cast<std::size_t>(ih) * x.w + iw] += gc[i * kw + j];
                        }
                    }
                }
            }
        }

        // Weight/bias gradients: each output channel owns its row.
        CROPNET_OMP_FOR
        for (int oc = 0; oc < w.n; ++oc) {
            const T* go = gout.plane(in, oc);
            T* gwrow = g.w.v.data() + static_cast<std::size_t>(oc) * patch;
            T acc = T(0);
            for (int p = 0; p < positions; ++p) {
                const T gv = go[p];
                acc += gv;
                if (gv == T(0)) continue;
                const T* brow = bt.data() + static_cast<std::size_t>(p) * patch;
                for (int k = 0; k < patch; ++k) gwrow[k] += gv * brow[k];
            }
            g.b[static_cast<std::size_t>(oc)] += acc;
        }
    }
    return g;
}

// ---- Batch normalization ----------------------------------------------

template <typename T>
struct BatchNormCache {
    std::vector<T> mean;     // per channel
    std::vector<T> invstd;   // per channel
};

// Train mode normalizes with batch statistics over (N, H, W) and updates the
// running stats in place with the given momentum; eval mode uses the running
// stats. Biased variance throughout.
template <typename T>
Array4<T> batchnorm_forward(const Array4<T>& x, const std::vector<T>& gamma,
                            const std::vector<T>& beta, std::vector<T>& running_mean,
                            std::vector<T>& running_var, bool train, T momentum, T eps,
                            BatchNormCache<T>* cache = nullptr, bool update_running = true) {
    const int C = x.c;
    if (static_cast<int>(gamma.size()) != C || static_cast<int>(beta.size()) != C ||
        static_cast<int>(running_mean.size()) != C || static_cast<int>(running_var.size()) != C)
        throw ValidationError("batchnorm: parameter size mismatch");
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    const std::size_t m = static_cast<std::size_t>(x.n) * plane;
    if (train && m < 2) throw ValidationError("batchnorm: train mode needs N*H*W >= 2");

    Array4<T> y(x.n, x.c, x.h, x.w);
    std::vector<T> mean(static_cast<std::size_t>(C)), invstd(static_cast<std::size_t>(C));
    CROPNET_OMP_FOR
    for (int c = 0; c < C; ++c) {
        T mu, var;
        if (train) {
            T s = T(0);
            for (int in = 0; in < x.n; ++in) {
                const T* p = x.plane(in, c);
                for (std::size_t k = 0; k < plane; ++k) s += p[k];
            }
            mu = s / static_cast<T>(m);
            T sq = T(0);
            for (int in = 0; in < x.n; ++in) {
                const T* p = x.plane(in, c);
                for (std::size_t k = 0; k < plane; ++k) {
                    const T d = p[k] - mu;
                    sq += d * d;
                }
            }
            var = sq / static_cast<T>(m);
            if (update_running) {
                running_mean[static_cast<std::size_t>(c)] =
                    (T(1) - momentum) * running_mean[static_cast<std::size_t>(c)] + momentum * mu;
                running_var[static_cast<std::size_t>(c)] =
                    (T(1) - momentum) * running_var[static_cast<std::size_t>(c)] + momentum * var;
            }
        } else {
            mu = running_mean[static_cast<std::size_t>(c)];
            var = running_var[static_cast<std::size_t>(c)];
        }
        const T is = T(1) / std::sqrt(var + eps);
        mean[static_cast<std::size_t>(c)] = mu;
        invstd[static_cast<std::size_t>(c)] = is;
        const T g = gamma[static_cast<std::size_t>(c)], b = beta[static_cast<std::size_t>(c)];
        for (int in = 0; in < x.n; ++in) {
            const T* p = x.plane(in, c);
            T* q = y.plane(in, c);
            for (std::size_t k = 0; k < plane; ++k) q[k] = g * (p[k] - mu) * is + b;
        }
    }
    if (cache) {
        cache->mean = std::move(mean);
        cache->invstd = std::move(invstd);
    }
    return y;
}

template <typename T>
struct BatchNormGrads {
    Array4<T> x;
    std::vector<T> gamma;
    std::vector<T> beta;
};

// Gradients through the batch statistics (train mode).
template <typename T>
BatchNormGrads<T> batchnorm_backward(const Array4<T>& gout, const Array4<T>& x,
                                     const std::vector<T>& gamma,
                                     const BatchNormCache<T>& cache) {
    const int C = x.c;
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    const std::size_t m = static_cast<std::size_t>(x.n) * plane;
    BatchNormGrads<T> g;
    g.x = Array4<T>(x.n, x.c, x.h, x.w);
    g.gamma.assign(static_cast<std::size_t>(C), T(0));
    g.beta.assign(static_cast<std::size_t>(C), T(0));
    CROPNET_OMP_FOR
    for (int c = 0; c < C; ++c) {
        const T mu = cache.mean[static_cast<std::size_t>(c)];
        const T is = cache.invstd[static_cast<std::size_t>(c)];
        const T gam = gamma[static_cast<std::size_t>(c)];
        T sum_g = T(0), sum_gx = T(0);
        for (int in = 0; in < x.n; ++in) {
            const T* go = gout.plane(in, c);
            const T* p = x.plane(in, c);
            for (std::size_t k = 0; k < plane; ++k) {
                sum_g += go[k];
                sum_gx += go[k] * (p[k] - mu) * is;
            }
        }
        g.beta[static_cast<std::size_t>(c)] = sum_g;
        g.gamma[static_cast<std::size_t>(c)] = sum_gx;
        const T inv_m = T(1) / static_cast<T>(m);
        for (int in = 0; in < x.n; ++in) {
            const T* go = gout.plane(in, c);
            const T* p = x.plane(in, c);
            T* gx = g.x.plane(in, c);
            for (std::size_t k = 0; k < plane; ++k) {
                const T xhat = (p[k] - mu) * is;
                gx[k] = gam * is * (go[k] - inv_m * sum_g - xhat * inv_m * sum_gx);
            }
        }
    }
    return g;
}

// ---- ReLU ---------------------------------------------------------------

template <typename T>
Array4<T> relu_forward(const Array4<T>& x) {
    Array4<T> y = x;
    for (auto& v : y.v)
        if (v < T(0)) v = T(0);
    return y;
}

template <typename T>
Array4<T> relu_backward(const Array4<T>& gout, const Array4<T>& x) {
    Array4<T> g = gout;
    for (std::size_t k = 0; k < g.v.size(); ++k)
        if (x.v[k] <= T(0)) g.v[k] = T(0);
    return g;
}

// ---- Spatial dropout ------------------------------------------------------

// Zeroes whole (sample, channel) planes with probability p and scales
// survivors by 1/(1-p); identity in eval mode. The mask doubles as the
// backward multiplier.
template <typename T>
Array4<T> spatial_dropout_forward(const Array4<T>& x, double p, bool train, Rng& rng,
                                  std::vector<T>* mask_out = nullptr) {
    if (p < 0.0 || p >= 1.0) throw ValidationError("dropout: p must lie in [0,1)");
    if (!train || p == 0.0) {
        if (mask_out) mask_out->assign(static_cast<std::size_t>(x.n) * x.c, T(1));
        return x;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    std::vector<T> mask(static_cast<std::size_t>(x.n) * x.c);
    for (auto& mv : mask) mv = rng.bernoulli(p) ? T(0) : keep_scale;
    Array4<T> y(x.n, x.c, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < x.c; ++c) {
            const T mv = mask[static_cast<std::size_t>(in) * x.c + c];
            const T* p_in = x.plane(in, c);
            T* p_out = y.plane(in, c);
            if (mv != T(0))
                for (std::size_t k = 0; k < plane; ++k) p_out[k] = mv * p_in[k];
        }
    if (mask_out) *mask_out = std::move(mask);
    return y;
}

template <typename T>
Array4<T> spatial_dropout_backward(const Array4<T>& gout, const std::vector<T>& mask) {
    Array4<T> g(gout.n, gout.c, gout.h, gout.w);
    const std::size_t plane = static_cast<std::size_t>(gout.h) * gout.w;
    for (int in = 0; in < gout.n; ++in)
        for (int c = 0; c < gout.c; ++c) {
            const T mv = mask[static_cast<std::size_t>(in) * gout.c + c];
            const T* p_in = gout.plane(in, c);
            T* p_out = g.plane(in, c);
            if (mv != T(0))
                for (std::size_t k = 0; k < plane; ++k) p_out[k] = mv * p_in[k];
        }
    return g;
}

// ---- Global average pooling ----------------------------------------------

template <typename T>
Mat<T> global_avg_pool(const Array4<T>& x) {
    if (x.h < 1 || x.w < 1) throw ValidationError("gap: empty spatial dims");
    Mat<T> y(x.n, x.c);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < x.c; ++c) {
            const T* p = x.plane(in, c);
            T s = T(0);
            for (std::size_t k = 0; k < plane; ++k) s += p[k];
            y.at(in, c) = s / static_cast<T>(plane);
        }
    return y;
}

template <typename T>
Array4<T> global_avg_pool_backward(const Mat<T>& gout, int h, int w) {
    Array4<T> g(gout.rows, gout.cols, h, w);
    const T scale = T(1) / static_cast<T>(static_cast<std::size_t>(h) * w);
    for (int in = 0; in < gout.rows; ++in)
        for (int c = 0; c < gout.cols; ++c) {
            T* p = g.plane(in, c);
            const T v = gout.at(in, c) * scale;
            for (std::size_t k = 0; k < static_cast<std::size_t>(h) * w; ++k) p[k] = v;
        }
    return g;
}

// ---- Linear head ----------------------------------------------------------

// y = x W^T + b with W of shape (out, in).
template <typename T>
Mat<T> linear_forward(const Mat<T>& x, const Mat<T>& w, const std::vector<T>& b) {
    if (x.cols != w.cols) throw ValidationError("linear: input width mismatch");
    Mat<T> y(x.rows, w.rows);
    for (int r = 0; r < x.rows; ++r) {
        const T* xr = x.row(r);
        for (int o = 0; o < w.rows; ++o) {
            const T* wr = w.row(o);
            T s = b[static_cast<std::size_t>(o)];
            for (int k = 0; k < x.cols; ++k) s += xr[k] * wr[k];
            y.at(r, o) = s;
        }
    }
    return y;
}

template <typename T>
struct LinearGrads {
    Mat<T> x;
    Mat<T> w;
    std::vector<T> b;
};

template <typename T>
LinearGrads<T> linear_backward(const Mat<T>& gout, const Mat<T>& x, const Mat<T>& w) {
    LinearGrads<T> g;
    g.x = Mat<T>(x.rows, x.cols);
    g.w = Mat<T>(w.rows, w.cols);
    g.b.assign(static_cast<std::size_t>(w.rows), T(0));
    for (int r = 0; r < x.rows; ++r) {
        const T* go = gout.row(r);
        const T* xr = x.row(r);
        T* gx = g.x.row(r);
        for (int o = 0; o < w.rows; ++o) {
            const T gv = go[o];
            g.b[static_cast<std::size_t>(o)] += gv;
            const T* wr = w.row(o);
            T* gw = g.w.row(o);
            for (int k = 0; k < x.cols; ++k) {
                gw[k] += gv * xr[k];
                gx[k] += gv * wr[k];
            }
        }
    }
    return g;
}

// ---- Softmax cross-entropy -------------------------------------------------

template <typename T>
Mat<T> softmax(const Mat<T>& logits) {
    Mat<T> p(logits.rows, logits.cols);
    for (int r = 0; r < logits.rows; ++r) {
        const T* lr = logits.row(r);
        T mx = lr[0];
        for (int k = 1; k < logits.cols; ++k) mx = std::max(mx, lr[k]);
        T sum = T(0);
        T* pr = p.row(r);
        for (int k = 0; k < logits.cols; ++k) {
            pr[k] = std::exp(lr[k] - mx);
            sum += pr[k];
        }
        for (int k = 0; k < logits.cols; ++k) pr[k] /= sum;
    }
    return p;
}

template <typename T>
struct SoftmaxLoss {
    double loss = 0.0;
    Mat<T> grad;  // d(mean loss)/d(logits)
};

// Mean cross-entropy with log-sum-exp stabilization; grad = (softmax - onehot)/N.
template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const Mat<T>& logits, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != logits.rows)
        throw ValidationError("cross-entropy: label count mismatch");
    SoftmaxLoss<T> out;
    out.grad = Mat<T>(logits.rows, logits.cols);
    double total = 0.0;
    const T inv_n = T(1) / static_cast<T>(logits.rows);
    for (int r = 0; r < logits.rows; ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        if (y < 0 || y >= logits.cols)
            throw ValidationError("cross-entropy: label " + std::to_string(y) +
                                  " outside 0.." + std::to_string(logits.cols - 1));
        const T* lr = logits.row(r);
        T mx = lr[0];
        for (int k = 1; k < logits.cols; ++k) mx = std::max(mx, lr[k]);
        double sum = 0.0;
        for (int k = 0; k < logits.cols; ++k) sum += std::exp(static_cast<double>(lr[k] - mx));
        const double lse = static_cast<double>(mx) + std::log(sum);
        total += lse - static_cast<double>(lr[y]);
        T* gr = out.grad.row(r);
        for (int k = 0; k < logits.cols; ++k) {
            const T p = static_cast<T>(std::exp(static_cast<double>(lr[k]) - lse));
            gr[k] = (p - (k == y ? T(1) : T(0))) * inv_n;
        }
    }
    out.loss = total / logits.rows;
    return out;
}

// ---- Adam -------------------------------------------------------------------

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected step on a single parameter block. The step counter is
// owned by the caller and advanced once per optimizer step, not per block.
template <typename T>
void adam_update(std::vector<T>& params, const std::vector<T>& grads, std::vector<T>& m,
                 std::vector<T>& v, long step, const AdamHyper& hp, const std::string& name) {
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
        throw ValidationError("adam: size mismatch in block " + name);
    for (T g : grads)
        if (!std::isfinite(static_cast<double>(g)))
            throw ValidationError("adam: non-finite gradient in block " + name);
    const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
    const T corr1 = static_cast<T>(1.0 - std::pow(hp.beta1, static_cast<double>(step)));
    const T corr2 = static_cast<T>(1.0 - std::pow(hp.beta2, static_cast<double>(step)));
    const T lr = static_cast<T>(hp.lr);
    const T eps = static_cast<T>(hp.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        m[k] = b1 * m[k] + (T(1) - b1) * grads[k];
        v[k] = b2 * v[k] + (T(1) - b2) * grads[k] * grads[k];
        const T mhat = m[k] / corr1;
        const T vhat = v[k] / corr2;
        params[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace cropnet
