#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cropnet/model.hpp"
#include "cropnet/nn.hpp"

namespace cropnet {

// Central finite-difference verification of the analytic gradients, run in
// double precision. Each check returns the worst relative error over every
// parameter and input element.

namespace detail {

struct GradCheckProblem {
    std::function<double()> loss;
    std::function<std::vector<std::vector<double>>()> analytic;  // one per block
    std::vector<std::vector<double>*> blocks;
};

inline double max_rel_error(GradCheckProblem& p, double h = 1e-5) {
    const auto analytic = p.analytic();
    double worst = 0.0;
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        auto& vec = *p.blocks[b];
        for (std::size_t i = 0; i < vec.size(); ++i) {
            const double keep = vec[i];
            vec[i] = keep + h;
            const double up = p.loss();
            vec[i] = keep - h;
            const double down = p.loss();
            vec[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic[b][i];
            const double denom = std::max({std::abs(a), std::abs(fd), 1e-4});
            worst = std::max(worst, std::abs(a - fd) / denom);
        }
    }
    return worst;
}

inline Array4<double> random_array(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
    Array4<double> a(n, c, h, w);
    for (auto& v : a.v) v = rng.normal(0.0, scale);
    return a;
}

}  // namespace detail

// Loss = sum(R .* conv(x, w, b)) with fixed random R.
inline double gradient_check_conv(int n, int c_in, int c_out, int h, int w, int kw, int stride,
                                  std::uint64_t seed) {
    Rng rng = Rng::stream(seed, hash_string("gradcheck.conv"));
    auto x = detail::random_array(n, c_in, h, w, rng);
    auto kernel = detail::random_array(c_out, c_in, 3, kw, rng, 0.5);
    std::vector<double> bias(static_cast<std::size_t>(c_out));
    for (auto& v : bias) v = rng.normal(0.0, 0.1);
    const int sw = kw == 1 ? 1 : stride;
    auto r = detail::random_array(n, c_out, conv_out_dim(h, 3, stride), conv_out_dim(w, kw, sw), rng);

    detail::GradCheckProblem p;
    p.loss = [&]() {
        auto y = conv_forward(x, kernel, bias, stride, sw);
        double s = 0.0;
        for (std::size_t i = 0; i < y.v.size(); ++i) s += r.v[i] * y.v[i];
        return s;
    };
    p.analytic = [&]() {
        auto g = conv_backward(r, x, kernel, stride, sw);
        return std::vector<std::vector<double>>{g.x.v, g.w.v, g.b};
    };
    p.blocks = {&x.v, &kernel.v, &bias};
    return detail::max_rel_error(p);
}

// Train-mode batch normalization, gradients through the batch statistics.
inline double gradient_check_batchnorm(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, hash_string("gradcheck.bn"));
    auto x = detail::random_array(n, c, h, w, rng);
    std::vector<double> gamma(static_cast<std::size_t>(c)), beta(static_cast<std::size_t>(c));
    for (auto& v : gamma) v = 1.0 + 0.2 * rng.normal();
    for (auto& v : beta) v = 0.1 * rng.normal();
    auto r = detail::random_array(n, c, h, w, rng);

    detail::GradCheckProblem p;
    p.loss = [&]() {
        std::vector<double> rm(static_cast<std::size_t>(c), 0.0), rv(static_cast<std::size_t>(c), 1.0);
        auto y = batchnorm_forward(x, gamma, beta, rm, rv, true, 0.1, 1e-5,
                                   static_cast<BatchNormCache<double>*>(nullptr), false);
        double s = 0.0;
        for (std::size_t i = 0; i < y.v.size(); ++i) s += r.v[i] * y.v[i];
        return s;
    };
    p.analytic = [&]() {
        std::vector<double> rm(static_cast<std::size_t>(c), 0.0), rv(static_cast<std::size_t>(c), 1.0);
        BatchNormCache<double> cache;
        batchnorm_forward(x, gamma, beta, rm, rv, true, 0.1, 1e-5, &cache, false);
        auto g = batchnorm_backward(r, x, gamma, cache);
        return std::vector<std::vector<double>>{g.x.v, g.gamma, g.beta};
    };
    p.blocks = {&x.v, &gamma, &beta};
    return detail::max_rel_error(p);
}

inline double gradient_check_linear(int n, int c_in, int c_out, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, hash_string("gradcheck.linear"));
    Mat<double> x(n, c_in), w(c_out, c_in), r(n, c_out);
    for (auto& v : x.v) v = rng.normal();
    for (auto& v : w.v) v = rng.normal(0.0, 0.5);
    for (auto& v : r.v) v = rng.normal();
    std::vector<double> b(static_cast<std::size_t>(c_out));
    for (auto& v : b) v = rng.normal(0.0, 0.1);

    detail::GradCheckProblem p;
    p.loss = [&]() {
        auto y = linear_forward(x, w, b);
        double s = 0.0;
        for (std::size_t i = 0; i < y.v.size(); ++i) s += r.v[i] * y.v[i];
        return s;
    };
    p.analytic = [&]() {
        auto g = linear_backward(r, x, w);
        return std::vector<std::vector<double>>{g.x.v, g.w.v, g.b};
    };
    p.blocks = {&x.v, &w.v, &b};
    return detail::max_rel_error(p);
}

inline double gradient_check_softmax(int n, int k, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, hash_string("gradcheck.softmax"));
    Mat<double> logits(n, k);
    for (auto& v : logits.v) v = rng.normal();
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = rng.uniform_int(0, k - 1);

    detail::GradCheckProblem p;
    p.loss = [&]() { return softmax_cross_entropy(logits, labels).loss; };
    p.analytic = [&]() {
        auto sl = softmax_cross_entropy(logits, labels);
        return std::vector<std::vector<double>>{sl.grad.v};
    };
    p.blocks = {&logits.v};
    return detail::max_rel_error(p);
}

// conv -> BN(train) -> ReLU, re-seeded until all pre-activations sit clear of
// the ReLU kink so the finite differences are valid.
inline double gradient_check_conv_bn_relu(int n, int c_in, int c_out, int h, int w,
                                          std::uint64_t seed) {
    for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
        Rng rng = Rng::stream(seed + attempt, hash_string("gradcheck.stack"));
        auto x = detail::random_array(n, c_in, h, w, rng);
        auto kernel = detail::random_array(c_out, c_in, 3, 3, rng, 0.5);
        std::vector<double> bias(static_cast<std::size_t>(c_out), 0.0);
        std::vector<double> gamma(static_cast<std::size_t>(c_out), 1.0);
        std::vector<double> beta(static_cast<std::size_t>(c_out));
        for (auto& v : beta) v = 0.3 * rng.normal();
        auto r = detail::random_array(n, c_out, conv_out_dim(h, 3, 1), conv_out_dim(w, 3, 1), rng);

        auto forward = [&](BatchNormCache<double>* cache, Array4<double>* z_out,
                           Array4<double>* bn_out) {
            auto z = conv_forward(x, kernel, bias, 1, 1);
            std::vector<double> rm(static_cast<std::size_t>(c_out), 0.0),
                rv(static_cast<std::size_t>(c_out), 1.0);
            auto bn = batchnorm_forward(z, gamma, beta, rm, rv, true, 0.1, 1e-5, cache, false);
            if (z_out) *z_out = z;
            if (bn_out) *bn_out = bn;
            return relu_forward(bn);
        };

        Array4<double> bn_probe;
        forward(nullptr, nullptr, &bn_probe);
        double kink = 1e9;
        for (double v : bn_probe.v) kink = std::min(kink, std::abs(v));
        if (kink < 1e-3) continue;

        detail::GradCheckProblem p;
        p.loss = [&]() {
            auto y = forward(nullptr, nullptr, nullptr);
            double s = 0.0;
            for (std::size_t i = 0; i < y.v.size(); ++i) s += r.v[i] * y.v[i];
            return s;
        };
        p.analytic = [&]() {
            BatchNormCache<double> cache;
            Array4<double> z, bn;
            forward(&cache, &z, &bn);
            auto g1 = relu_backward(r, bn);
            auto g2 = batchnorm_backward(g1, z, gamma, cache);
            auto g3 = conv_backward(g2.x, x, kernel, 1, 1);
            return std::vector<std::vector<double>>{g3.x.v, g3.w.v, g3.b, g2.gamma, g2.beta};
        };
        p.blocks = {&x.v, &kernel.v, &bias, &gamma, &beta};
        return detail::max_rel_error(p);
    }
    throw ValidationError("gradient check: could not find kink-free seed");
}

// Full CropNet loss in double precision with dropout disabled. Checks every
// trainable block plus the input batch.
inline double gradient_check_cropnet(CropNetConfig cfg, int batch, std::uint64_t seed) {
    cfg.dropout_p = 0.0;
    for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
        auto model = build_cropnet<double>(cfg, seed + attempt);
        Rng rng = Rng::stream(seed + attempt, hash_string("gradcheck.cropnet"));
        Array4<double> x(batch, 1, cfg.input_h, cfg.input_w);
        for (auto& v : x.v) v = 0.5 + 0.25 * rng.normal();
        std::vector<int> labels(static_cast<std::size_t>(batch));
        for (auto& l : labels) l = rng.uniform_int(0, cfg.n_classes - 1);

        ForwardOpts opts;
        opts.train = true;
        opts.update_running_stats = false;

        ForwardCache<double> probe;
        cropnet_forward(model, x, opts, &probe);
        double kink = 1e9;
        for (const auto& bn : probe.bn_out)
            for (double v : bn.v) kink = std::min(kink, std::abs(v));
        if (kink < 1e-3) continue;

        detail::GradCheckProblem p;
        p.loss = [&]() {
            Mat<double> logits = cropnet_forward(model, x, opts);
            return softmax_cross_entropy(logits, labels).loss;
        };
        p.analytic = [&]() {
            ForwardCache<double> cache;
            Mat<double> logits = cropnet_forward(model, x, opts, &cache);
            auto sl = softmax_cross_entropy(logits, labels);
            auto grads = cropnet_backward(model, cache, sl.grad);
            std::vector<std::vector<double>> out = std::move(grads.blocks);
            out.push_back(std::move(grads.input.v));
            return out;
        };
        p.blocks.clear();
        model.for_each_param([&](const std::string&, std::vector<double>& v) {
            p.blocks.push_back(&v);
        });
        p.blocks.push_back(&x.v);
        return detail::max_rel_error(p);
    }
    throw ValidationError("gradient check: could not find kink-free seed");
}

}  // namespace cropnet
