#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "cropnet/checkpoint.hpp"
#include "cropnet/gradcam.hpp"
#include "cropnet/gradcheck.hpp"
#include "cropnet/model.hpp"

using namespace cropnet;

namespace {

// Closed-form count, independent of the enumeration in the library:
// convs sum C_in*C_out*kh*kw + C_out, BN adds 2*C_out each, head adds
// widths[3]*K + K.
std::size_t closed_form_count(const std::array<int, 4>& widths, int classes, int kernel_w) {
    std::size_t total = 0;
    int prev = 1;
    for (int blk = 0; blk < 4; ++blk) {
        const int w = widths[static_cast<std::size_t>(blk)];
        total += static_cast<std::size_t>(prev) * w * 3 * kernel_w + w;  // first conv
        total += 2 * static_cast<std::size_t>(w);                       // its BN
        total += static_cast<std::size_t>(w) * w * 3 * kernel_w + w;    // second conv
        total += 2 * static_cast<std::size_t>(w);                       // its BN
        prev = w;
    }
    total += static_cast<std::size_t>(widths[3]) * classes + classes;
    return total;
}

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("default 2D 7-class budget is exactly 4,691,655") {
    CropNetConfig cfg;  // widths 64/128/256/512, 7 classes, 3x3 kernels
    CHECK(parameter_count(cfg) == 4691655u);
    CHECK(closed_form_count(cfg.widths, cfg.n_classes, 3) == 4691655u);
}

TEST_CASE("enumeration agrees with the closed form on small configs") {
    CropNetConfig cfg;
    cfg.widths = {4, 4, 4, 4};
    cfg.n_classes = 2;
    cfg.input_w = 8;
    CHECK(parameter_count(cfg) == closed_form_count(cfg.widths, 2, 3));

    CropNetConfig one_d;
    one_d.variant = CropNetConfig::Variant::k1D;
    one_d.input_h = 35;
    one_d.input_w = 1;
    one_d.widths = {16, 32, 64, 128};
    one_d.n_classes = 5;
    CHECK(parameter_count(one_d) == closed_form_count(one_d.widths, 5, 1));

    // the enumeration walk across an actual model lands on the same number
    auto m = build_cropnet<float>(one_d, 3);
    std::size_t walked = 0;
    m.for_each_param([&](const std::string&, std::vector<float>& p) { walked += p.size(); });
    CHECK(walked == parameter_count(one_d));
}

TEST_CASE("same seed builds bitwise-identical weights") {
    CropNetConfig cfg;
    cfg.widths = {8, 8, 8, 8};
    cfg.n_classes = 3;
    cfg.input_w = 16;
    auto a = build_cropnet<float>(cfg, 42);
    auto b = build_cropnet<float>(cfg, 42);
    for (int k = 0; k < kConvLayers; ++k)
        CHECK(a.conv_w[static_cast<std::size_t>(k)].v == b.conv_w[static_cast<std::size_t>(k)].v);
    CHECK(a.head_w.v == b.head_w.v);
    auto c = build_cropnet<float>(cfg, 43);
    CHECK(a.conv_w[0].v != c.conv_w[0].v);
}

TEST_CASE("input too small for two stride-2 stages is rejected") {
    CropNetConfig cfg;
    cfg.input_h = 3;
    cfg.input_w = 43;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("spatial trace of the 10x43 input") {
    CropNetConfig cfg;
    auto trace = cropnet_shape_trace(cfg);
    REQUIRE(trace.size() == 9);
    CHECK(trace[0] == std::pair{10, 43});
    CHECK(trace[1] == std::pair{5, 22});   // block 1 downsamples
    CHECK(trace[4] == std::pair{5, 22});   // block 2 keeps size
    CHECK(trace[5] == std::pair{3, 11});   // block 3 downsamples
    CHECK(trace[8] == std::pair{3, 11});   // block 4 keeps size

    // the real forward pass produces the same feature-map size
    CropNetConfig small = cfg;
    small.widths = {4, 4, 4, 4};
    auto m = build_cropnet<float>(small, 1);
    Array4<float> x(1, 1, 10, 43);
    ForwardCache<float> cache;
    ForwardOpts opts;
    cropnet_forward(m, x, opts, &cache);
    CHECK(cache.features.h == 3);
    CHECK(cache.features.w == 11);
}

TEST_CASE("eval forward is deterministic and dropout-free") {
    CropNetConfig cfg;
    cfg.widths = {8, 8, 8, 8};
    cfg.n_classes = 4;
    cfg.input_w = 16;
    cfg.dropout_p = 0.5;
    auto m = build_cropnet<float>(cfg, 7);
    Array4<float> x(2, 1, 10, 16);
    Rng rng = Rng::stream(8);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform());
    ForwardOpts opts;  // eval
    auto l1 = cropnet_forward(m, x, opts);
    auto l2 = cropnet_forward(m, x, opts);
    CHECK(l1.v == l2.v);
}

TEST_CASE("zero input with a zeroed head yields uniform probabilities") {
    CropNetConfig cfg;
    cfg.widths = {4, 4, 4, 4};
    cfg.n_classes = 5;
    cfg.input_w = 12;
    auto m = build_cropnet<float>(cfg, 9);
    std::fill(m.head_w.v.begin(), m.head_w.v.end(), 0.0f);
    Array4<float> x(1, 1, 10, 12);
    auto p = predict(m, x);
    for (int k = 0; k < 5; ++k) CHECK(p.at(0, k) == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("zero epochs leave the model untouched") {
    CropNetConfig cfg;
    cfg.widths = {4, 4, 4, 4};
    cfg.n_classes = 2;
    cfg.input_w = 8;
    auto m = build_cropnet<float>(cfg, 5);
    auto before = m.conv_w[0].v;
    TrainData<float> data;
    data.count = 4;
    data.labels = {0, 1, 0, 1};
    data.features = [](std::size_t, std::uint64_t) { return Array4<float>(1, 1, 10, 8); };
    TrainHyper hp;
    hp.epochs = 0;
    auto hist = train_cropnet(m, data, hp, 1);
    CHECK(hist.empty());
    CHECK(m.conv_w[0].v == before);
    CHECK(m.adam_step == 0);
}

namespace {

// Two linearly separable blobs in feature space.
TrainData<float> separable_toy(int n_per_class, std::uint64_t seed) {
    TrainData<float> data;
    data.count = static_cast<std::size_t>(2 * n_per_class);
    auto features = std::make_shared<std::vector<Array4<float>>>();
    Rng rng = Rng::stream(seed, hash_string("toy"));
    for (int cls = 0; cls < 2; ++cls) {
        for (int i = 0; i < n_per_class; ++i) {
            Array4<float> x(1, 1, 10, 8);
            const float base = cls == 0 ? 0.2f : 0.8f;
            for (auto& v : x.v) v = base + 0.05f * static_cast<float>(rng.normal());
            features->push_back(std::move(x));
            data.labels.push_back(cls);
        }
    }
    data.features = [features](std::size_t i, std::uint64_t) { return (*features)[i]; };
    return data;
}

}  // namespace

TEST_CASE("separable toy data trains to at least 99 percent") {
    CropNetConfig cfg;
    cfg.widths = {4, 4, 4, 4};
    cfg.n_classes = 2;
    cfg.input_w = 8;
    cfg.dropout_p = 0.1;
    auto m = build_cropnet<float>(cfg, 3);
    auto data = separable_toy(20, 10);
    TrainHyper hp;
    hp.lr = 1e-3;
    hp.batch_size = 8;
    hp.epochs = 50;
    auto hist = train_cropnet(m, data, hp, 3);
    REQUIRE(hist.size() == 50);
    CHECK(hist.back().accuracy >= 0.99);
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
    CropNetConfig cfg;
    cfg.widths = {4, 4, 4, 4};
    cfg.n_classes = 2;
    cfg.input_w = 8;
    auto run = [&]() {
        auto m = build_cropnet<float>(cfg, 11);
        auto data = separable_toy(10, 4);
        TrainHyper hp;
        hp.lr = 1e-3;
        hp.batch_size = 8;
        hp.epochs = 5;
        train_cropnet(m, data, hp, 11);
        return m;
    };
    auto a = run();
    auto b = run();
    std::vector<std::vector<float>> pa, pb;
    a.for_each_param([&](const std::string&, std::vector<float>& p) { pa.push_back(p); });
    b.for_each_param([&](const std::string&, std::vector<float>& p) { pb.push_back(p); });
    CHECK(pa == pb);
    CHECK(a.bn_rmean[3] == b.bn_rmean[3]);
    CHECK(a.adam_m[0] == b.adam_m[0]);
}

TEST_CASE("predict is softmax of the eval forward, rows sum to 1") {
    CropNetConfig cfg;
    cfg.widths = {4, 4, 4, 4};
    cfg.n_classes = 3;
    cfg.input_w = 10;
    auto m = build_cropnet<float>(cfg, 21);
    Array4<float> x(3, 1, 10, 10);
    Rng rng = Rng::stream(22);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform());

    auto p = predict(m, x);
    for (int r = 0; r < 3; ++r) {
        float s = 0.0f;
        for (int k = 0; k < 3; ++k) s += p.at(r, k);
        CHECK(s == doctest::Approx(1.0f).epsilon(1e-6));
    }
    ForwardOpts opts;
    auto logits = cropnet_forward(m, x, opts);
    auto composed = softmax(logits);
    CHECK(p.v == composed.v);

    // argmax is invariant under adding a constant to every logit
    auto shifted = logits;
    for (auto& v : shifted.v) v += 3.5f;
    auto p2 = softmax(shifted);
    for (int r = 0; r < 3; ++r) {
        int a1 = 0, a2 = 0;
        for (int k = 1; k < 3; ++k) {
            if (p.at(r, k) > p.at(r, a1)) a1 = k;
            if (p2.at(r, k) > p2.at(r, a2)) a2 = k;
        }
        CHECK(a1 == a2);
    }
}

TEST_CASE("predict ignores the dropout probability") {
    CropNetConfig a_cfg;
    a_cfg.widths = {4, 4, 4, 4};
    a_cfg.n_classes = 3;
    a_cfg.input_w = 10;
    CropNetConfig b_cfg = a_cfg;
    b_cfg.dropout_p = 0.7;
    auto a = build_cropnet<float>(a_cfg, 77);
    auto b = build_cropnet<float>(b_cfg, 77);
    Array4<float> x(2, 1, 10, 10);
    Rng rng = Rng::stream(78);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform());
    CHECK(predict(a, x).v == predict(b, x).v);
}

TEST_CASE("grad_cam is invariant to positive rescaling of the class head row") {
    CropNetConfig cfg;
    cfg.widths = {8, 8, 8, 8};
    cfg.n_classes = 3;
    cfg.input_w = 20;
    auto m = build_cropnet<float>(cfg, 91);
    MedianFeature2D f;
    f.t = 20;
    Rng rng = Rng::stream(92);
    f.values.assign(200, 0.0);
    for (auto& v : f.values) v = rng.uniform();
    auto base = grad_cam(m, f, 2);
    for (int k = 0; k < cfg.widths[3]; ++k) m.head_w.at(2, k) *= 4.0f;
    auto scaled = grad_cam(m, f, 2);
    REQUIRE(base.values.size() == scaled.values.size());
    int base_arg = 0, scaled_arg = 0;
    for (std::size_t i = 0; i < base.values.size(); ++i) {
        CHECK(std::abs(base.values[i] - scaled.values[i]) < 1e-5);
        if (base.values[i] > base.values[static_cast<std::size_t>(base_arg)])
            base_arg = static_cast<int>(i);
        if (scaled.values[i] > scaled.values[static_cast<std::size_t>(scaled_arg)])
            scaled_arg = static_cast<int>(i);
    }
    CHECK(base_arg == scaled_arg);
}

TEST_CASE("full tiny model passes the finite-difference gate") {
    CropNetConfig cfg;
    cfg.widths = {2, 3, 4, 5};
    cfg.n_classes = 3;
    cfg.input_h = 10;
    cfg.input_w = 8;
    CHECK(gradient_check_cropnet(cfg, 2, 51) < 1e-5);
}

TEST_CASE("grad_cam shape, normalization, zero propagation") {
    CropNetConfig cfg;
    cfg.widths = {8, 8, 8, 8};
    cfg.n_classes = 3;
    cfg.input_w = 20;
    auto m = build_cropnet<float>(cfg, 31);
    MedianFeature2D f;
    f.t = 20;
    f.values.assign(200, 0.0);
    Rng rng = Rng::stream(32);
    for (auto& v : f.values) v = rng.uniform();
    auto map = grad_cam(m, f, 1);
    CHECK(map.rows == 10);
    CHECK(map.cols == 20);
    double mx = 0.0;
    for (double v : map.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
        mx = std::max(mx, v);
    }
    CHECK((mx == doctest::Approx(1.0) || mx == 0.0));

    MedianFeature2D zero;
    zero.t = 20;
    zero.values.assign(200, 0.0);
    // zero input: block biases are zero, BN running stats are identity, so
    // activations and the map vanish
    auto zmap = grad_cam(m, zero, 0);
    for (double v : zmap.values) CHECK(v == 0.0);

    CHECK_THROWS_AS(grad_cam(m, f, 7), ValidationError);
}

TEST_CASE("grad_cam finds a planted band row in at least 8 of 10 runs") {
    // Class 1's signal lives in exactly one band row; a third class carries an
    // equal bump elsewhere so the discrimination has to be spatial. The map is
    // taken at the first conv layer, whose taps keep band 0 in a single map
    // row.
    const int planted_band = 0;
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CropNetConfig cfg;
        cfg.widths = {8, 8, 8, 8};
        cfg.n_classes = 3;
        cfg.input_w = 20;
        cfg.dropout_p = 0.0;
        auto m = build_cropnet<float>(cfg, seed);

        auto features = std::make_shared<std::vector<Array4<float>>>();
        TrainData<float> data;
        Rng rng = Rng::stream(seed, hash_string("cam-data"));
        for (int cls = 0; cls < 3; ++cls) {
            for (int i = 0; i < 30; ++i) {
                Array4<float> x(1, 1, 10, 20);
                for (auto& v : x.v) v = 0.2f + 0.05f * static_cast<float>(rng.normal());
                if (cls == 1)
                    for (int col = 0; col < 20; ++col) x.at(0, 0, planted_band, col) += 0.5f;
                if (cls == 2)
                    for (int col = 0; col < 20; ++col) x.at(0, 0, 5, col) += 0.5f;
                features->push_back(std::move(x));
                data.labels.push_back(cls);
            }
        }
        data.count = features->size();
        data.features = [features](std::size_t i, std::uint64_t) { return (*features)[i]; };
        TrainHyper hp;
        hp.lr = 1e-3;
        hp.batch_size = 15;
        hp.epochs = 12;
        train_cropnet(m, data, hp, seed);

        // average the map over a few positive samples
        std::vector<double> row_sum(10, 0.0);
        for (int i = 30; i < 40; ++i) {
            MedianFeature2D f;
            f.t = 20;
            f.values.assign(200, 0.0);
            for (std::size_t k = 0; k < 200; ++k)
                f.values[k] = static_cast<double>((*features)[static_cast<std::size_t>(i)].v[k]);
            auto map = grad_cam(m, f, 1, 0);
            for (int b = 0; b < 10; ++b)
                for (int c = 0; c < 20; ++c) row_sum[static_cast<std::size_t>(b)] += map.at(b, c);
        }
        int arg = 0;
        for (int b = 1; b < 10; ++b)
            if (row_sum[static_cast<std::size_t>(b)] > row_sum[static_cast<std::size_t>(arg)])
                arg = b;
        if (arg == planted_band) ++hits;
    }
    CHECK(hits >= 8);
}

TEST_CASE("checkpoint round trip preserves predictions bitwise") {
    CropNetConfig cfg;
    cfg.widths = {8, 8, 8, 8};
    cfg.n_classes = 3;
    cfg.input_w = 16;
    auto m = build_cropnet<float>(cfg, 41);
    // give the optimizer state some content
    auto data = separable_toy(8, 6);
    TrainData<float> d2;
    d2.count = data.count;
    d2.labels.assign(data.count, 0);
    for (std::size_t i = 0; i < data.count; ++i) d2.labels[i] = data.labels[i] % 3;
    d2.features = [](std::size_t i, std::uint64_t) {
        Array4<float> x(1, 1, 10, 16);
        Rng rng = Rng::stream(i, hash_string("ckpt"));
        for (auto& v : x.v) v = static_cast<float>(rng.uniform());
        return x;
    };
    TrainHyper hp;
    hp.lr = 1e-3;
    hp.batch_size = 8;
    hp.epochs = 2;
    train_cropnet(m, d2, hp, 41);

    const std::string path = temp_file("cropnet_ckpt.bin");
    save_checkpoint(m, path);
    auto loaded = load_checkpoint<float>(path);

    Array4<float> x(4, 1, 10, 16);
    Rng rng = Rng::stream(42);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform());
    auto p1 = predict(m, x);
    auto p2 = predict(loaded, x);
    CHECK(p1.v == p2.v);
    CHECK(loaded.adam_step == m.adam_step);
    CHECK(loaded.adam_m[0] == m.adam_m[0]);
}

TEST_CASE("checkpoint error paths are distinct") {
    CropNetConfig cfg;
    cfg.widths = {4, 4, 4, 4};
    cfg.n_classes = 2;
    cfg.input_w = 8;
    auto m = build_cropnet<float>(cfg, 1);
    const std::string path = temp_file("cropnet_ckpt2.bin");
    save_checkpoint(m, path);

    // corrupt the magic
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    try {
        load_checkpoint<float>(path);
        FAIL("expected magic failure");
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }

    // truncate the payload
    save_checkpoint(m, path);
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 64);
    try {
        load_checkpoint<float>(path);
        FAIL("expected truncation failure");
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
}

TEST_CASE("checkpoint size follows the 3-copies-per-parameter arithmetic") {
    CropNetConfig cfg;
    cfg.widths = {8, 8, 8, 8};
    cfg.n_classes = 3;
    cfg.input_w = 16;
    auto m = build_cropnet<float>(cfg, 2);
    const std::string path = temp_file("cropnet_ckpt3.bin");
    save_checkpoint(m, path);

    std::size_t buffer_count = 0;
    m.for_each_buffer([&](const std::string&, std::vector<float>& v) { buffer_count += v.size(); });
    const std::size_t params = parameter_count(cfg);

    // header: 8 magic + 4 version + 8 manifest length
    std::ifstream in(path, std::ios::binary);
    in.seekg(12);
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    const std::uintmax_t expected = 20 + mlen + 4 * (3 * params + buffer_count);
    CHECK(std::filesystem::file_size(path) == expected);
}
