#pragma once

#include <cstdint>
#include <vector>

#include "cropnet/errors.hpp"

namespace cropnet {

// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
    int k = 0;
    std::vector<std::int64_t> counts;

    explicit ConfusionMatrix(int k_ = 0) : k(k_), counts(static_cast<std::size_t>(k_) * k_, 0) {}

    std::int64_t& at(int t, int p) { return counts[static_cast<std::size_t>(t) * k + p]; }
    std::int64_t at(int t, int p) const { return counts[static_cast<std::size_t>(t) * k + p]; }

    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }

    void add(const ConfusionMatrix& o) {
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    }
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                        const std::vector<int>& y_pred, int k,
                                        const std::vector<bool>* excluded = nullptr) {
    if (y_true.size() != y_pred.size())
        throw ValidationError("confusion: prediction count does not match truth count");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (excluded && (*excluded)[i]) continue;
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || t >= k || p < 0 || p >= k)
            throw ValidationError("confusion: label outside 0.." + std::to_string(k - 1));
        ++cm.at(t, p);
    }
    return cm;
}

struct Metrics {
    double oa = 0.0;   // percent
    double mf1 = 0.0;  // percent
    std::vector<double> per_class_f1;      // percent; -1 when class absent everywhere
    std::vector<double> per_class_recall;  // percent; -1 when class has no truth rows
};

// OA = 100 * trace / total. Per-class F1 with the 0/0 convention F1 = 0; the
// macro mean skips classes absent from both truth and prediction so schema
// padding does not drag the score.
inline Metrics metrics(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    if (total == 0) throw ValidationError("metrics: empty confusion matrix");
    Metrics out;
    std::int64_t diag = 0;
    for (int i = 0; i < cm.k; ++i) diag += cm.at(i, i);
    out.oa = 100.0 * static_cast<double>(diag) / static_cast<double>(total);

    out.per_class_f1.assign(static_cast<std::size_t>(cm.k), -1.0);
    out.per_class_recall.assign(static_cast<std::size_t>(cm.k), -1.0);
    double f1_sum = 0.0;
    int f1_classes = 0;
    for (int i = 0; i < cm.k; ++i) {
        std::int64_t row = 0, col = 0;
        for (int j = 0; j < cm.k; ++j) {
            row += cm.at(i, j);
            col += cm.at(j, i);
        }
        if (row > 0)
            out.per_class_recall[static_cast<std::size_t>(i)] =
                100.0 * static_cast<double>(cm.at(i, i)) / static_cast<double>(row);
        if (row == 0 && col == 0) continue;
        const double p = col > 0 ? static_cast<double>(cm.at(i, i)) / static_cast<double>(col) : 0.0;
        const double r = row > 0 ? static_cast<double>(cm.at(i, i)) / static_cast<double>(row) : 0.0;
        const double f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        out.per_class_f1[static_cast<std::size_t>(i)] = 100.0 * f1;
        f1_sum += f1;
        ++f1_classes;
    }
    out.mf1 = f1_classes > 0 ? 100.0 * f1_sum / f1_classes : 0.0;
    return out;
}

}  // namespace cropnet
