#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cropnet/errors.hpp"

// Loop-level parallelism. Every parallel loop writes disjoint output slices
// and keeps per-slice accumulation order fixed, so results are bitwise
// identical for any thread count.
#if defined(_OPENMP)
#define CROPNET_OMP_FOR _Pragma("omp parallel for schedule(static)")
#else
#define CROPNET_OMP_FOR
#endif

namespace cropnet {

// Dense NCHW tensor. W = 1 is the 1D-sequence mode: the H axis is then the
// contiguous one, which the conv kernels exploit.
template <typename T>
struct Array4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Array4() = default;
    Array4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

    std::size_t size() const { return v.size(); }

    std::size_t index(int in, int ic, int ih, int iw) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
    }
    T& at(int in, int ic, int ih, int iw) { return v[index(in, ic, ih, iw)]; }
    T at(int in, int ic, int ih, int iw) const { return v[index(in, ic, ih, iw)]; }

    T* plane(int in, int ic) { return v.data() + (static_cast<std::size_t>(in) * c + ic) * h * w; }
    const T* plane(int in, int ic) const {
        return v.data() + (static_cast<std::size_t>(in) * c + ic) * h * w;
    }

    bool same_shape(const Array4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

template <typename T>
struct Mat {
    int rows = 0, cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, T(0)) {}

    T& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    T at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    T* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const T* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
};

template <typename T>
void check_finite(const std::vector<T>& v, const char* what) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x)))
            throw ValidationError(std::string("non-finite value in ") + what);
}

}  // namespace cropnet
