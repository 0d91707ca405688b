#pragma once

#include <cstddef>
#include <vector>

#include "cropnet/errors.hpp"

namespace cropnet {

// Natural cubic spline (zero second derivative at both ends) through strictly
// increasing knots. Two knots degenerate to a straight line.
class CubicSpline {
public:
    CubicSpline(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n)
            throw ValidationError("spline: need >= 2 knots with matching ordinates");
        for (std::size_t i = 1; i < n; ++i)
            if (x_[i] <= x_[i - 1])
                throw ValidationError("spline: knot abscissae must strictly increase");
        m_.assign(n, 0.0);
        if (n == 2) return;

        // Thomas algorithm on the tridiagonal system for second derivatives.
        std::vector<double> diag(n, 0.0), rhs(n, 0.0), upper(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1];
            const double h1 = x_[i + 1] - x_[i];
            diag[i] = 2.0 * (h0 + h1);
            upper[i] = h1;
            rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
        }
        for (std::size_t i = 2; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1];  // lower coefficient of row i
            const double w = h0 / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
            if (i == 1) break;
        }
    }

    double operator()(double x) const {
        const std::size_t n = x_.size();
        std::size_t j = 0;
        if (x <= x_.front()) {
            j = 0;
        } else if (x >= x_.back()) {
            j = n - 2;
        } else {
            std::size_t lo = 0, hi = n - 1;
            while (hi - lo > 1) {
                const std::size_t mid = (lo + hi) / 2;
                (x_[mid] <= x ? lo : hi) = mid;
            }
            j = lo;
        }
        const double h = x_[j + 1] - x_[j];
        const double a = (x_[j + 1] - x) / h;
        const double b = (x - x_[j]) / h;
        return a * y_[j] + b * y_[j + 1] +
               ((a * a * a - a) * m_[j] + (b * b * b - b) * m_[j + 1]) * h * h / 6.0;
    }

private:
    std::vector<double> x_, y_, m_;  // m_ holds second derivatives
};

}  // namespace cropnet
