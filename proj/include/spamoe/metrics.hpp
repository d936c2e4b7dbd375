#pragma once

#include <cmath>
#include <vector>

#include "spamoe/tensor.hpp"

namespace spamoe {

struct EvalMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double ssim = 0.0;
};

namespace ssim_detail {

/// Normalized Gaussian window, sigma 1.5, nominal extent 11x11 (truncated to
/// the largest odd size the grid admits).
inline std::vector<double> gaussian_window(int n, double sigma = 1.5) {
    std::vector<double> w(static_cast<std::size_t>(n) * n);
    int c = n / 2;
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double d2 = (i - c) * double(i - c) + (j - c) * double(j - c);
            w[static_cast<std::size_t>(i) * n + j] = std::exp(-d2 / (2.0 * sigma * sigma));
            sum += w[static_cast<std::size_t>(i) * n + j];
        }
    for (double& x : w) x /= sum;
    return w;
}

inline int window_size(int h, int w) {
    int n = std::min({11, h, w});
    if (n % 2 == 0) --n;
    return std::max(n, 1);
}

}  // namespace ssim_detail

/// Mean SSIM over all fully interior window positions, Gaussian window of
/// sigma 1.5, stabilizers C1 = (0.01 L)^2 and C2 = (0.03 L)^2 for a unit
/// dynamic range L = 1.
inline double ssim(const Field2D& a, const Field2D& b) {
    require_same_shape(a, b, "ssim");
    const int n = ssim_detail::window_size(a.h, a.w);
    const auto win = ssim_detail::gaussian_window(n);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    long count = 0;
    for (int i0 = 0; i0 + n <= a.h; ++i0)
        for (int j0 = 0; j0 + n <= a.w; ++j0) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    double wv = win[static_cast<std::size_t>(i) * n + j];
                    double x = a.at(i0 + i, j0 + j), y = b.at(i0 + i, j0 + j);
                    mx += wv * x;
                    my += wv * y;
                    sxx += wv * x * x;
                    syy += wv * y * y;
                    sxy += wv * x * y;
                }
            double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / count;
}

inline EvalMetrics eval_metrics(const Field2D& pred, const Field2D& truth) {
    require_same_shape(pred, truth, "eval_metrics");
    EvalMetrics m;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        double d = pred.v[i] - truth.v[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    m.mae = abs_sum / pred.v.size();
    m.rmse = std::sqrt(sq_sum / pred.v.size());
    m.ssim = ssim(pred, truth);
    return m;
}

}  // namespace spamoe
