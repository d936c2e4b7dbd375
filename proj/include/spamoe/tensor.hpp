#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "spamoe/common.hpp"

namespace spamoe {

/// Real H x W spatial field, row-major.
struct Field2D {
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Field2D() = default;
    Field2D(int height, int width, double fill = 0.0)
        : h(height), w(width), v(static_cast<std::size_t>(height) * width, fill) {
        if (height < 2 || width < 2)
            throw InvalidInput("Field2D requires at least a 2x2 grid");
    }

    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * w + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * w + j]; }
    std::size_t size() const { return v.size(); }

    bool finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

/// Complex H x W spectrum, centered: the DC bin lives at (h/2, w/2).
struct Spectrum2D {
    int h = 0;
    int w = 0;
    std::vector<std::complex<double>> v;

    Spectrum2D() = default;
    Spectrum2D(int height, int width)
        : h(height), w(width), v(static_cast<std::size_t>(height) * width) {
        if (height < 2 || width < 2)
            throw InvalidInput("Spectrum2D requires at least a 2x2 grid");
    }

    std::complex<double>& at(int i, int j) { return v[static_cast<std::size_t>(i) * w + j]; }
    const std::complex<double>& at(int i, int j) const {
        return v[static_cast<std::size_t>(i) * w + j];
    }
    std::size_t size() const { return v.size(); }
};

/// Real C x H x W stack of feature planes, row-major within each plane.
struct LatentTensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    LatentTensor() = default;
    LatentTensor(int channels, int height, int width, double fill = 0.0)
        : c(channels),
          h(height),
          w(width),
          v(static_cast<std::size_t>(channels) * height * width, fill) {
        if (channels < 1) throw InvalidInput("LatentTensor requires at least one channel");
        if (height < 2 || width < 2)
            throw InvalidInput("LatentTensor requires at least a 2x2 plane");
    }

    double& at(int ch, int i, int j) {
        return v[(static_cast<std::size_t>(ch) * h + i) * w + j];
    }
    double at(int ch, int i, int j) const {
        return v[(static_cast<std::size_t>(ch) * h + i) * w + j];
    }
    std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
    std::size_t size() const { return v.size(); }

    const double* plane(int ch) const { return v.data() + static_cast<std::size_t>(ch) * plane_size(); }
    double* plane(int ch) { return v.data() + static_cast<std::size_t>(ch) * plane_size(); }

    Field2D channel(int ch) const {
        Field2D f(h, w);
        const double* p = plane(ch);
        std::copy(p, p + plane_size(), f.v.begin());
        return f;
    }

    bool finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

/// Shots x time x receivers observation stack.
struct Observation {
    int shots = 0;
    int steps = 0;
    int receivers = 0;
    std::vector<double> v;

    Observation() = default;
    Observation(int n_shots, int n_steps, int n_receivers, double fill = 0.0)
        : shots(n_shots),
          steps(n_steps),
          receivers(n_receivers),
          v(static_cast<std::size_t>(n_shots) * n_steps * n_receivers, fill) {
        if (n_shots < 1 || n_steps < 1 || n_receivers < 1)
            throw InvalidInput("Observation requires positive dimensions");
    }

    double& at(int s, int t, int r) {
        return v[(static_cast<std::size_t>(s) * steps + t) * receivers + r];
    }
    double at(int s, int t, int r) const {
        return v[(static_cast<std::size_t>(s) * steps + t) * receivers + r];
    }
    std::size_t size() const { return v.size(); }
};

inline void require_same_shape(const Field2D& a, const Field2D& b, const char* what) {
    if (a.h != b.h || a.w != b.w) throw InvalidInput(std::string(what) + ": shape mismatch");
}

inline double max_abs_diff(const Field2D& a, const Field2D& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

}  // namespace spamoe
