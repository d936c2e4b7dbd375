#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "spamoe/bands.hpp"
#include "spamoe/fft.hpp"
#include "spamoe/spectral.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

enum class FieldKind { layered, curved, fault, broadband };

inline FieldKind field_kind_from_string(const std::string& s) {
    if (s == "layered") return FieldKind::layered;
    if (s == "curved") return FieldKind::curved;
    if (s == "fault") return FieldKind::fault;
    if (s == "broadband") return FieldKind::broadband;
    throw InvalidConfig("unknown field kind: " + s);
}

/// Deterministic generator spec: same (spec, seed) gives a bit-identical field.
struct FieldSpec {
    FieldKind kind = FieldKind::layered;
    int h = 70;
    int w = 70;
    int layers = 5;            // layered/curved/fault
    double fault_throw = 6.0;  // rows of displacement across the fault line
    double curvature = 3.0;    // sinusoidal layer displacement, in rows
    double slope = 0.0;        // broadband radial power-spectrum slope
    std::uint64_t seed = 0;
};

namespace synthdetail {

inline void minmax_normalize(Field2D& f) {
    double lo = f.v[0], hi = f.v[0];
    for (double x : f.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    double range = hi - lo;
    if (range <= 0.0) {
        std::fill(f.v.begin(), f.v.end(), 0.0);
        return;
    }
    for (double& x : f.v) x = (x - lo) / range;
}

/// Depth-sorted layer speeds: velocity-like, increasing with depth.
inline std::vector<double> layer_values(int layers, Rng& rng) {
    std::vector<double> v(layers);
    for (double& x : v) x = uniform(rng, 1.5, 4.5);
    std::sort(v.begin(), v.end());
    return v;
}

inline int layer_of_row(double row, int h, int layers) {
    double t = row / h;
    int idx = static_cast<int>(std::floor(t * layers));
    return std::clamp(idx, 0, layers - 1);
}

}  // namespace synthdetail

inline Field2D gen_field(const FieldSpec& spec) {
    if (spec.h < 2 || spec.w < 2) throw InvalidInput("gen_field: grid too small");
    if (spec.layers < 1 || spec.layers > spec.h)
        throw InvalidInput("gen_field: layer count out of range");
    if (spec.fault_throw < 0.0 || spec.curvature < 0.0)
        throw InvalidInput("gen_field: negative displacement");
    Rng rng(spec.seed);
    Field2D f(spec.h, spec.w);
    switch (spec.kind) {
        case FieldKind::layered: {
            auto vals = synthdetail::layer_values(spec.layers, rng);
            for (int i = 0; i < spec.h; ++i) {
                double v = vals[synthdetail::layer_of_row(i, spec.h, spec.layers)];
                for (int j = 0; j < spec.w; ++j) f.at(i, j) = v;
            }
            break;
        }
        case FieldKind::curved: {
            auto vals = synthdetail::layer_values(spec.layers, rng);
            double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            double cycles = uniform(rng, 0.5, 1.5);
            for (int j = 0; j < spec.w; ++j) {
                double off = spec.curvature *
                             std::sin(2.0 * std::numbers::pi * cycles * j / spec.w + phase);
                for (int i = 0; i < spec.h; ++i) {
                    double row = std::clamp(i - off, 0.0, spec.h - 1.0);
                    f.at(i, j) = vals[synthdetail::layer_of_row(row, spec.h, spec.layers)];
                }
            }
            break;
        }
        case FieldKind::fault: {
            auto vals = synthdetail::layer_values(spec.layers, rng);
            double dip = uniform(rng, -0.8, 0.8);
            double intercept = uniform(rng, 0.3, 0.7) * spec.w;
            for (int i = 0; i < spec.h; ++i)
                for (int j = 0; j < spec.w; ++j) {
                    // one side of the dipping line is displaced upward
                    bool downthrown = j > intercept + dip * i;
                    double row = i - (downthrown ? spec.fault_throw : 0.0);
                    row = std::clamp(row, 0.0, spec.h - 1.0);
                    f.at(i, j) = vals[synthdetail::layer_of_row(row, spec.h, spec.layers)];
                }
            break;
        }
        case FieldKind::broadband: {
            Field2D noise(spec.h, spec.w);
            for (double& x : noise.v) x = normal(rng);
            Spectrum2D s = dft_centered(noise);
            RadialGrid grid = radial_grid(spec.h, spec.w);
            double r_min = 1.0 / std::max(spec.h, spec.w);
            for (std::size_t i = 0; i < s.v.size(); ++i)
                s.v[i] *= std::pow(std::max(grid.r.v[i], r_min), spec.slope / 2.0);
            f = idft_centered(s);
            break;
        }
    }
    synthdetail::minmax_normalize(f);
    return f;
}

enum class ObserveMode { identity, bandlimit, smear };

inline ObserveMode observe_mode_from_string(const std::string& s) {
    if (s == "identity") return ObserveMode::identity;
    if (s == "bandlimit") return ObserveMode::bandlimit;
    if (s == "smear") return ObserveMode::smear;
    throw InvalidConfig("unknown observe mode: " + s);
}

inline constexpr int kToyShots = 5;

/// Substitute forward map producing a gradeable observation stack: the field
/// (optionally low-passed or vertically integrated) tiled over kToyShots
/// shots with one receiver per column.
inline Observation toy_observe(const Field2D& y, ObserveMode mode, double bandlimit_cutoff = 0.2) {
    Field2D plane = y;
    if (mode == ObserveMode::bandlimit) {
        Spectrum2D s = dft_centered(y);
        RadialGrid grid = radial_grid(y.h, y.w);
        for (std::size_t i = 0; i < s.v.size(); ++i)
            if (grid.r.v[i] >= bandlimit_cutoff) s.v[i] = 0.0;
        plane = idft_centered(s);
    } else if (mode == ObserveMode::smear) {
        for (int j = 0; j < y.w; ++j) {
            double acc = 0.0;
            for (int i = 0; i < y.h; ++i) {
                acc += y.at(i, j);
                plane.at(i, j) = acc / y.h;
            }
        }
    }
    Observation obs(kToyShots, y.h, y.w);
    for (int s = 0; s < kToyShots; ++s)
        for (int t = 0; t < y.h; ++t)
            for (int r = 0; r < y.w; ++r) obs.at(s, t, r) = plane.at(t, r);
    return obs;
}

}  // namespace spamoe
