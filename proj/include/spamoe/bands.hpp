#pragma once

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "spamoe/fft.hpp"
#include "spamoe/spectral.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

enum class BandKind { soft, hard };

/// K radial band masks over a centered spectrum. Soft masks are the raw
/// Gaussians exp(-sharpness * (r - c_k)^2) around evenly spaced centers
/// c_k = k/(K-1); hard masks are the nearest-center indicator partition with
/// midpoint ties going to the lower band.
struct BandMaskSet {
    int h = 0;
    int w = 0;
    BandKind kind = BandKind::soft;
    double sharpness = 0.0;  // unused for hard masks
    std::vector<double> centers;
    std::vector<Field2D> masks;

    int bands() const { return static_cast<int>(masks.size()); }
};

inline std::vector<double> band_centers(int k) {
    if (k < 2) throw InvalidConfig("band masks require at least 2 bands");
    std::vector<double> c(k);
    for (int i = 0; i < k; ++i) c[i] = static_cast<double>(i) / (k - 1);
    return c;
}

inline BandMaskSet gaussian_band_masks(int h, int w, int k, double sharpness,
                                       bool normalized = false) {
    if (!(sharpness > 0.0)) throw InvalidConfig("gaussian_band_masks: sharpness must be > 0");
    BandMaskSet set;
    set.h = h;
    set.w = w;
    set.kind = BandKind::soft;
    set.sharpness = sharpness;
    set.centers = band_centers(k);
    RadialGrid grid = radial_grid(h, w);
    set.masks.reserve(k);
    for (int b = 0; b < k; ++b) {
        Field2D m(h, w);
        for (std::size_t i = 0; i < m.v.size(); ++i) {
            double d = grid.r.v[i] - set.centers[b];
            m.v[i] = std::exp(-sharpness * d * d);
        }
        set.masks.push_back(std::move(m));
    }
    if (normalized) {
        // Optional experiment mode: pointwise division by the mask sum.
        for (std::size_t i = 0; i < set.masks[0].v.size(); ++i) {
            double s = 0.0;
            for (int b = 0; b < k; ++b) s += set.masks[b].v[i];
            for (int b = 0; b < k; ++b) set.masks[b].v[i] /= s;
        }
    }
    return set;
}

inline BandMaskSet hard_band_masks(int h, int w, int k) {
    BandMaskSet set;
    set.h = h;
    set.w = w;
    set.kind = BandKind::hard;
    set.centers = band_centers(k);
    RadialGrid grid = radial_grid(h, w);
    for (int b = 0; b < k; ++b) set.masks.emplace_back(h, w, 0.0);
    for (std::size_t i = 0; i < grid.r.v.size(); ++i) {
        int best = 0;
        double best_d = std::abs(grid.r.v[i] - set.centers[0]);
        for (int b = 1; b < k; ++b) {
            double d = std::abs(grid.r.v[i] - set.centers[b]);
            if (d < best_d) {  // strict: ties stay with the lower index
                best_d = d;
                best = b;
            }
        }
        set.masks[best].v[i] = 1.0;
    }
    return set;
}

/// Immutable shared mask cache keyed by (h, w, k, sharpness bits, kind).
inline std::shared_ptr<const BandMaskSet> cached_band_masks(int h, int w, int k,
                                                            double sharpness, BandKind kind) {
    using Key = std::tuple<int, int, int, std::uint64_t, int>;
    static std::mutex mu;
    static std::map<Key, std::shared_ptr<const BandMaskSet>> cache;
    std::uint64_t bits = 0;
    std::memcpy(&bits, &sharpness, sizeof(bits));
    Key key{h, w, k, kind == BandKind::hard ? 0 : bits, static_cast<int>(kind)};
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto set = std::make_shared<BandMaskSet>(kind == BandKind::soft
                                                 ? gaussian_band_masks(h, w, k, sharpness)
                                                 : hard_band_masks(h, w, k));
    cache.emplace(key, set);
    return set;
}

inline Spectrum2D apply_mask(const Spectrum2D& s, const Field2D& mask) {
    if (s.h != mask.h || s.w != mask.w) throw InvalidInput("apply_mask: shape mismatch");
    Spectrum2D out(s.h, s.w);
    for (std::size_t i = 0; i < s.v.size(); ++i) out.v[i] = s.v[i] * mask.v[i];
    return out;
}

/// Splits z into one tensor per band: each channel is transformed, the band
/// mask applied in the centered frequency domain, and the result brought back
/// to the spatial domain (imaginary residue policy of idft_centered applies).
inline std::vector<LatentTensor> decompose(const LatentTensor& z, const BandMaskSet& masks) {
    if (z.h != masks.h || z.w != masks.w) throw InvalidInput("decompose: mask shape mismatch");
    std::vector<LatentTensor> bands(masks.bands(), LatentTensor(z.c, z.h, z.w));
    for (int ch = 0; ch < z.c; ++ch) {
        Spectrum2D s = dft_centered(z.channel(ch));
        for (int b = 0; b < masks.bands(); ++b) {
            Field2D plane = idft_centered(apply_mask(s, masks.masks[b]));
            std::copy(plane.v.begin(), plane.v.end(), bands[b].plane(ch));
        }
    }
    return bands;
}

}  // namespace spamoe
