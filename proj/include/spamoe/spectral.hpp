#pragma once

#include <cmath>
#include <vector>

#include "spamoe/fft.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

inline constexpr double kDefaultSplitRadius = 0.25;
inline constexpr double kDefaultEps = 1e-12;

/// Normalized radial frequency per bin of a centered spectrum. Each index is
/// mapped to [-1,1]^2 by x_j = -1 + 2j/(W-1), y_i = -1 + 2i/(H-1) and the
/// Euclidean radius is divided by its maximum over the grid, so corners sit
/// exactly at 1. On odd grids the DC bin sits exactly at 0; on even grids the
/// DC bin (index (H/2, W/2)) carries a small positive radius of order 1/(H-1)
/// because the coordinate lattice has no exact center sample.
struct RadialGrid {
    Field2D r;
    double split_radius = kDefaultSplitRadius;

    bool is_low(int i, int j) const { return r.at(i, j) < split_radius; }
};

inline RadialGrid radial_grid(int h, int w, double split_radius = kDefaultSplitRadius) {
    if (h < 2 || w < 2) throw InvalidInput("radial_grid: grid smaller than 2x2");
    if (!(split_radius > 0.0 && split_radius < 1.0))
        throw InvalidInput("radial_grid: split radius must lie in (0,1)");
    RadialGrid g;
    g.r = Field2D(h, w);
    g.split_radius = split_radius;
    double max_d = 0.0;
    for (int i = 0; i < h; ++i) {
        double y = -1.0 + 2.0 * i / (h - 1);
        for (int j = 0; j < w; ++j) {
            double x = -1.0 + 2.0 * j / (w - 1);
            double d = std::sqrt(x * x + y * y);
            g.r.at(i, j) = d;
            max_d = std::max(max_d, d);
        }
    }
    for (double& d : g.r.v) d /= max_d;
    return g;
}

struct BandEnergies {
    double e_low = 0.0;
    double e_high = 0.0;
    double hl = 0.0;
    double eps = kDefaultEps;
};

inline BandEnergies band_energies_of_spectrum(const Spectrum2D& s, const RadialGrid& grid,
                                              double eps = kDefaultEps) {
    if (s.h != grid.r.h || s.w != grid.r.w)
        throw InvalidInput("band_energies: grid shape mismatch");
    if (!(eps > 0.0)) throw InvalidInput("band_energies: eps must be positive");
    BandEnergies be;
    be.eps = eps;
    for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) {
            double p = std::norm(s.at(i, j));
            if (grid.is_low(i, j))
                be.e_low += p;
            else
                be.e_high += p;
        }
    be.hl = be.e_high / (be.e_low + eps);
    return be;
}

inline BandEnergies band_energies(const Field2D& u, const RadialGrid& grid,
                                  double eps = kDefaultEps) {
    return band_energies_of_spectrum(dft_centered(u), grid, eps);
}

inline double hl_ratio(const Field2D& u, const RadialGrid& grid, double eps = kDefaultEps) {
    return band_energies(u, grid, eps).hl;
}

/// Channel-averaged power spectrum of a latent stack: P(w) = mean_c |z_c^(w)|^2.
inline Field2D mean_power_spectrum(const LatentTensor& z) {
    Field2D p(z.h, z.w, 0.0);
    for (int ch = 0; ch < z.c; ++ch) {
        Spectrum2D s = dft_centered(z.channel(ch));
        for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] += std::norm(s.v[i]);
    }
    for (double& x : p.v) x /= z.c;
    return p;
}

inline BandEnergies band_energies(const LatentTensor& z, const RadialGrid& grid,
                                  double eps = kDefaultEps) {
    if (z.h != grid.r.h || z.w != grid.r.w)
        throw InvalidInput("band_energies: grid shape mismatch");
    if (!(eps > 0.0)) throw InvalidInput("band_energies: eps must be positive");
    Field2D p = mean_power_spectrum(z);
    BandEnergies be;
    be.eps = eps;
    for (int i = 0; i < p.h; ++i)
        for (int j = 0; j < p.w; ++j) {
            if (grid.is_low(i, j))
                be.e_low += p.at(i, j);
            else
                be.e_high += p.at(i, j);
        }
    be.hl = be.e_high / (be.e_low + eps);
    return be;
}

/// Empirical statistics behind the frontend assumptions: energy preservation
/// ratios of the comparable field against the target, downstream band gains
/// of the prediction against the comparable field, and the three HL ratios.
struct AssumptionReport {
    double ratio1 = 0.0;  // E_H(u_c) / E_H(y)
    double ratio2 = 0.0;  // E_L(u_c) / E_L(y)
    double g_high = 0.0;  // E_H(y_hat) / E_H(u_c)
    double g_low = 0.0;   // E_L(y_hat) / E_L(u_c)
    double hl_uc = 0.0;
    double hl_y = 0.0;
    double hl_yhat = 0.0;
};

inline AssumptionReport assumption_metrics(const Field2D& u_c, const Field2D& y,
                                           const Field2D& y_hat, const RadialGrid& grid,
                                           double eps = kDefaultEps) {
    require_same_shape(u_c, y, "assumption_metrics");
    require_same_shape(u_c, y_hat, "assumption_metrics");
    BandEnergies bu = band_energies(u_c, grid, eps);
    BandEnergies by = band_energies(y, grid, eps);
    BandEnergies bp = band_energies(y_hat, grid, eps);
    AssumptionReport rep;
    rep.ratio1 = bu.e_high / (by.e_high + eps);
    rep.ratio2 = bu.e_low / (by.e_low + eps);
    rep.g_high = bp.e_high / (bu.e_high + eps);
    rep.g_low = bp.e_low / (bu.e_low + eps);
    rep.hl_uc = bu.hl;
    rep.hl_y = by.hl;
    rep.hl_yhat = bp.hl;
    return rep;
}

}  // namespace spamoe
