#include <doctest.h>

#include <spamoe/bands.hpp>

#include "helpers.hpp"

using namespace spamoe;

TEST_CASE("gaussian mask hand values") {
    BandMaskSet set = gaussian_band_masks(5, 5, 3, 20.0);
    CHECK(set.centers == std::vector<double>{0.0, 0.5, 1.0});

    // 5x5 index (3,3) sits at r = 0.5 exactly: distance 0.5 to the low center
    RadialGrid g = radial_grid(5, 5);
    CHECK(g.r.at(3, 3) == 0.5);
    CHECK(std::abs(set.masks[0].at(3, 3) - std::exp(-5.0)) < 1e-12);
    // corner: r = 1, distance 0.5 to the middle center
    CHECK(std::abs(set.masks[1].at(0, 0) - std::exp(-5.0)) < 1e-12);
    // every mask is 1 where r equals its center
    CHECK(set.masks[1].at(3, 3) == 1.0);
    CHECK(set.masks[2].at(0, 0) == 1.0);

    CHECK_THROWS_AS(gaussian_band_masks(5, 5, 1, 20.0), InvalidConfig);
    CHECK_THROWS_AS(gaussian_band_masks(5, 5, 3, 0.0), InvalidConfig);
}

TEST_CASE("masks are radially symmetric") {
    BandMaskSet set = gaussian_band_masks(7, 7, 3, 20.0);
    RadialGrid g = radial_grid(7, 7);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j)
            for (int i2 = 0; i2 < 7; ++i2)
                for (int j2 = 0; j2 < 7; ++j2)
                    if (g.r.at(i, j) == g.r.at(i2, j2))
                        CHECK(set.masks[1].at(i, j) == set.masks[1].at(i2, j2));
}

TEST_CASE("hard masks partition with lower-index ties") {
    BandMaskSet set = hard_band_masks(5, 5, 2);
    RadialGrid g = radial_grid(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            double total = set.masks[0].at(i, j) + set.masks[1].at(i, j);
            CHECK(total == 1.0);
            double r = g.r.at(i, j);
            if (r < 0.5)
                CHECK(set.masks[0].at(i, j) == 1.0);
            else if (r > 0.5)
                CHECK(set.masks[1].at(i, j) == 1.0);
            else
                CHECK(set.masks[0].at(i, j) == 1.0);  // midpoint tie -> lower band
        }

    // K = 3: r = 0.4 belongs to the middle band (nearest center 0.5)
    BandMaskSet k3 = hard_band_masks(64, 64, 3);
    RadialGrid g64 = radial_grid(64, 64);
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j)
            if (std::abs(g64.r.at(i, j) - 0.4) < 0.02) CHECK(k3.masks[1].at(i, j) == 1.0);
}

TEST_CASE("soft masks obey the Lipschitz envelope, hard masks break it") {
    const double sharp = 20.0;
    BandMaskSet soft = gaussian_band_masks(16, 16, 3, sharp);
    RadialGrid g = radial_grid(16, 16);
    double bound = std::sqrt(2.0 * sharp / std::numbers::e);
    for (int b = 0; b < 3; ++b)
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j + 1 < 16; ++j) {
                double dm = std::abs(soft.masks[b].at(i, j + 1) - soft.masks[b].at(i, j));
                double dr = std::abs(g.r.at(i, j + 1) - g.r.at(i, j));
                CHECK(dm <= bound * dr + 1e-12);
            }
    BandMaskSet hard = hard_band_masks(64, 64, 3);
    double worst = 0.0;
    for (int b = 0; b < 3; ++b)
        for (int i = 0; i < 64; ++i)
            for (int j = 0; j + 1 < 64; ++j)
                worst = std::max(worst, std::abs(hard.masks[b].at(i, j + 1) - hard.masks[b].at(i, j)));
    CHECK(worst == 1.0);
}

TEST_CASE("decompose: identity mask, hard-mask reconstruction, oracle spectra") {
    Rng rng(31);
    // odd grid: the radial map is mirror-symmetric there, so masked spectra
    // stay conjugate-symmetric and the real-part projection is lossless
    LatentTensor z = testutil::random_latent(2, 9, 9, rng);

    BandMaskSet ones;
    ones.h = ones.w = 9;
    ones.centers = {0.0, 1.0};
    ones.masks = {Field2D(9, 9, 1.0), Field2D(9, 9, 0.0)};
    auto bands1 = decompose(z, ones);
    for (std::size_t i = 0; i < z.v.size(); ++i) CHECK(std::abs(bands1[0].v[i] - z.v[i]) < 1e-10);

    BandMaskSet hard = hard_band_masks(9, 9, 3);
    auto hb = decompose(z, hard);
    for (std::size_t i = 0; i < z.v.size(); ++i) {
        double sum = hb[0].v[i] + hb[1].v[i] + hb[2].v[i];
        CHECK(std::abs(sum - z.v[i]) < 1e-9);
    }

    BandMaskSet soft = gaussian_band_masks(9, 9, 3, 20.0);
    auto sb = decompose(z, soft);
    // per-band spectrum equals the oracle spectrum times the mask
    for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 2; ++c) {
            Spectrum2D zs = dft_oracle(z.channel(c));
            Spectrum2D bs = dft_oracle(sb[b].channel(c));
            for (int i = 0; i < 9; ++i)
                for (int j = 0; j < 9; ++j)
                    CHECK(std::abs(bs.at(i, j) - zs.at(i, j) * soft.masks[b].at(i, j)) < 1e-9);
        }
    // soft sum generally differs from z
    double diff = 0.0;
    for (std::size_t i = 0; i < z.v.size(); ++i)
        diff = std::max(diff, std::abs(sb[0].v[i] + sb[1].v[i] + sb[2].v[i] - z.v[i]));
    CHECK(diff > 1e-3);

    // even grids: hard masks still reconstruct exactly (they sum to one)
    LatentTensor ze = testutil::random_latent(1, 8, 8, rng);
    auto he = decompose(ze, hard_band_masks(8, 8, 3));
    for (std::size_t i = 0; i < ze.v.size(); ++i)
        CHECK(std::abs(he[0].v[i] + he[1].v[i] + he[2].v[i] - ze.v[i]) < 1e-9);
}

TEST_CASE("decompose is linear in z") {
    Rng rng(37);
    LatentTensor a = testutil::random_latent(1, 8, 8, rng);
    LatentTensor b = testutil::random_latent(1, 8, 8, rng);
    BandMaskSet soft = gaussian_band_masks(8, 8, 3, 20.0);
    LatentTensor mix(1, 8, 8);
    for (std::size_t i = 0; i < mix.v.size(); ++i) mix.v[i] = 1.5 * a.v[i] - 0.7 * b.v[i];
    auto da = decompose(a, soft);
    auto db = decompose(b, soft);
    auto dm = decompose(mix, soft);
    for (int band = 0; band < 3; ++band)
        for (std::size_t i = 0; i < mix.v.size(); ++i)
            CHECK(std::abs(dm[band].v[i] - (1.5 * da[band].v[i] - 0.7 * db[band].v[i])) < 1e-10);
}

TEST_CASE("band energy concentrates near its center") {
    Rng rng(41);
    const double sharp = 20.0;
    LatentTensor z = testutil::random_latent(1, 32, 32, rng);
    BandMaskSet soft = gaussian_band_masks(32, 32, 3, sharp);
    RadialGrid g = radial_grid(32, 32);
    auto bands = decompose(z, soft);
    // interior band: energy-weighted mean radius within 2/sqrt(sharpness)
    Spectrum2D s = dft_centered(bands[1].channel(0));
    double wsum = 0.0, rsum = 0.0;
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            double p = std::norm(s.at(i, j));
            wsum += p;
            rsum += p * g.r.at(i, j);
        }
    CHECK(std::abs(rsum / wsum - 0.5) < 2.0 / std::sqrt(sharp));
}

TEST_CASE("mask cache returns shared immutable sets") {
    auto a = cached_band_masks(8, 8, 3, 20.0, BandKind::soft);
    auto b = cached_band_masks(8, 8, 3, 20.0, BandKind::soft);
    CHECK(a.get() == b.get());
    auto c = cached_band_masks(8, 8, 3, 21.0, BandKind::soft);
    CHECK(a.get() != c.get());
}
