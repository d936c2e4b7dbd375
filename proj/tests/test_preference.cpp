#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <spamoe/bands.hpp>
#include <spamoe/preference.hpp>

#include "helpers.hpp"

using namespace spamoe;

TEST_CASE("affinity softmax hand values") {
    auto centers = std::vector<double>{0.0, 0.5, 1.0};
    auto pi = band_affinity_values({0.0}, centers, 10.0);
    // frozen from direct softmax of [0, -2.5, -10]
    CHECK(pi[0][0] == doctest::Approx(0.9241030).epsilon(1e-6));
    CHECK(pi[0][1] == doctest::Approx(0.0758550).epsilon(1e-5));
    CHECK(pi[0][2] == doctest::Approx(0.0000420).epsilon(1e-3));

    // midway between two centers: exact symmetry
    auto mid = band_affinity_values({0.5}, {0.0, 1.0}, 7.0);
    CHECK(mid[0][0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mid[0][1] == doctest::Approx(0.5).epsilon(1e-15));

    // huge sharpness collapses to one-hot
    auto hot = band_affinity_values({0.5}, centers, 1e6);
    CHECK(std::abs(hot[0][1] - 1.0) < 1e-12);
    CHECK(hot[0][0] < 1e-12);
    CHECK(hot[0][2] < 1e-12);
}

TEST_CASE("affinity rows are probability vectors peaked at the nearest center") {
    Rng rng(43);
    auto centers = band_centers(4);
    for (int trial = 0; trial < 200; ++trial) {
        double f = uniform(rng, 0.0, 1.0);
        double sharp = uniform(rng, 0.1, 50.0);
        auto pi = band_affinity_values({f}, centers, sharp);
        double sum = 0.0;
        for (double p : pi[0]) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
        int nearest = 0;
        for (int k = 1; k < 4; ++k)
            if (std::abs(f - centers[k]) < std::abs(f - centers[nearest])) nearest = k;
        int argmax = static_cast<int>(std::max_element(pi[0].begin(), pi[0].end()) - pi[0].begin());
        if (std::abs(std::abs(f - centers[nearest]) - std::abs(f - centers[argmax])) > 1e-12)
            CHECK(argmax == nearest);
    }
}

TEST_CASE("evenly spaced initialization stays in (0,1)") {
    auto pref = FrequencyPreference::evenly_spaced(3);
    auto f = pref.values();
    CHECK(f.size() == 3);
    CHECK(f[0] == doctest::Approx(0.001).epsilon(1e-9));
    CHECK(f[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f[2] == doctest::Approx(0.999).epsilon(1e-9));
}

TEST_CASE("mix_bands convexity cases") {
    LatentTensor a(1, 4, 4, 4.0), b(1, 4, 4, 8.0);
    auto out = mix_bands({a, b}, {0.25, 0.75});
    for (double x : out.v) CHECK(x == doctest::Approx(7.0).epsilon(1e-15));

    auto onehot = mix_bands({a, b}, {0.0, 1.0});
    for (double x : onehot.v) CHECK(x == 8.0);

    auto same = mix_bands({a, a, a}, {0.2, 0.3, 0.5});
    for (double x : same.v) CHECK(x == doctest::Approx(4.0).epsilon(1e-15));

    CHECK_THROWS_AS(mix_bands({a, b}, {1.0}), InvalidInput);
}

TEST_CASE("affinity gradient matches central finite differences") {
    Rng rng(47);
    auto centers = band_centers(3);
    FrequencyPreference pref = FrequencyPreference::evenly_spaced(3);
    for (auto& r : pref.raw) r += uniform(rng, -0.5, 0.5);

    std::vector<std::vector<double>> upstream(3, std::vector<double>(3));
    for (auto& row : upstream)
        for (auto& u : row) u = uniform(rng, -1.0, 1.0);

    auto grad = affinity_gradient(pref, centers, upstream);

    auto loss = [&](const FrequencyPreference& p) {
        auto pi = band_affinity(p, centers);
        double acc = 0.0;
        for (int e = 0; e < 3; ++e)
            for (int k = 0; k < 3; ++k) acc += upstream[e][k] * pi[e][k];
        return acc;
    };
    const double h = 1e-6;
    for (int e = 0; e < 3; ++e) {
        FrequencyPreference up = pref, dn = pref;
        up.raw[e] += h;
        dn.raw[e] -= h;
        double fd = (loss(up) - loss(dn)) / (2 * h);
        double denom = std::max({std::abs(fd), std::abs(grad[e]), 1e-8});
        CHECK(std::abs(fd - grad[e]) / denom < 1e-5);
    }

    // zero upstream -> zero gradient
    auto zero = affinity_gradient(pref, centers, {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
    for (double g : zero) CHECK(g == 0.0);

    // symmetric configuration -> zero gradient for the centered expert
    FrequencyPreference centered = FrequencyPreference::evenly_spaced(3);
    auto sym = affinity_gradient(centered, centers, {{0, 0, 0}, {1.0, 2.0, 1.0}, {0, 0, 0}});
    CHECK(std::abs(sym[1]) < 1e-15);
}
