#include <doctest.h>

#include <spamoe/fft.hpp>
#include <spamoe/io.hpp>

#include <cstdio>
#include <filesystem>

#include "helpers.hpp"

using namespace spamoe;

TEST_CASE("constant field transforms to a pure DC bin") {
    Field2D u(4, 4, 2.5);
    Spectrum2D s = dft_centered(u);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (i == 2 && j == 2)
                CHECK(std::abs(s.at(i, j) - std::complex<double>(16.0 * 2.5)) < 1e-12);
            else
                CHECK(std::abs(s.at(i, j)) < 1e-9);
        }
}

TEST_CASE("round trip reproduces the input") {
    Rng rng(7);
    Field2D u = testutil::random_field(8, 8, rng);
    Field2D back = idft_centered(dft_centered(u));
    CHECK(max_abs_diff(u, back) < 1e-12);

    // checkerboard, the highest-frequency real field
    Field2D cb(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) cb.at(i, j) = ((i + j) % 2 == 0) ? 1.0 : -1.0;
    CHECK(max_abs_diff(cb, idft_centered(dft_centered(cb))) < 1e-12);
}

TEST_CASE("fast path matches the definition-sum oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        int h = trial % 2 ? 6 : 8;
        int w = trial % 3 ? 8 : 6;
        Field2D u = testutil::random_field(h, w, rng);
        Spectrum2D fast = dft_centered(u);
        Spectrum2D slow = dft_oracle(u);
        double worst = 0.0;
        for (std::size_t i = 0; i < fast.v.size(); ++i)
            worst = std::max(worst, std::abs(fast.v[i] - slow.v[i]));
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("oracle guards its own cost") {
    CHECK_THROWS_AS(dft_oracle(Field2D(70, 70)), OracleTooLarge);
    CHECK_THROWS_AS(Field2D(1, 8), InvalidInput);
}

TEST_CASE("oracle 2x2 ones and single cosine") {
    Field2D ones(2, 2, 1.0);
    Spectrum2D s = dft_oracle(ones);
    CHECK(std::abs(s.at(1, 1) - std::complex<double>(4.0)) < 1e-12);
    CHECK(std::abs(s.at(0, 0)) < 1e-12);
    CHECK(std::abs(s.at(0, 1)) < 1e-12);
    CHECK(std::abs(s.at(1, 0)) < 1e-12);

    // cos(2 pi x k / W) concentrates on the two symmetric bins +-k
    const int n = 8, k = 2;
    Field2D c(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            c.at(i, j) = std::cos(2.0 * std::numbers::pi * j * k / n);
    Spectrum2D sc = dft_oracle(c);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double expected = (i == n / 2 && (j == n / 2 + k || j == n / 2 - k)) ? n * n / 2.0 : 0.0;
            CHECK(std::abs(sc.at(i, j) - std::complex<double>(expected)) < 1e-9);
        }
}

TEST_CASE("inverse of a non-symmetric spectrum matches the oracle inverse") {
    Rng rng(3);
    Spectrum2D s(6, 6);
    for (auto& z : s.v) z = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
    auto oracle = testutil::idft_oracle(s);
    auto before = imag_residue_events().load();
    Field2D real_part = idft_centered(s);
    CHECK(imag_residue_events().load() == before + 1);  // residue diagnostic fires
    for (std::size_t i = 0; i < real_part.v.size(); ++i)
        CHECK(std::abs(real_part.v[i] - oracle[i].real()) < 1e-9);
}

TEST_CASE("DC-only spectrum inverts to a constant field") {
    Spectrum2D s(5, 7);
    s.at(2, 3) = 35.0;  // H*W
    Field2D u = idft_centered(s);
    for (double x : u.v) CHECK(x == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Parseval, linearity, conjugate symmetry") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        int h = 5 + trial % 4, w = 6 + trial % 3;
        Field2D u = testutil::random_field(h, w, rng);
        Field2D v = testutil::random_field(h, w, rng);

        double lhs = spectrum_energy(dft_centered(u));
        double rhs = static_cast<double>(h) * w * field_energy(u);
        CHECK(std::abs(lhs - rhs) / rhs < 1e-9);

        double a = 1.7, b = -0.4;
        Field2D mix(h, w);
        for (std::size_t i = 0; i < mix.v.size(); ++i) mix.v[i] = a * u.v[i] + b * v.v[i];
        Spectrum2D sm = dft_centered(mix);
        Spectrum2D su = dft_centered(u);
        Spectrum2D sv = dft_centered(v);
        double worst = 0.0;
        for (std::size_t i = 0; i < sm.v.size(); ++i)
            worst = std::max(worst, std::abs(sm.v[i] - (a * su.v[i] + b * sv.v[i])));
        CHECK(worst < 1e-9);

        // u real: bins mirrored about the center (mod grid) are conjugate
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                int mi = ((2 * (h / 2) - i) % h + h) % h;
                int mj = ((2 * (w / 2) - j) % w + w) % w;
                CHECK(std::abs(su.at(i, j) - std::conj(su.at(mi, mj))) < 1e-9);
            }
    }
}

TEST_CASE("tensor file round trip and exports") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "spamoe_io_test";
    fs::create_directories(dir);
    Rng rng(5);
    Field2D f = testutil::random_field(6, 9, rng);
    save_tensor(f, (dir / "f.bin").string());
    Field2D f2 = load_field((dir / "f.bin").string());
    CHECK(f2.h == 6);
    CHECK(f2.w == 9);
    CHECK(max_abs_diff(f, f2) == 0.0);

    LatentTensor z = testutil::random_latent(3, 4, 5, rng);
    save_tensor(z, (dir / "z.bin").string());
    LatentTensor z2 = load_latent((dir / "z.bin").string());
    CHECK(z2.c == 3);
    CHECK(z.v == z2.v);

    save_csv(f, (dir / "f.csv").string());
    save_pgm16(f, (dir / "f.pgm").string());
    CHECK(fs::file_size(dir / "f.csv") > 0);
    CHECK(fs::file_size(dir / "f.pgm") > 0);

    CHECK_THROWS_AS(load_field((dir / "z.bin").string()), IoError);
    fs::remove_all(dir);
}
