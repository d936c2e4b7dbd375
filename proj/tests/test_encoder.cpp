#include <doctest.h>

#include <spamoe/encoder.hpp>

#include "helpers.hpp"

using namespace spamoe;
namespace adt = spamoe::ad;

TEST_CASE("reshape_shots layout and inverse") {
    Observation x(2, 2, 3);
    for (int t = 0; t < 2; ++t)
        for (int r = 0; r < 3; ++r) {
            x.at(0, t, r) = 1.0;  // shot a
            x.at(1, t, r) = 2.0;  // shot b
        }
    Field2D plane = reshape_shots(x);
    CHECK(plane.h == 2);
    CHECK(plane.w == 6);
    for (int t = 0; t < 2; ++t) {
        for (int j = 0; j < 3; ++j) CHECK(plane.at(t, j) == 1.0);
        for (int j = 3; j < 6; ++j) CHECK(plane.at(t, j) == 2.0);
    }

    Rng rng(401);
    Observation big(5, 10, 7);
    for (double& v : big.v) v = uniform(rng, -1, 1);
    Field2D p2 = reshape_shots(big);
    CHECK(p2.h == 10);
    CHECK(p2.w == 35);
    CHECK(p2.size() == big.size());
    Observation back = unshape_shots(p2, 5);
    CHECK(back.v == big.v);

    // single shot passes through unchanged
    Observation one(1, 4, 6);
    for (double& v : one.v) v = uniform(rng, -1, 1);
    Field2D pone = reshape_shots(one);
    for (int t = 0; t < 4; ++t)
        for (int r = 0; r < 6; ++r) CHECK(pone.at(t, r) == one.at(0, t, r));
}

TEST_CASE("proxy encoder: zero input gives zero output, shape contract holds") {
    Rng rng(409);
    ParamStore store;
    EncoderConfig cfg;
    cfg.patch_t = 4;
    cfg.patch_r = 4;
    cfg.token_dim = 6;
    cfg.mixing_layers = 2;
    cfg.head_stride_h = 4;
    cfg.head_stride_w = 4;
    cfg.out_channels = 3;
    cfg.out_h = 16;
    cfg.out_w = 16;
    EncoderProxyParams p = init_encoder(store, cfg, rng);
    Field2D zero(16, 80, 0.0);
    LatentTensor z = proxy_encode(store, p, zero);
    CHECK(z.c == 3);
    CHECK(z.h == 16);
    CHECK(z.w == 16);
    for (double x : z.v) CHECK(x == 0.0);

    // padded case: width not divisible by the patch
    Field2D odd(18, 77, 0.5);
    LatentTensor z2 = proxy_encode(store, p, odd);
    CHECK(z2.c == 3);
    CHECK(z2.h == 16);
    CHECK(z2.w == 16);
}

TEST_CASE("proxy encoder honors the panoramic-to-latent shape contract") {
    Rng rng(419);
    ParamStore store;
    EncoderConfig cfg;
    cfg.patch_t = 8;
    cfg.patch_r = 8;
    cfg.token_dim = 4;
    cfg.mixing_layers = 1;
    cfg.head_stride_h = 2;
    cfg.head_stride_w = 2;
    cfg.out_channels = 8;
    cfg.out_h = 70;
    cfg.out_w = 70;
    EncoderProxyParams p = init_encoder(store, cfg, rng);
    Field2D plane(1000, 350, 0.1);
    LatentTensor z = proxy_encode(store, p, plane);
    CHECK(z.c == 8);
    CHECK(z.h == 70);
    CHECK(z.w == 70);
}

TEST_CASE("proxy encoder gradients match finite differences on a 16x16 input") {
    Rng rng(421);
    ParamStore store;
    EncoderConfig cfg;
    cfg.patch_t = 4;
    cfg.patch_r = 4;
    cfg.token_dim = 4;
    cfg.mixing_layers = 2;
    cfg.head_stride_h = 4;
    cfg.head_stride_w = 4;
    cfg.out_channels = 2;
    cfg.out_h = 16;
    cfg.out_w = 16;
    EncoderProxyParams p = init_encoder(store, cfg, rng);
    for (auto& e : store.entries)
        for (double& x : e.value) x += uniform(rng, -0.05, 0.05);
    Field2D x = testutil::random_field(16, 16, rng);
    auto build = [&](adt::Tape& t) {
        int xi = adt::input_field(t, x);
        int z = proxy_encode_tape(t, store, p, xi);
        return adt::mean_all(t, adt::square(t, z));
    };
    for (int pid = 0; pid < static_cast<int>(store.entries.size()); ++pid) {
        double err = testutil::max_rel_grad_error(store, pid, build, 1e-6, 8);
        INFO("encoder param ", store.at(pid).name, " rel err ", err);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("interp_resize basics") {
    Field2D c(5, 7, 3.3);
    Field2D up = interp_resize(c, 9, 13);
    for (double x : up.v) CHECK(x == doctest::Approx(3.3).epsilon(1e-15));

    Rng rng(431);
    Field2D u = testutil::random_field(6, 6, rng);
    Field2D same = interp_resize(u, 6, 6);
    CHECK(max_abs_diff(u, same) < 1e-12);

    // corner-aligned 4x4 ramp down to 2x2 picks the corners exactly
    Field2D ramp(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) ramp.at(i, j) = 10.0 * i + j;
    Field2D down = interp_resize(ramp, 2, 2);
    CHECK(down.at(0, 0) == doctest::Approx(0.0));
    CHECK(down.at(0, 1) == doctest::Approx(3.0));
    CHECK(down.at(1, 0) == doctest::Approx(30.0));
    CHECK(down.at(1, 1) == doctest::Approx(33.0));

    // exact on affine fields
    Field2D aff(7, 9);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 9; ++j) aff.at(i, j) = 1.0 + 0.25 * i - 0.4 * j;
    Field2D aff2 = interp_resize(aff, 11, 5);
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 5; ++j) {
            double si = i * 6.0 / 10.0, sj = j * 8.0 / 4.0;
            CHECK(aff2.at(i, j) == doctest::Approx(1.0 + 0.25 * si - 0.4 * sj).epsilon(1e-12));
        }
}

TEST_CASE("interpolation response: DC exact, Nyquist crushed") {
    RadialGrid grid = radial_grid(70, 70, 0.25);
    InterpResponse resp = measure_interp_response(70, 70, 35, 35, grid);
    CHECK(std::abs(resp.response.at(35, 35) - 1.0) < 1e-12);  // DC probe
    CHECK(resp.response.at(0, 0) < 0.1);                      // Nyquist checkerboard probe
    CHECK(resp.alpha_hat >= 0.0);
    CHECK(resp.beta_hat <= 1.0 + 1e-12);
    // the qualitative low-pass trend: band-averaged high response is far
    // below the band-averaged low response
    double lo_sum = 0, hi_sum = 0;
    int lo_n = 0, hi_n = 0;
    for (int i = 0; i < 70; ++i)
        for (int j = 0; j < 70; ++j) {
            if (grid.is_low(i, j)) {
                lo_sum += resp.response.at(i, j);
                lo_n++;
            } else {
                hi_sum += resp.response.at(i, j);
                hi_n++;
            }
        }
    CHECK(hi_sum / hi_n < 0.25 * (lo_sum / lo_n));

    CHECK_THROWS_AS(measure_interp_response(70, 70, 70, 70, grid), InvalidConfig);
}
