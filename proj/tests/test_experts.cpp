#include <doctest.h>

#include <spamoe/experts.hpp>

#include "helpers.hpp"

using namespace spamoe;
namespace adt = spamoe::ad;

namespace {

void zero_param(ParamStore& s, int pid) {
    for (double& x : s.at(pid).value) x = 0.0;
}

/// Naive zero-padded convolution, independent of the tape op.
LatentTensor conv_oracle(const LatentTensor& x, const std::vector<double>& w, int cout, int k) {
    int cin = x.c, h = x.h, wd = x.w, p = k / 2;
    LatentTensor y(cout, h, wd);
    for (int f = 0; f < cout; ++f)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < wd; ++j) {
                double acc = 0.0;
                for (int c = 0; c < cin; ++c)
                    for (int a = 0; a < k; ++a)
                        for (int b = 0; b < k; ++b) {
                            int ii = i + a - p, jj = j + b - p;
                            if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;
                            acc += w[((static_cast<std::size_t>(f) * cin + c) * k + a) * k + b] *
                                   x.at(c, ii, jj);
                        }
                y.at(f, i, j) = acc;
            }
    return y;
}

}  // namespace

TEST_CASE("fno: zero weights give zero output") {
    Rng rng(301);
    ParamStore store;
    FnoConfig cfg;
    cfg.channels = 2;
    cfg.layers = 2;
    cfg.modes_h = cfg.modes_w = 3;
    FnoParams p = init_fno(store, cfg, rng);
    for (auto& e : store.entries) std::fill(e.value.begin(), e.value.end(), 0.0);
    LatentTensor z = testutil::random_latent(2, 8, 8, rng);
    LatentTensor out = fno_forward(store, p, z);
    for (double x : out.v) CHECK(x == 0.0);
}

TEST_CASE("fno: full-mode identity configuration is the identity") {
    Rng rng(303);
    ParamStore store;
    FnoConfig cfg;
    cfg.channels = 2;
    cfg.layers = 1;
    cfg.modes_h = cfg.modes_w = 5;  // covers every bin of an 8x8 grid
    FnoParams p = init_fno(store, cfg, rng);
    auto& wre = store.at(p.layers[0].w_re).value;
    auto& wim = store.at(p.layers[0].w_im).value;
    std::fill(wre.begin(), wre.end(), 0.0);
    std::fill(wim.begin(), wim.end(), 0.0);
    for (int f = 0; f < 2; ++f)
        for (int s = 0; s < p.slots; ++s)
            wre[(static_cast<std::size_t>(f) * 2 + f) * p.slots + s] = 1.0;
    zero_param(store, p.layers[0].pw);
    zero_param(store, p.layers[0].pb);
    LatentTensor z = testutil::random_latent(2, 8, 8, rng);
    LatentTensor out = fno_forward(store, p, z);
    for (std::size_t i = 0; i < z.v.size(); ++i) CHECK(std::abs(out.v[i] - z.v[i]) < 1e-10);
}

TEST_CASE("fno: retained-mode weight scales a pure cosine") {
    Rng rng(305);
    ParamStore store;
    FnoConfig cfg;
    cfg.channels = 1;
    cfg.layers = 1;
    cfg.modes_h = cfg.modes_w = 3;
    FnoParams p = init_fno(store, cfg, rng);
    const double w0 = 1.8;
    auto& wre = store.at(p.layers[0].w_re).value;
    auto& wim = store.at(p.layers[0].w_im).value;
    std::fill(wre.begin(), wre.end(), w0);
    std::fill(wim.begin(), wim.end(), 0.0);
    zero_param(store, p.layers[0].pw);
    zero_param(store, p.layers[0].pb);

    const int n = 8, k = 2;  // frequency inside the retained box
    LatentTensor z(1, n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            z.at(0, i, j) = std::cos(2.0 * std::numbers::pi * j * k / n);
    LatentTensor out = fno_forward(store, p, z);
    for (std::size_t i = 0; i < z.v.size(); ++i)
        CHECK(out.v[i] == doctest::Approx(w0 * z.v[i]).epsilon(1e-9));

    // cross-check through the oracle transform composition
    Spectrum2D s = dft_oracle(z.channel(0));
    FnoBins bins = fno_bins(n, n, 3, 3);
    Spectrum2D masked(n, n);
    for (std::size_t b = 0; b < bins.flat.size(); ++b) masked.v[bins.flat[b]] = w0 * s.v[bins.flat[b]];
    auto back = testutil::idft_oracle(masked);
    for (std::size_t i = 0; i < out.v.size(); ++i) CHECK(std::abs(out.v[i] - back[i].real()) < 1e-9);
}

TEST_CASE("fno: mode overflow is rejected") {
    Rng rng(307);
    ParamStore store;
    FnoConfig cfg;
    cfg.channels = 1;
    cfg.layers = 1;
    cfg.modes_h = cfg.modes_w = 6;  // 8x8 grid admits at most 5
    FnoParams p = init_fno(store, cfg, rng);
    LatentTensor z = testutil::random_latent(1, 8, 8, rng);
    CHECK_THROWS_AS(fno_forward(store, p, z), InvalidConfig);
}

TEST_CASE("mno: identity and zero configurations") {
    Rng rng(311);
    ParamStore store;
    MnoConfig cfg;
    cfg.channels = 1;
    cfg.layers = 1;
    cfg.kernel = 1;
    cfg.scale_factors = {1.0};
    MnoParams p = init_mno(store, cfg, rng);
    store.at(p.layers[0][0].kw).value = {1.0};
    store.at(p.layers[0][0].kb).value = {0.0};
    store.at(p.layers[0][0].pw).value = {1.0};
    store.at(p.layers[0][0].pb).value = {0.0};
    LatentTensor z = testutil::random_latent(1, 6, 6, rng);
    LatentTensor out = mno_forward(store, p, z);
    for (std::size_t i = 0; i < z.v.size(); ++i) CHECK(out.v[i] == doctest::Approx(z.v[i]).epsilon(1e-12));

    ParamStore store2;
    MnoConfig cfg2;
    cfg2.channels = 2;
    cfg2.layers = 2;
    MnoParams p2 = init_mno(store2, cfg2, rng);
    for (auto& e : store2.entries) std::fill(e.value.begin(), e.value.end(), 0.0);
    LatentTensor z2 = testutil::random_latent(2, 12, 12, rng);
    LatentTensor out2 = mno_forward(store2, p2, z2);
    for (double x : out2.v) CHECK(x == 0.0);
}

TEST_CASE("mno: full-scale branch matches the convolution oracle") {
    Rng rng(313);
    ParamStore store;
    MnoConfig cfg;
    cfg.channels = 1;
    cfg.layers = 1;
    cfg.kernel = 3;
    cfg.scale_factors = {1.0};
    MnoParams p = init_mno(store, cfg, rng);
    store.at(p.layers[0][0].pw).value = {1.0};  // identity pointwise map
    store.at(p.layers[0][0].pb).value = {0.0};
    store.at(p.layers[0][0].kb).value = {0.0};

    LatentTensor z(1, 8, 8, 1.0);  // constant field
    LatentTensor out = mno_forward(store, p, z);
    const auto& kw = store.at(p.layers[0][0].kw).value;
    double ksum = 0.0;
    for (double x : kw) ksum += x;
    // away from the zero-padded border the response is constant * kernel sum
    for (int i = 1; i < 7; ++i)
        for (int j = 1; j < 7; ++j) CHECK(out.at(0, i, j) == doctest::Approx(ksum).epsilon(1e-12));
    LatentTensor oracle = conv_oracle(z, kw, 1, 3);
    for (std::size_t i = 0; i < out.v.size(); ++i)
        CHECK(out.v[i] == doctest::Approx(oracle.v[i]).epsilon(1e-12));

    // a random field too
    LatentTensor r = testutil::random_latent(1, 8, 8, rng);
    LatentTensor outr = mno_forward(store, p, r);
    LatentTensor oracler = conv_oracle(r, kw, 1, 3);
    for (std::size_t i = 0; i < outr.v.size(); ++i)
        CHECK(outr.v[i] == doctest::Approx(oracler.v[i]).epsilon(1e-12));
}

TEST_CASE("mno: scale below the kernel extent is rejected") {
    Rng rng(317);
    ParamStore store;
    MnoConfig cfg;
    cfg.channels = 1;
    cfg.layers = 1;
    cfg.kernel = 3;
    cfg.scale_factors = {0.2};
    MnoParams p = init_mno(store, cfg, rng);
    LatentTensor z = testutil::random_latent(1, 8, 8, rng);
    CHECK_THROWS_AS(mno_forward(store, p, z), InvalidConfig);
    MnoConfig bad;
    bad.scale_factors = {1.5};
    CHECK_THROWS_AS(init_mno(store, bad, rng), InvalidConfig);
}

TEST_CASE("lno: delta stencil is the identity, zero stencil is zero") {
    Rng rng(331);
    ParamStore store;
    LnoConfig cfg;
    cfg.channels = 2;
    cfg.layers = 1;
    cfg.radius = 1;
    LnoParams p = init_lno(store, cfg, rng);
    auto& kw = store.at(p.layers[0].kw).value;
    std::fill(kw.begin(), kw.end(), 0.0);
    for (int c = 0; c < 2; ++c) kw[((static_cast<std::size_t>(c) * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
    zero_param(store, p.layers[0].kb);
    LatentTensor z = testutil::random_latent(2, 7, 7, rng);
    LatentTensor out = lno_forward(store, p, z);
    for (std::size_t i = 0; i < z.v.size(); ++i) CHECK(out.v[i] == z.v[i]);

    std::fill(kw.begin(), kw.end(), 0.0);
    LatentTensor zero = lno_forward(store, p, z);
    for (double x : zero.v) CHECK(x == 0.0);
}

TEST_CASE("lno: random stencil matches the naive neighborhood sum") {
    Rng rng(337);
    ParamStore store;
    LnoConfig cfg;
    cfg.channels = 2;
    cfg.layers = 1;
    cfg.radius = 1;
    LnoParams p = init_lno(store, cfg, rng);
    zero_param(store, p.layers[0].kb);
    LatentTensor z = testutil::random_latent(2, 9, 9, rng);
    LatentTensor out = lno_forward(store, p, z);
    LatentTensor oracle = conv_oracle(z, store.at(p.layers[0].kw).value, 2, 3);
    for (std::size_t i = 0; i < out.v.size(); ++i) CHECK(std::abs(out.v[i] - oracle.v[i]) < 1e-12);

    LnoConfig bad;
    bad.channels = 2;
    bad.radius = 5;
    LnoParams pb = init_lno(store, bad, rng, "lno_bad");
    CHECK_THROWS_AS(lno_forward(store, pb, z), InvalidConfig);
}

TEST_CASE("experts are homogeneous in linear test mode") {
    Rng rng(341);
    ParamStore store;
    FnoConfig fc;
    fc.channels = 2;
    fc.layers = 2;
    fc.modes_h = fc.modes_w = 3;
    fc.act = Activation::identity;
    FnoParams fp = init_fno(store, fc, rng);
    MnoConfig mc;
    mc.channels = 2;
    mc.layers = 2;
    mc.act = Activation::identity;
    MnoParams mp = init_mno(store, mc, rng);
    LnoConfig lc;
    lc.channels = 2;
    lc.layers = 2;
    lc.act = Activation::identity;
    LnoParams lp = init_lno(store, lc, rng);
    // biases already zero-initialized
    LatentTensor z = testutil::random_latent(2, 10, 10, rng);
    LatentTensor z3 = z;
    for (double& x : z3.v) x *= -2.5;
    auto check_homog = [&](const LatentTensor& a, const LatentTensor& b) {
        for (std::size_t i = 0; i < a.v.size(); ++i)
            CHECK(std::abs(b.v[i] - (-2.5) * a.v[i]) < 1e-10);
    };
    check_homog(fno_forward(store, fp, z), fno_forward(store, fp, z3));
    check_homog(mno_forward(store, mp, z), mno_forward(store, mp, z3));
    check_homog(lno_forward(store, lp, z), lno_forward(store, lp, z3));
}

TEST_CASE("expert parameter gradients match finite differences") {
    Rng rng(347);
    ParamStore store;
    FnoConfig fc;
    fc.channels = 2;
    fc.layers = 2;
    fc.modes_h = fc.modes_w = 3;
    FnoParams fp = init_fno(store, fc, rng);
    MnoConfig mc;
    mc.channels = 2;
    mc.layers = 2;
    mc.scale_factors = {1.0, 0.6};
    MnoParams mp = init_mno(store, mc, rng);
    LnoConfig lc;
    lc.channels = 2;
    lc.layers = 2;
    LnoParams lp = init_lno(store, lc, rng);
    for (auto& e : store.entries)
        for (double& x : e.value) x += uniform(rng, -0.05, 0.05);
    LatentTensor z = testutil::random_latent(2, 8, 8, rng);

    auto check = [&](auto forward) {
        auto build = [&](adt::Tape& t) {
            int x = adt::input_latent(t, z);
            int y = forward(t, x);
            return adt::mean_all(t, adt::square(t, y));
        };
        for (int pid = 0; pid < static_cast<int>(store.entries.size()); ++pid) {
            double err = testutil::max_rel_grad_error(store, pid, build, 1e-6, 8);
            INFO("param ", store.at(pid).name, " rel err ", err);
            CHECK(err < 1e-4);
        }
    };
    check([&](adt::Tape& t, int x) { return fno_forward_tape(t, store, fp, x); });
    check([&](adt::Tape& t, int x) { return mno_forward_tape(t, store, mp, x); });
    check([&](adt::Tape& t, int x) { return lno_forward_tape(t, store, lp, x); });
}

TEST_CASE("moe_fuse over fields") {
    RouterDecision d;
    d.selected = {0};
    d.alpha = {1.0};
    Field2D u(4, 4);
    Rng rng(353);
    for (double& x : u.v) x = uniform(rng, -1, 1);
    Field2D fused = moe_fuse(d, std::vector<Field2D>{u});
    CHECK(max_abs_diff(fused, u) == 0.0);

    RouterDecision d2;
    d2.selected = {0, 1};
    d2.alpha = {0.5, 0.5};
    Field2D neg = u;
    for (double& x : neg.v) x = -x;
    Field2D zero = moe_fuse(d2, std::vector<Field2D>{u, neg});
    for (double x : zero.v) CHECK(x == 0.0);

    RouterDecision d3;
    d3.selected = {0, 2};
    d3.alpha = {0.7310586, 0.2689414};
    Field2D one(4, 4, 1.0), two(4, 4, 2.0);
    Field2D mixed = moe_fuse(d3, std::vector<Field2D>{one, two});
    for (double x : mixed.v) CHECK(x == doctest::Approx(1.2689414).epsilon(1e-6));

    // permutation consistency
    RouterDecision perm;
    perm.selected = {2, 0};
    perm.alpha = {0.2689414, 0.7310586};
    Field2D mixed2 = moe_fuse(perm, std::vector<Field2D>{two, one});
    CHECK(max_abs_diff(mixed, mixed2) < 1e-15);

    CHECK_THROWS_AS(moe_fuse(d3, std::vector<Field2D>{one}), InvalidInput);
}

TEST_CASE("moe_fuse with readout collapses channels") {
    Rng rng(359);
    ParamStore store;
    ReadoutParams r = init_readout(store, 3, rng);
    store.at(r.w).value = {0.5, 0.25, 0.25};
    store.at(r.b).value = {0.1};
    RouterDecision d;
    d.selected = {0};
    d.alpha = {1.0};
    LatentTensor z(3, 4, 4);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) z.at(c, i, j) = c + 1.0;
    Field2D out = moe_fuse(d, std::vector<LatentTensor>{z}, store, r);
    // 0.5*1 + 0.25*2 + 0.25*3 + 0.1 = 1.85
    for (double x : out.v) CHECK(x == doctest::Approx(1.85).epsilon(1e-12));
}
