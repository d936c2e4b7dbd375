#include <doctest.h>

#include <spamoe/synth.hpp>
#include <spamoe/theory.hpp>

#include "helpers.hpp"

using namespace spamoe;

namespace {

std::vector<Field2D> random_fields(int n, int h, int w, std::uint64_t seed0) {
    std::vector<Field2D> fields;
    for (int i = 0; i < n; ++i) {
        Rng rng(seed0 + i);
        fields.push_back(testutil::random_field(h, w, rng));
    }
    return fields;
}

}  // namespace

TEST_CASE("theorem 1: identity filter is tight, synthetic filters never violate") {
    // odd grid: the radial map is exactly mirror-symmetric, so bandwise
    // filters act exactly diagonally on real fields
    RadialGrid grid = radial_grid(17, 17, 0.25);
    std::vector<Field2D> fields = random_fields(20, 17, 17, 900);

    FilterCase identity{DiagonalFilter{Field2D(17, 17, 1.0)}, 1.0, 1.0};
    TheoremReport rep = verify_theorem1({identity}, fields, grid);
    CHECK(rep.violations == 0);
    CHECK(rep.cases_run == 20);
    CHECK(std::abs(rep.worst_margin) < 1e-9);  // tight bound at the boundary

    FilterCase half{bandwise_filter(grid, 1.0, 0.25), 0.5, 1.0};
    TheoremReport rep2 = verify_theorem1({half}, fields, grid);
    CHECK(rep2.violations == 0);

    // randomized responses inside the (alpha, beta) envelope
    Rng rng(901);
    std::vector<FilterCase> cases;
    for (int c = 0; c < 5; ++c) {
        double alpha = uniform(rng, 0.1, 0.6), beta = uniform(rng, std::max(alpha + 0.05, 0.7), 1.0);
        DiagonalFilter f;
        f.response = Field2D(17, 17);
        for (int i = 0; i < 17; ++i)
            for (int j = 0; j < 17; ++j) {
                auto [mi, mj] = mirror_bin(i, j, 17, 17);
                if (mi * 17 + mj < i * 17 + j) {
                    f.response.at(i, j) = f.response.at(mi, mj);  // keep mirror symmetry
                    continue;
                }
                f.response.at(i, j) =
                    grid.is_low(i, j) ? uniform(rng, beta, 1.0) : uniform(rng, 0.0, alpha);
            }
        cases.push_back(FilterCase{std::move(f), alpha, beta});
    }
    TheoremReport rep3 = verify_theorem1(cases, fields, grid);
    CHECK(rep3.violations == 0);
    CHECK(rep3.cases_run == 100);
    CHECK(rep3.worst_margin >= -1e-9);
}

TEST_CASE("theorem 1: low-band soft mask with measured envelope") {
    RadialGrid grid = radial_grid(17, 17, 0.25);
    BandMaskSet soft = gaussian_band_masks(17, 17, 3, 20.0);
    // envelope read off the mask grid: max over the high band, min over low
    double alpha = 0.0, beta = 1e300;
    for (int i = 0; i < 17; ++i)
        for (int j = 0; j < 17; ++j) {
            double v = soft.masks[0].at(i, j);
            if (grid.is_low(i, j))
                beta = std::min(beta, v);
            else
                alpha = std::max(alpha, v);
        }
    REQUIRE(alpha < beta);  // strictly decreasing radial profile
    TheoremReport rep = verify_theorem1({FilterCase{DiagonalFilter{soft.masks[0]}, alpha, beta}},
                                        random_fields(20, 17, 17, 902), grid);
    CHECK(rep.violations == 0);
}

TEST_CASE("theorem 1: premise violations are rejected, not counted") {
    RadialGrid grid = radial_grid(9, 9, 0.25);
    FilterCase bad{bandwise_filter(grid, 1.0, 1.0), 0.5, 1.0};  // |H|=1 on the high band > alpha
    CHECK_THROWS_AS(verify_theorem1({bad}, random_fields(2, 9, 9, 903), grid), PremiseViolation);
    FilterCase inverted{bandwise_filter(grid, 0.09, 0.01), 0.3, 0.1};  // alpha > beta
    CHECK_THROWS_AS(verify_theorem1({inverted}, random_fields(2, 9, 9, 903), grid),
                    PremiseViolation);
}

TEST_CASE("theorem 2: tight identity case and adversarial gains") {
    RadialGrid grid = radial_grid(17, 17, 0.25);
    std::vector<Field2D> fields = random_fields(10, 17, 17, 905);

    TheoremReport tight = verify_theorem2(1.0, 1.0, 1.0, 1.0, fields, grid);
    CHECK(tight.violations == 0);
    CHECK(std::abs(tight.worst_margin) < 1e-9);  // bound reads HL(y) >= HL(y)

    TheoremReport rep = verify_theorem2(4.0, 2.0, 0.5, 2.0, fields, grid);
    CHECK(rep.violations == 0);
    CHECK(rep.cases_run == 60);
    CHECK(rep.worst_margin >= -1e-9);
    CHECK(rep.parameters.at("factor") == doctest::Approx(0.5));

    CHECK_THROWS_AS(verify_theorem2(0.5, 1.0, 0.5, 2.0, fields, grid), InvalidInput);
    CHECK_THROWS_AS(verify_theorem2(1.0, 1.0, 2.0, 0.5, fields, grid), InvalidInput);
}

TEST_CASE("theorem report round-trips through JSON") {
    TheoremReport rep;
    rep.cases_run = 42;
    rep.violations = 0;
    rep.worst_margin = 1.25e-3;
    rep.parameters = {{"alpha", 0.5}, {"beta", 1.0}};
    nlohmann::json j = rep;
    TheoremReport back = j.get<TheoremReport>();
    CHECK(back.cases_run == rep.cases_run);
    CHECK(back.violations == rep.violations);
    CHECK(back.worst_margin == rep.worst_margin);
    CHECK(back.parameters == rep.parameters);
}

TEST_CASE("assumption validation: pass-through and bilinear collapse") {
    RadialGrid grid = radial_grid(32, 32, 0.25);
    Rng rng(907);
    ParamStore store;
    FnoConfig fc;
    fc.channels = 1;
    fc.layers = 1;
    fc.modes_h = fc.modes_w = 8;
    FnoParams fno = init_fno(store, fc, rng);

    std::vector<std::pair<Field2D, Field2D>> pairs;
    for (int i = 0; i < 6; ++i) {
        FieldSpec spec;
        spec.kind = FieldKind::broadband;
        spec.h = spec.w = 32;
        spec.slope = 0.0;
        spec.seed = 910 + i;
        Field2D y = gen_field(spec);
        pairs.emplace_back(y, y);
    }

    AssumptionHarness harness;
    harness.store = &store;
    harness.downstream = &fno;
    harness.mid_h = harness.mid_w = 16;

    auto reports =
        validate_assumptions(FrontendKind::interp_baseline, pairs, grid, kDefaultEps, harness);
    AssumptionStats stats = aggregate(reports);
    CHECK(stats.samples == 6);
    // qualitative collapse direction: the high band loses far more than low
    CHECK(stats.mean_ratio1 < 0.5);
    CHECK(stats.mean_ratio2 > 0.5);
    CHECK(stats.mean_ratio1 < stats.mean_ratio2);
    CHECK(stats.mean_hl_uc < stats.mean_hl_y);

    // pass-through harness: u_c == y gives unit ratios
    AssumptionHarness self = harness;
    self.mid_h = 32;
    self.mid_w = 32;  // identity resize
    auto reports2 =
        validate_assumptions(FrontendKind::interp_baseline, pairs, grid, kDefaultEps, self);
    for (const auto& r : reports2) {
        CHECK(r.ratio1 == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(r.ratio2 == doctest::Approx(1.0).epsilon(1e-9));
    }

    nlohmann::json j = stats;
    AssumptionStats back = j.get<AssumptionStats>();
    CHECK(back.samples == stats.samples);
    CHECK(back.mean_ratio1 == stats.mean_ratio1);
    CHECK(back.g_low_max == stats.g_low_max);

    CHECK_THROWS_AS(
        validate_assumptions(FrontendKind::interp_baseline, {}, grid, kDefaultEps, harness),
        InvalidInput);
}

TEST_CASE("assumption validation through the encoder proxy") {
    RadialGrid grid = radial_grid(16, 16, 0.25);
    Rng rng(911);
    ParamStore store;
    EncoderConfig ec;
    ec.patch_t = 4;
    ec.patch_r = 4;
    ec.token_dim = 4;
    ec.mixing_layers = 1;
    ec.head_stride_h = 4;
    ec.head_stride_w = 4;
    ec.out_channels = 2;
    ec.out_h = ec.out_w = 16;
    EncoderProxyParams enc = init_encoder(store, ec, rng);
    FnoConfig fc;
    fc.channels = 1;
    fc.layers = 1;
    fc.modes_h = fc.modes_w = 4;
    FnoParams fno = init_fno(store, fc, rng);

    std::vector<std::pair<Field2D, Field2D>> pairs;
    for (int i = 0; i < 3; ++i) {
        Rng lr(920 + i);
        Field2D y = testutil::random_field(16, 16, lr, 0.0, 1.0);
        pairs.emplace_back(reshape_shots(toy_observe(y, ObserveMode::identity)), y);
    }
    AssumptionHarness harness;
    harness.store = &store;
    harness.encoder = &enc;
    harness.downstream = &fno;
    auto reports =
        validate_assumptions(FrontendKind::encoder_proxy, pairs, grid, kDefaultEps, harness);
    CHECK(reports.size() == 3);
    for (const auto& r : reports) {
        CHECK(std::isfinite(r.ratio1));
        CHECK(std::isfinite(r.g_high));
        CHECK(r.ratio1 >= 0.0);
    }
}
