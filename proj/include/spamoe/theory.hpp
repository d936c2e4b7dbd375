#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spamoe/encoder.hpp"
#include "spamoe/experts.hpp"
#include "spamoe/fft.hpp"
#include "spamoe/spectral.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

/// Nonnegative per-bin response applied multiplicatively in the centered
/// frequency domain. Filtering is idft(dft(u) * response) with the real part
/// kept, so acting on real fields the operator's effective response is the
/// mirror average (H(w) + H(-w))/2; the two coincide exactly when the
/// response is mirror-symmetric (always constructible on odd grids, where
/// the radial map itself is mirror-symmetric).
struct DiagonalFilter {
    Field2D response;

    Field2D apply(const Field2D& u) const {
        if (u.h != response.h || u.w != response.w)
            throw InvalidInput("DiagonalFilter: shape mismatch");
        Spectrum2D s = dft_centered(u);
        for (std::size_t i = 0; i < s.v.size(); ++i) s.v[i] *= response.v[i];
        return idft_centered(s);
    }
};

/// Index of the conjugate-mirror bin of (i, j) in a centered spectrum.
inline std::pair<int, int> mirror_bin(int i, int j, int h, int w) {
    int mi = ((2 * (h / 2) - i) % h + h) % h;
    int mj = ((2 * (w / 2) - j) % w + w) % w;
    return {mi, mj};
}

/// Effective response of the filter acting on real fields.
inline Field2D effective_response(const DiagonalFilter& f) {
    Field2D eff(f.response.h, f.response.w);
    for (int i = 0; i < eff.h; ++i)
        for (int j = 0; j < eff.w; ++j) {
            auto [mi, mj] = mirror_bin(i, j, eff.h, eff.w);
            eff.at(i, j) = 0.5 * (f.response.at(i, j) + f.response.at(mi, mj));
        }
    return eff;
}

/// Bandwise-constant filter: |H| = sqrt(low_power_gain) on the low band and
/// sqrt(high_power_gain) on the high band, so band energies scale exactly by
/// the given power gains.
inline DiagonalFilter bandwise_filter(const RadialGrid& grid, double low_power_gain,
                                      double high_power_gain) {
    if (low_power_gain < 0.0 || high_power_gain < 0.0)
        throw InvalidInput("bandwise_filter: negative power gain");
    DiagonalFilter f;
    f.response = Field2D(grid.r.h, grid.r.w);
    for (int i = 0; i < grid.r.h; ++i)
        for (int j = 0; j < grid.r.w; ++j)
            f.response.at(i, j) = std::sqrt(grid.is_low(i, j) ? low_power_gain : high_power_gain);
    return f;
}

struct TheoremReport {
    long cases_run = 0;
    long violations = 0;
    double worst_margin = 0.0;  // min over cases of (bound - observed), signed per theorem
    std::map<std::string, double> parameters;
};

inline void to_json(nlohmann::json& j, const TheoremReport& r) {
    j = nlohmann::json{{"cases_run", r.cases_run},
                       {"violations", r.violations},
                       {"worst_margin", r.worst_margin},
                       {"parameters", r.parameters}};
}

inline void from_json(const nlohmann::json& j, TheoremReport& r) {
    j.at("cases_run").get_to(r.cases_run);
    j.at("violations").get_to(r.violations);
    j.at("worst_margin").get_to(r.worst_margin);
    j.at("parameters").get_to(r.parameters);
}

inline constexpr double kTheoremSlack = 1e-9;

struct FilterCase {
    DiagonalFilter filter;
    double alpha;  // stated bound: |H| <= alpha on the high band
    double beta;   // stated bound: |H| >= beta on the low band
};

/// Checks the stated (alpha, beta) envelope of a filter against the response
/// it actually realizes on real fields (the mirror-averaged one). Premise
/// failures are reported as exceptions so they never count as theorem
/// violations.
inline void check_filter_premise(const FilterCase& fc, const RadialGrid& grid) {
    if (!(fc.alpha > 0.0) || !(fc.beta > 0.0) || fc.alpha > fc.beta + 1e-15 || fc.beta > 1.0 + 1e-15)
        throw PremiseViolation("filter premise requires 0 < alpha <= beta <= 1");
    Field2D eff = effective_response(fc.filter);
    for (int i = 0; i < grid.r.h; ++i)
        for (int j = 0; j < grid.r.w; ++j) {
            if (fc.filter.response.at(i, j) < 0.0)
                throw PremiseViolation("filter response must be nonnegative");
            double h = eff.at(i, j);
            if (grid.is_low(i, j)) {
                if (h < fc.beta - 1e-12) throw PremiseViolation("low-band response below beta");
            } else if (h > fc.alpha + 1e-12) {
                throw PremiseViolation("high-band response above alpha");
            }
        }
}

/// Upper-bound theorem: a filter attenuating the high band to alpha and
/// keeping the low band above beta caps the output HL ratio at
/// (alpha/beta)^2 times the input's. Also asserts the bandwise energy
/// inequalities the proof factors through.
inline TheoremReport verify_theorem1(const std::vector<FilterCase>& filters,
                                     const std::vector<Field2D>& fields, const RadialGrid& grid,
                                     double eps = kDefaultEps) {
    if (filters.empty() || fields.empty()) throw InvalidInput("verify_theorem1: empty case set");
    for (const auto& fc : filters) check_filter_premise(fc, grid);
    std::size_t n_cases = filters.size() * fields.size();
    std::vector<double> margins(n_cases);
    std::vector<char> ok(n_cases, 1);
    parallel_for(n_cases, [&](std::size_t idx) {
        const FilterCase& fc = filters[idx / fields.size()];
        const Field2D& u = fields[idx % fields.size()];
        BandEnergies in = band_energies(u, grid, eps);
        BandEnergies out = band_energies(fc.filter.apply(u), grid, eps);
        double a2 = fc.alpha * fc.alpha, b2 = fc.beta * fc.beta;
        double rel = 1e-12 * (1.0 + in.e_high + in.e_low);
        bool inter_ok = out.e_high <= a2 * in.e_high + rel && out.e_low >= b2 * in.e_low - rel;
        double bound = (a2 / b2) * in.hl;
        margins[idx] = bound - out.hl;
        ok[idx] = inter_ok && margins[idx] >= -kTheoremSlack;
    });
    TheoremReport rep;
    rep.cases_run = static_cast<long>(n_cases);
    rep.worst_margin = margins.empty() ? 0.0 : margins[0];
    for (std::size_t i = 0; i < n_cases; ++i) {
        rep.worst_margin = std::min(rep.worst_margin, margins[i]);
        if (!ok[i]) ++rep.violations;
    }
    rep.parameters["eps"] = eps;
    rep.parameters["r_split"] = grid.split_radius;
    rep.parameters["filters"] = static_cast<double>(filters.size());
    rep.parameters["fields"] = static_cast<double>(fields.size());
    return rep;
}

/// Lower-bound theorem: with a frontend that does not contract the high band
/// (factor delta) and keeps the low band controlled (factor kappa), and a
/// downstream operator with bandwise power gains inside [m, M], the
/// prediction's HL ratio stays above (m/M)(delta/kappa) times the target's.
/// The harness constructs the frontend and a family of admissible downstream
/// operators (including the adversarial corner cases) as exact bandwise
/// filters and checks every pair.
inline TheoremReport verify_theorem2(double delta, double kappa, double m, double M,
                                     const std::vector<Field2D>& fields, const RadialGrid& grid,
                                     double eps = kDefaultEps) {
    if (!(delta >= 1.0) || !(kappa >= 1.0)) throw InvalidInput("verify_theorem2: need delta, kappa >= 1");
    if (!(m > 0.0) || !(m <= M) || !(M >= 1.0))
        throw InvalidInput("verify_theorem2: need 0 < m <= M and M >= 1");
    if (fields.empty()) throw InvalidInput("verify_theorem2: empty case set");

    DiagonalFilter frontend = bandwise_filter(grid, kappa, delta);
    // the constructed filters must act exactly diagonally on real fields:
    // their mirror-averaged response has to coincide with the raw one
    {
        Field2D eff = effective_response(frontend);
        for (std::size_t i = 0; i < eff.v.size(); ++i)
            if (std::abs(eff.v[i] - frontend.response.v[i]) > 1e-12)
                throw PremiseViolation(
                    "constructed bandwise filter is not mirror-symmetric on this grid "
                    "(the band split cuts a conjugate pair); use an odd grid");
    }
    // admissible downstream gain pairs (high-band, low-band), in [m, M]^2;
    // (m, M) is the bound-minimizing corner
    const std::vector<std::pair<double, double>> gains = {
        {m, M}, {M, m}, {m, m}, {M, M}, {0.5 * (m + M), M}, {m, 0.5 * (m + M)}};

    std::size_t n_cases = fields.size() * gains.size();
    std::vector<double> margins(n_cases);
    std::vector<char> ok(n_cases, 1);
    std::vector<char> premise_ok(n_cases, 1);
    double factor = (m / M) * (delta / kappa);
    parallel_for(n_cases, [&](std::size_t idx) {
        const Field2D& y = fields[idx / gains.size()];
        auto [gain_h, gain_l] = gains[idx % gains.size()];
        Field2D u_c = frontend.apply(y);
        BandEnergies ey = band_energies(y, grid, eps);
        BandEnergies eu = band_energies(u_c, grid, eps);
        // numerical guard on the realized frontend premise
        double rel = 1e-9 * (1.0 + ey.e_high + ey.e_low);
        if (eu.e_high < delta * ey.e_high - rel || eu.e_low > kappa * ey.e_low + rel) {
            premise_ok[idx] = 0;
            margins[idx] = 0.0;
            return;
        }
        DiagonalFilter downstream = bandwise_filter(grid, gain_l, gain_h);
        BandEnergies ep = band_energies(downstream.apply(u_c), grid, eps);
        margins[idx] = ep.hl - factor * ey.hl;
        ok[idx] = margins[idx] >= -kTheoremSlack;
    });
    for (std::size_t i = 0; i < n_cases; ++i)
        if (!premise_ok[i])
            throw PremiseViolation("constructed frontend failed its energy premise on a case");
    TheoremReport rep;
    rep.cases_run = static_cast<long>(n_cases);
    rep.worst_margin = margins.empty() ? 0.0 : margins[0];
    for (std::size_t i = 0; i < n_cases; ++i) {
        rep.worst_margin = std::min(rep.worst_margin, margins[i]);
        if (!ok[i]) ++rep.violations;
    }
    rep.parameters = {{"delta", delta}, {"kappa", kappa},          {"m", m},
                      {"M", M},         {"eps", eps},              {"r_split", grid.split_radius},
                      {"factor", factor}, {"fields", double(fields.size())}};
    return rep;
}

// ---- frontend assumption validation ----

enum class FrontendKind { encoder_proxy, interp_baseline };

/// Everything the validation needs: the trainable frontend (for the encoder
/// path), the mid grid (for the bilinear baseline), and a fixed downstream
/// operator measuring band gains. The readout collapsing latents to the
/// comparable field is the channel mean.
struct AssumptionHarness {
    const ParamStore* store = nullptr;
    const EncoderProxyParams* encoder = nullptr;
    const FnoParams* downstream = nullptr;  // single-channel spectral expert
    int mid_h = 35;
    int mid_w = 35;
};

struct AssumptionStats {
    long samples = 0;
    double mean_ratio1 = 0.0;
    double mean_ratio2 = 0.0;
    double mean_hl_uc = 0.0;
    double mean_hl_y = 0.0;
    double mean_hl_yhat = 0.0;
    double g_high_min = 0.0, g_high_max = 0.0;
    double g_low_min = 0.0, g_low_max = 0.0;
};

inline void to_json(nlohmann::json& j, const AssumptionStats& s) {
    j = nlohmann::json{{"samples", s.samples},
                       {"mean_ratio1", s.mean_ratio1},
                       {"mean_ratio2", s.mean_ratio2},
                       {"mean_hl_uc", s.mean_hl_uc},
                       {"mean_hl_y", s.mean_hl_y},
                       {"mean_hl_yhat", s.mean_hl_yhat},
                       {"g_high_min", s.g_high_min},
                       {"g_high_max", s.g_high_max},
                       {"g_low_min", s.g_low_min},
                       {"g_low_max", s.g_low_max}};
}

inline void from_json(const nlohmann::json& j, AssumptionStats& s) {
    j.at("samples").get_to(s.samples);
    j.at("mean_ratio1").get_to(s.mean_ratio1);
    j.at("mean_ratio2").get_to(s.mean_ratio2);
    j.at("mean_hl_uc").get_to(s.mean_hl_uc);
    j.at("mean_hl_y").get_to(s.mean_hl_y);
    j.at("mean_hl_yhat").get_to(s.mean_hl_yhat);
    j.at("g_high_min").get_to(s.g_high_min);
    j.at("g_high_max").get_to(s.g_high_max);
    j.at("g_low_min").get_to(s.g_low_min);
    j.at("g_low_max").get_to(s.g_low_max);
}

inline Field2D channel_mean_field(const LatentTensor& z) {
    Field2D f(z.h, z.w, 0.0);
    for (int c = 0; c < z.c; ++c) {
        const double* p = z.plane(c);
        for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] += p[i];
    }
    for (double& x : f.v) x /= z.c;
    return f;
}

/// Per-sample assumption metrics for one frontend. For the encoder path the
/// comparable field is the channel-mean readout of the encoded panoramic
/// plane; for the bilinear baseline it is the down-up cycle of the target.
/// The downstream prediction for the gain columns is the fixed operator
/// applied to the comparable field.
inline std::vector<AssumptionReport> validate_assumptions(
    FrontendKind kind, const std::vector<std::pair<Field2D, Field2D>>& pairs,
    const RadialGrid& grid, double eps, const AssumptionHarness& harness) {
    if (pairs.empty()) throw InvalidInput("validate_assumptions: empty sample set");
    if (!harness.store || !harness.downstream)
        throw InvalidInput("validate_assumptions: missing downstream operator");
    if (kind == FrontendKind::encoder_proxy && !harness.encoder)
        throw InvalidInput("validate_assumptions: missing encoder");
    std::vector<AssumptionReport> reports(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
        const auto& [plane, y] = pairs[i];
        Field2D u_c = kind == FrontendKind::encoder_proxy
                          ? channel_mean_field(proxy_encode(*harness.store, *harness.encoder, plane))
                          : interp_down_up(y, harness.mid_h, harness.mid_w);
        LatentTensor uc1(1, u_c.h, u_c.w);
        uc1.v = u_c.v;
        Field2D y_hat = fno_forward(*harness.store, *harness.downstream, uc1).channel(0);
        reports[i] = assumption_metrics(u_c, y, y_hat, grid, eps);
    });
    return reports;
}

inline AssumptionStats aggregate(const std::vector<AssumptionReport>& reports) {
    if (reports.empty()) throw InvalidInput("aggregate: no reports");
    AssumptionStats s;
    s.samples = static_cast<long>(reports.size());
    s.g_high_min = s.g_high_max = reports[0].g_high;
    s.g_low_min = s.g_low_max = reports[0].g_low;
    for (const auto& r : reports) {
        s.mean_ratio1 += r.ratio1;
        s.mean_ratio2 += r.ratio2;
        s.mean_hl_uc += r.hl_uc;
        s.mean_hl_y += r.hl_y;
        s.mean_hl_yhat += r.hl_yhat;
        s.g_high_min = std::min(s.g_high_min, r.g_high);
        s.g_high_max = std::max(s.g_high_max, r.g_high);
        s.g_low_min = std::min(s.g_low_min, r.g_low);
        s.g_low_max = std::max(s.g_low_max, r.g_low);
    }
    s.mean_ratio1 /= s.samples;
    s.mean_ratio2 /= s.samples;
    s.mean_hl_uc /= s.samples;
    s.mean_hl_y /= s.samples;
    s.mean_hl_yhat /= s.samples;
    return s;
}

}  // namespace spamoe
