#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "spamoe/autodiff.hpp"
#include "spamoe/router.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

enum class Activation { silu, identity };

inline int apply_act(ad::Tape& t, int x, Activation act) {
    return act == Activation::silu ? ad::silu(t, x) : x;
}

// ---- FNO: global spectral convolution expert ----

struct FnoConfig {
    int channels = 8;
    int layers = 2;
    int modes_h = 8;
    int modes_w = 8;
    Activation act = Activation::silu;
};

struct FnoParams {
    FnoConfig cfg;
    struct Layer {
        int w_re, w_im;  // [C, C, slots] complex spectral weights
        int pw, pb;      // pointwise skip path
    };
    std::vector<Layer> layers;
    int slots = 0;  // (2*modes_h - 1) * (2*modes_w - 1)
};

inline FnoParams init_fno(ParamStore& store, const FnoConfig& cfg, Rng& rng,
                          const std::string& prefix = "fno") {
    if (cfg.channels < 1 || cfg.layers < 1 || cfg.modes_h < 1 || cfg.modes_w < 1)
        throw InvalidConfig("init_fno: bad dimensions");
    FnoParams p;
    p.cfg = cfg;
    p.slots = (2 * cfg.modes_h - 1) * (2 * cfg.modes_w - 1);
    double scale = 1.0 / cfg.channels;
    for (int l = 0; l < cfg.layers; ++l) {
        auto spectral = [&](const std::string& part) {
            std::vector<double> v(static_cast<std::size_t>(cfg.channels) * cfg.channels * p.slots);
            for (double& x : v) x = scale * uniform(rng, -1.0, 1.0);
            return store.add(prefix + ".l" + std::to_string(l) + "." + part,
                             {cfg.channels, cfg.channels, p.slots}, std::move(v));
        };
        std::vector<double> pw(static_cast<std::size_t>(cfg.channels) * cfg.channels);
        double bound = std::sqrt(6.0 / (2.0 * cfg.channels));
        for (double& x : pw) x = uniform(rng, -bound, bound);
        p.layers.push_back(FnoParams::Layer{
            spectral("wre"), spectral("wim"),
            store.add(prefix + ".l" + std::to_string(l) + ".pw",
                      {cfg.channels, cfg.channels, 1, 1}, std::move(pw)),
            store.add_zeros(prefix + ".l" + std::to_string(l) + ".pb", {cfg.channels})});
    }
    return p;
}

/// Retained-bin bookkeeping for a centered h x w spectrum: offsets
/// |di| <= modes_h-1 and |dj| <= modes_w-1 around the DC bin, clipped to the
/// grid. Returns (flat spectrum index, weight slot index) pairs so the
/// parameter layout is grid-independent.
struct FnoBins {
    std::vector<int> flat;
    std::vector<int> slot;
};

inline FnoBins fno_bins(int h, int w, int modes_h, int modes_w) {
    if (modes_h > h / 2 + 1 || modes_w > w / 2 + 1)
        throw InvalidConfig("fno: retained modes exceed the grid Nyquist extents");
    FnoBins bins;
    int ch = h / 2, cw = w / 2;
    for (int di = -(modes_h - 1); di <= modes_h - 1; ++di) {
        int i = ch + di;
        for (int dj = -(modes_w - 1); dj <= modes_w - 1; ++dj) {
            int j = cw + dj;
            int s = (di + modes_h - 1) * (2 * modes_w - 1) + (dj + modes_w - 1);
            if (i < 0 || i >= h || j < 0 || j >= w) continue;
            bins.flat.push_back(i * w + j);
            bins.slot.push_back(s);
        }
    }
    return bins;
}

namespace ad_ops {

/// fno_mul wrapper that routes each retained bin to its weight slot.
inline int fno_mul_slots(ad::Tape& t, int x, int w_re, int w_im, const FnoBins& bins, int cout,
                         int slots) {
    // Re-pack: ad::fno_mul expects per-bin weights; gather slots via an index
    // indirection kept inside the closure-free fast path below.
    const ad::Value& vx = t.val(x);
    const ad::Value& wr = t.val(w_re);
    const ad::Value& wi = t.val(w_im);
    int cin = vx.dims[0], h = vx.dims[1], w = vx.dims[2];
    if (wr.dims != std::vector<int>{cout, cin, slots} || wi.dims != wr.dims)
        throw InvalidInput("fno_mul_slots: weight dims mismatch");
    std::size_t plane = static_cast<std::size_t>(h) * w;
    ad::Value out;
    out.dims = {cout, h, w};
    out.re.assign(static_cast<std::size_t>(cout) * plane, 0.0);
    out.im.assign(static_cast<std::size_t>(cout) * plane, 0.0);
    std::size_t nb = bins.flat.size();
    for (int f = 0; f < cout; ++f)
        for (int c = 0; c < cin; ++c) {
            const double* wrp = wr.re.data() + (static_cast<std::size_t>(f) * cin + c) * slots;
            const double* wip = wi.re.data() + (static_cast<std::size_t>(f) * cin + c) * slots;
            for (std::size_t bi = 0; bi < nb; ++bi) {
                std::size_t p = static_cast<std::size_t>(bins.flat[bi]);
                int s = bins.slot[bi];
                double xr = vx.re[c * plane + p], xi = vx.im[c * plane + p];
                out.re[f * plane + p] += wrp[s] * xr - wip[s] * xi;
                out.im[f * plane + p] += wrp[s] * xi + wip[s] * xr;
            }
        }
    int id = t.push(std::move(out));
    FnoBins bc = bins;
    t.nodes.back().back = [x, w_re, w_im, id, bc, cout, slots, plane](ad::Tape& tp) {
        const ad::Value& g = tp.grad(id);
        const ad::Value& vx2 = tp.val(x);
        const ad::Value& wr2 = tp.val(w_re);
        const ad::Value& wi2 = tp.val(w_im);
        ad::Value& gx = tp.grad(x);
        ad::Value& gwr = tp.grad(w_re);
        ad::Value& gwi = tp.grad(w_im);
        int cin = vx2.dims[0];
        std::size_t nb = bc.flat.size();
        for (int f = 0; f < cout; ++f)
            for (int c = 0; c < cin; ++c) {
                const double* wrp = wr2.re.data() + (static_cast<std::size_t>(f) * cin + c) * slots;
                const double* wip = wi2.re.data() + (static_cast<std::size_t>(f) * cin + c) * slots;
                double* gwrp = gwr.re.data() + (static_cast<std::size_t>(f) * cin + c) * slots;
                double* gwip = gwi.re.data() + (static_cast<std::size_t>(f) * cin + c) * slots;
                for (std::size_t bi = 0; bi < nb; ++bi) {
                    std::size_t p = static_cast<std::size_t>(bc.flat[bi]);
                    int s = bc.slot[bi];
                    double zr = g.re[f * plane + p], zi = g.im[f * plane + p];
                    double xr = vx2.re[c * plane + p], xi = vx2.im[c * plane + p];
                    gx.re[c * plane + p] += wrp[s] * zr + wip[s] * zi;
                    gx.im[c * plane + p] += wrp[s] * zi - wip[s] * zr;
                    gwrp[s] += zr * xr + zi * xi;
                    gwip[s] += zi * xr - zr * xi;
                }
            }
    };
    return id;
}

}  // namespace ad_ops

inline int fno_forward_tape(ad::Tape& t, const ParamStore& store, const FnoParams& p, int x) {
    const auto& dims = t.val(x).dims;
    if (dims.size() != 3 || dims[0] != p.cfg.channels)
        throw InvalidInput("fno_forward: channel mismatch");
    FnoBins bins = fno_bins(dims[1], dims[2], p.cfg.modes_h, p.cfg.modes_w);
    int cur = x;
    for (int l = 0; l < p.cfg.layers; ++l) {
        const auto& L = p.layers[l];
        int spec = ad::dft2(t, cur);
        int mixed = ad_ops::fno_mul_slots(t, spec, ad::param(t, store, L.w_re),
                                          ad::param(t, store, L.w_im), bins, p.cfg.channels,
                                          p.slots);
        int spatial = ad::idft2_real(t, mixed);
        int skip = ad::conv2d(t, cur, ad::param(t, store, L.pw), ad::param(t, store, L.pb));
        cur = ad::add(t, spatial, skip);
        if (l + 1 < p.cfg.layers) cur = apply_act(t, cur, p.cfg.act);
    }
    return cur;
}

inline LatentTensor fno_forward(const ParamStore& store, const FnoParams& p,
                                const LatentTensor& z) {
    ad::Tape t;
    return ad::to_latent(t.val(fno_forward_tape(t, store, p, ad::input_latent(t, z))));
}

// ---- MNO: multi-scale convolution expert ----

struct MnoConfig {
    int channels = 8;
    int layers = 2;
    int kernel = 3;
    std::vector<double> scale_factors = {1.0, 0.6, 0.3};
    Activation act = Activation::silu;
};

struct MnoParams {
    MnoConfig cfg;
    struct Branch {
        int kw, kb;  // scale-branch convolution
        int pw, pb;  // pointwise map after the convolution
    };
    std::vector<std::vector<Branch>> layers;  // [layer][scale]
};

inline MnoParams init_mno(ParamStore& store, const MnoConfig& cfg, Rng& rng,
                          const std::string& prefix = "mno") {
    if (cfg.kernel % 2 == 0) throw InvalidConfig("init_mno: kernel size must be odd");
    if (cfg.scale_factors.empty()) throw InvalidConfig("init_mno: need at least one scale");
    for (double f : cfg.scale_factors)
        if (!(f > 0.0 && f <= 1.0)) throw InvalidConfig("init_mno: scale factors must be in (0,1]");
    MnoParams p;
    p.cfg = cfg;
    int c = cfg.channels;
    for (int l = 0; l < cfg.layers; ++l) {
        std::vector<MnoParams::Branch> branches;
        for (std::size_t s = 0; s < cfg.scale_factors.size(); ++s) {
            std::string base = prefix + ".l" + std::to_string(l) + ".s" + std::to_string(s);
            double bound = std::sqrt(6.0 / (c * cfg.kernel * cfg.kernel + c));
            std::vector<double> kw(static_cast<std::size_t>(c) * c * cfg.kernel * cfg.kernel);
            for (double& x : kw) x = uniform(rng, -bound, bound);
            std::vector<double> pw(static_cast<std::size_t>(c) * c);
            double pbound = std::sqrt(6.0 / (2.0 * c));
            for (double& x : pw) x = uniform(rng, -pbound, pbound);
            branches.push_back(MnoParams::Branch{
                store.add(base + ".kw", {c, c, cfg.kernel, cfg.kernel}, std::move(kw)),
                store.add_zeros(base + ".kb", {c}),
                store.add(base + ".pw", {c, c, 1, 1}, std::move(pw)),
                store.add_zeros(base + ".pb", {c})});
        }
        p.layers.push_back(std::move(branches));
    }
    return p;
}

inline int mno_forward_tape(ad::Tape& t, const ParamStore& store, const MnoParams& p, int x) {
    const auto& dims = t.val(x).dims;
    if (dims.size() != 3 || dims[0] != p.cfg.channels)
        throw InvalidInput("mno_forward: channel mismatch");
    int h = dims[1], w = dims[2];
    int cur = x;
    for (int l = 0; l < p.cfg.layers; ++l) {
        int sum = -1;
        for (std::size_t s = 0; s < p.cfg.scale_factors.size(); ++s) {
            double f = p.cfg.scale_factors[s];
            int ho = std::max(1, static_cast<int>(std::lround(h * f)));
            int wo = std::max(1, static_cast<int>(std::lround(w * f)));
            if (ho < p.cfg.kernel || wo < p.cfg.kernel)
                throw InvalidConfig("mno_forward: scale produces a grid below the kernel extent");
            const auto& br = p.layers[l][s];
            int branch = cur;
            if (ho != h || wo != w) branch = ad::area_downsample(t, branch, ho, wo);
            branch = ad::conv2d(t, branch, ad::param(t, store, br.kw), ad::param(t, store, br.kb));
            branch = ad::conv2d(t, branch, ad::param(t, store, br.pw), ad::param(t, store, br.pb));
            if (ho != h || wo != w) branch = ad::bilinear_resize(t, branch, h, w);
            sum = sum < 0 ? branch : ad::add(t, sum, branch);
        }
        cur = sum;
        if (l + 1 < p.cfg.layers) cur = apply_act(t, cur, p.cfg.act);
    }
    return cur;
}

inline LatentTensor mno_forward(const ParamStore& store, const MnoParams& p,
                                const LatentTensor& z) {
    ad::Tape t;
    return ad::to_latent(t.val(mno_forward_tape(t, store, p, ad::input_latent(t, z))));
}

// ---- LNO: local stencil expert ----

struct LnoConfig {
    int channels = 8;
    int layers = 2;
    int radius = 1;  // stencil covers a (2*radius+1)^2 neighborhood
    Activation act = Activation::silu;
};

struct LnoParams {
    LnoConfig cfg;
    struct Layer {
        int kw, kb;
    };
    std::vector<Layer> layers;
};

inline LnoParams init_lno(ParamStore& store, const LnoConfig& cfg, Rng& rng,
                          const std::string& prefix = "lno") {
    if (cfg.radius < 1) throw InvalidConfig("init_lno: radius must be at least 1");
    LnoParams p;
    p.cfg = cfg;
    int c = cfg.channels, k = 2 * cfg.radius + 1;
    for (int l = 0; l < cfg.layers; ++l) {
        double bound = std::sqrt(6.0 / (c * k * k + c));
        std::vector<double> kw(static_cast<std::size_t>(c) * c * k * k);
        for (double& x : kw) x = uniform(rng, -bound, bound);
        p.layers.push_back(LnoParams::Layer{
            store.add(prefix + ".l" + std::to_string(l) + ".kw", {c, c, k, k}, std::move(kw)),
            store.add_zeros(prefix + ".l" + std::to_string(l) + ".kb", {c})});
    }
    return p;
}

inline int lno_forward_tape(ad::Tape& t, const ParamStore& store, const LnoParams& p, int x) {
    const auto& dims = t.val(x).dims;
    if (dims.size() != 3 || dims[0] != p.cfg.channels)
        throw InvalidInput("lno_forward: channel mismatch");
    if (2 * p.cfg.radius + 1 > std::min(dims[1], dims[2]))
        throw InvalidConfig("lno_forward: neighborhood radius exceeds the grid");
    int cur = x;
    for (int l = 0; l < p.cfg.layers; ++l) {
        cur = ad::conv2d(t, cur, ad::param(t, store, p.layers[l].kw),
                         ad::param(t, store, p.layers[l].kb));
        if (l + 1 < p.cfg.layers) cur = apply_act(t, cur, p.cfg.act);
    }
    return cur;
}

inline LatentTensor lno_forward(const ParamStore& store, const LnoParams& p,
                                const LatentTensor& z) {
    ad::Tape t;
    return ad::to_latent(t.val(lno_forward_tape(t, store, p, ad::input_latent(t, z))));
}

// ---- fusion ----

/// Shared 1-channel readout collapsing expert stacks to a field.
struct ReadoutParams {
    int w = -1, b = -1;
    int channels = 0;
};

inline ReadoutParams init_readout(ParamStore& store, int channels, Rng& rng,
                                  const std::string& prefix = "readout") {
    ReadoutParams p;
    p.channels = channels;
    double bound = std::sqrt(6.0 / (channels + 1.0));
    std::vector<double> w(static_cast<std::size_t>(channels));
    for (double& x : w) x = uniform(rng, -bound, bound);
    p.w = store.add(prefix + ".w", {1, channels, 1, 1}, std::move(w));
    p.b = store.add_zeros(prefix + ".b", {1});
    return p;
}

/// Gated fusion over per-field expert outputs (already collapsed to H x W).
inline Field2D moe_fuse(const RouterDecision& decision, const std::vector<Field2D>& outputs) {
    if (outputs.size() != decision.selected.size())
        throw InvalidInput("moe_fuse: outputs must match the selected expert set");
    if (outputs.empty()) throw InvalidInput("moe_fuse: no expert outputs");
    Field2D acc(outputs[0].h, outputs[0].w, 0.0);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        require_same_shape(acc, outputs[i], "moe_fuse");
        for (std::size_t j = 0; j < acc.v.size(); ++j)
            acc.v[j] += decision.alpha[i] * outputs[i].v[j];
    }
    return acc;
}

/// Gated fusion over latent expert outputs followed by the shared readout.
inline Field2D moe_fuse(const RouterDecision& decision, const std::vector<LatentTensor>& outputs,
                        const ParamStore& store, const ReadoutParams& readout) {
    if (outputs.size() != decision.selected.size())
        throw InvalidInput("moe_fuse: outputs must match the selected expert set");
    if (outputs.empty()) throw InvalidInput("moe_fuse: no expert outputs");
    ad::Tape t;
    std::vector<int> ids;
    for (const auto& o : outputs) ids.push_back(ad::input_latent(t, o));
    int alpha = ad::constant(t, ad::Value::real({static_cast<int>(decision.alpha.size())},
                                                decision.alpha));
    int fused = ad::lincomb(t, ids, alpha);
    int field = ad::conv2d(t, fused, ad::param(t, store, readout.w), ad::param(t, store, readout.b));
    return ad::to_field(t.val(field));
}

}  // namespace spamoe
