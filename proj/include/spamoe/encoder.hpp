#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "spamoe/autodiff.hpp"
#include "spamoe/spectral.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

/// Concatenates all shots along the receiver axis, shot-major: the panoramic
/// plane has shape steps x (shots * receivers) with shot 0's receivers first.
inline Field2D reshape_shots(const Observation& x) {
    Field2D out(x.steps, x.shots * x.receivers);
    for (int s = 0; s < x.shots; ++s)
        for (int t = 0; t < x.steps; ++t)
            for (int r = 0; r < x.receivers; ++r)
                out.at(t, s * x.receivers + r) = x.at(s, t, r);
    return out;
}

/// Exact inverse of reshape_shots.
inline Observation unshape_shots(const Field2D& plane, int shots) {
    if (plane.w % shots != 0) throw InvalidInput("unshape_shots: width not divisible by shots");
    Observation x(shots, plane.h, plane.w / shots);
    for (int s = 0; s < shots; ++s)
        for (int t = 0; t < plane.h; ++t)
            for (int r = 0; r < x.receivers; ++r) x.at(s, t, r) = plane.at(t, s * x.receivers + r);
    return x;
}

// ---- trainable patch-encoder proxy ----

struct EncoderConfig {
    int patch_t = 4;       // patch extent along time
    int patch_r = 4;       // patch extent along receivers
    int token_dim = 16;
    int mixing_layers = 2;
    int head_stride_h = 4;  // token upsampling factors of the deconvolution head
    int head_stride_w = 4;
    int out_channels = 8;
    int out_h = 32;
    int out_w = 32;
};

struct EncoderProxyParams {
    EncoderConfig cfg;
    int patch_w = -1, patch_b = -1;
    struct Mixing {
        int w, b;
    };
    std::vector<Mixing> mixing;
    int head_w = -1, head_b = -1;
};

inline EncoderProxyParams init_encoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng,
                                       const std::string& prefix = "encoder") {
    if (cfg.patch_t < 1 || cfg.patch_r < 1 || cfg.token_dim < 1 || cfg.out_channels < 1)
        throw InvalidConfig("init_encoder: bad dimensions");
    if (cfg.head_stride_h < 1 || cfg.head_stride_w < 1)
        throw InvalidConfig("init_encoder: bad head strides");
    EncoderProxyParams p;
    p.cfg = cfg;
    int pin = cfg.patch_t * cfg.patch_r;
    double bound = std::sqrt(6.0 / (pin + cfg.token_dim));
    std::vector<double> pw(static_cast<std::size_t>(cfg.token_dim) * pin);
    for (double& x : pw) x = uniform(rng, -bound, bound);
    p.patch_w = store.add(prefix + ".patch.w", {cfg.token_dim, pin}, std::move(pw));
    p.patch_b = store.add_zeros(prefix + ".patch.b", {cfg.token_dim});
    for (int l = 0; l < cfg.mixing_layers; ++l) {
        double mb = std::sqrt(6.0 / (cfg.token_dim * 9.0 + cfg.token_dim));
        std::vector<double> mw(static_cast<std::size_t>(cfg.token_dim) * cfg.token_dim * 9);
        for (double& x : mw) x = uniform(rng, -mb, mb);
        p.mixing.push_back(EncoderProxyParams::Mixing{
            store.add(prefix + ".mix" + std::to_string(l) + ".w",
                      {cfg.token_dim, cfg.token_dim, 3, 3}, std::move(mw)),
            store.add_zeros(prefix + ".mix" + std::to_string(l) + ".b", {cfg.token_dim})});
    }
    int hs = cfg.head_stride_h * cfg.head_stride_w;
    double hb = std::sqrt(6.0 / (cfg.token_dim * hs + cfg.out_channels));
    std::vector<double> hw(static_cast<std::size_t>(cfg.out_channels) * cfg.token_dim * hs);
    for (double& x : hw) x = uniform(rng, -hb, hb);
    p.head_w = store.add(prefix + ".head.w",
                         {cfg.out_channels, cfg.token_dim, cfg.head_stride_h, cfg.head_stride_w},
                         std::move(hw));
    p.head_b = store.add_zeros(prefix + ".head.b", {cfg.out_channels});
    return p;
}

/// Patchify -> token mixing convolutions -> deconvolution head -> resample to
/// the target grid. Fully differentiable; output shape is exactly
/// out_channels x out_h x out_w.
inline int proxy_encode_tape(ad::Tape& t, const ParamStore& store, const EncoderProxyParams& p,
                             int plane) {
    const auto& dims = t.val(plane).dims;
    if (dims.size() != 2) throw InvalidInput("proxy_encode: need a 2D observation plane");
    int x3 = ad::reshape(t, plane, {1, dims[0], dims[1]});
    int tok = ad::patch_embed(t, x3, ad::param(t, store, p.patch_w),
                              ad::param(t, store, p.patch_b), p.cfg.patch_t, p.cfg.patch_r);
    for (const auto& m : p.mixing)
        tok = ad::silu(t, ad::conv2d(t, tok, ad::param(t, store, m.w), ad::param(t, store, m.b)));
    int up = ad::deconv_patch(t, tok, ad::param(t, store, p.head_w), ad::param(t, store, p.head_b));
    const auto& ud = t.val(up).dims;
    if (ud[1] != p.cfg.out_h || ud[2] != p.cfg.out_w)
        up = ad::bilinear_resize(t, up, p.cfg.out_h, p.cfg.out_w);
    return up;
}

inline LatentTensor proxy_encode(const ParamStore& store, const EncoderProxyParams& p,
                                 const Field2D& plane) {
    ad::Tape t;
    return ad::to_latent(t.val(proxy_encode_tape(t, store, p, ad::input_field(t, plane))));
}

// ---- bilinear baseline ----

/// Standard corner-aligned bilinear resampling (two taps per axis).
inline Field2D interp_resize(const Field2D& u, int ho, int wo) {
    if (ho < 2 || wo < 2) throw InvalidInput("interp_resize: target must be at least 2x2");
    auto rows = ad::resize_detail::corner_aligned(u.h, ho);
    auto cols = ad::resize_detail::corner_aligned(u.w, wo);
    Field2D out(ho, wo);
    for (int i = 0; i < ho; ++i) {
        const auto& ri = rows[i];
        for (int j = 0; j < wo; ++j) {
            const auto& cj = cols[j];
            out.at(i, j) = (1 - ri.f) * ((1 - cj.f) * u.at(ri.i0, cj.i0) + cj.f * u.at(ri.i0, cj.i1)) +
                           ri.f * ((1 - cj.f) * u.at(ri.i1, cj.i0) + cj.f * u.at(ri.i1, cj.i1));
        }
    }
    return out;
}

inline Field2D interp_down_up(const Field2D& u, int h_mid, int w_mid) {
    return interp_resize(interp_resize(u, h_mid, w_mid), u.h, u.w);
}

/// Per-bin diagonal response estimate of the down-up cycle, with the band
/// extremes read off against the radial split.
struct InterpResponse {
    Field2D response;        // |H(w)| per centered bin
    double alpha_hat = 0.0;  // max response over the high band
    double beta_hat = 0.0;   // min response over the low band
};

/// Drives up(down(.)) with a unit complex exponential per frequency bin and
/// records the output amplitude at the same bin. The probe pair (cos, sin)
/// realizes the complex probe through real resampling.
inline InterpResponse measure_interp_response(int h, int w, int h_mid, int w_mid,
                                              const RadialGrid& grid) {
    if (h_mid >= h && w_mid >= w)
        throw InvalidConfig("measure_interp_response: mid grid must lose resolution");
    if (h_mid < 2 || w_mid < 2) throw InvalidConfig("measure_interp_response: mid grid too small");
    if (grid.r.h != h || grid.r.w != w)
        throw InvalidInput("measure_interp_response: grid shape mismatch");
    InterpResponse result;
    result.response = Field2D(h, w);
    const int ch = h / 2, cw = w / 2;
    std::vector<double> amp(static_cast<std::size_t>(h) * w, 0.0);
    parallel_for(static_cast<std::size_t>(h) * w, [&](std::size_t bin) {
        int ki = static_cast<int>(bin) / w - ch;
        int kj = static_cast<int>(bin) % w - cw;
        Field2D re(h, w), im(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double ph = 2.0 * std::numbers::pi *
                            (static_cast<double>(ki) * y / h + static_cast<double>(kj) * x / w);
                re.at(y, x) = std::cos(ph);
                im.at(y, x) = std::sin(ph);
            }
        Field2D ore = interp_down_up(re, h_mid, w_mid);
        Field2D oim = interp_down_up(im, h_mid, w_mid);
        double acc_re = 0.0, acc_im = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double ph = 2.0 * std::numbers::pi *
                            (static_cast<double>(ki) * y / h + static_cast<double>(kj) * x / w);
                double cr = std::cos(ph), ci = -std::sin(ph);
                double vr = ore.at(y, x), vi = oim.at(y, x);
                acc_re += vr * cr - vi * ci;
                acc_im += vr * ci + vi * cr;
            }
        amp[bin] = std::hypot(acc_re, acc_im) / (static_cast<double>(h) * w);
    });
    result.response.v = amp;
    double a = 0.0, b = 1e300;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (grid.is_low(i, j))
                b = std::min(b, result.response.at(i, j));
            else
                a = std::max(a, result.response.at(i, j));
        }
    result.alpha_hat = a;
    result.beta_hat = b;
    return result;
}

}  // namespace spamoe
