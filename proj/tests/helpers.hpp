#pragma once

#include <algorithm>
#include <cmath>
#include <spamoe/autodiff.hpp>
#include <spamoe/fft.hpp>
#include <spamoe/tensor.hpp>

#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace testutil {

inline spamoe::Field2D random_field(int h, int w, spamoe::Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
    spamoe::Field2D f(h, w);
    for (double& x : f.v) x = spamoe::uniform(rng, lo, hi);
    return f;
}

inline spamoe::LatentTensor random_latent(int c, int h, int w, spamoe::Rng& rng,
                                          double lo = -1.0, double hi = 1.0) {
    spamoe::LatentTensor z(c, h, w);
    for (double& x : z.v) x = spamoe::uniform(rng, lo, hi);
    return z;
}

/// Brute-force inverse of the centered transform, straight from the
/// definition sum. Test-side oracle, independent of the library paths.
inline std::vector<std::complex<double>> idft_oracle(const spamoe::Spectrum2D& s) {
    const int h = s.h, w = s.w;
    std::vector<std::complex<double>> out(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::complex<double> acc = 0.0;
            for (int i = 0; i < h; ++i) {
                int ki = i - h / 2;
                for (int j = 0; j < w; ++j) {
                    int kj = j - w / 2;
                    double ph = 2.0 * std::numbers::pi *
                                (static_cast<double>(ki) * y / h + static_cast<double>(kj) * x / w);
                    acc += s.at(i, j) * std::polar(1.0, ph);
                }
            }
            out[static_cast<std::size_t>(y) * w + x] = acc / (static_cast<double>(h) * w);
        }
    return out;
}

/// Central finite-difference check of a tape-built scalar against the
/// reverse-mode gradient of one parameter tensor. build() must construct the
/// full graph from the current store values and return the loss node.
inline double max_rel_grad_error(spamoe::ParamStore& store, int pid,
                                 const std::function<int(spamoe::ad::Tape&)>& build,
                                 double h = 1e-6, int max_components = 16,
                                 spamoe::Rng* pick_rng = nullptr, double floor = 1e-6) {
    using spamoe::ad::Tape;
    store.zero_grads();
    Tape tape;
    int loss = build(tape);
    tape.backward(loss, store);
    auto& entry = store.at(pid);
    std::vector<std::size_t> picks;
    std::size_t n = entry.value.size();
    if (static_cast<int>(n) <= max_components) {
        for (std::size_t i = 0; i < n; ++i) picks.push_back(i);
    } else {
        spamoe::Rng local(12345);
        spamoe::Rng& r = pick_rng ? *pick_rng : local;
        for (int i = 0; i < max_components; ++i)
            picks.push_back(static_cast<std::size_t>(spamoe::uniform(r, 0.0, 1.0) * n) % n);
    }
    double worst = 0.0;
    for (std::size_t i : picks) {
        double saved = entry.value[i];
        entry.value[i] = saved + h;
        Tape tp;
        double up = tp.scalar(build(tp));
        entry.value[i] = saved - h;
        Tape tm;
        double down = tm.scalar(build(tm));
        entry.value[i] = saved;
        double fd = (up - down) / (2.0 * h);
        double an = entry.grad[i];
        // floor soaks central-difference cancellation noise on near-zero
        // gradients (noise scale ~ eps * |loss| / h)
        double denom = std::max({std::abs(fd), std::abs(an), floor});
        worst = std::max(worst, std::abs(fd - an) / denom);
    }
    return worst;
}

}  // namespace testutil
