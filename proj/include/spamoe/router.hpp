#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "spamoe/autodiff.hpp"
#include "spamoe/spectral.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

struct RouterConfig {
    int in_channels = 1;  // 1 for the spectral path, C for the spatial baseline
    int attn_dim = 16;
    int agg_hidden = 32;
    int n_experts = 3;
};

struct RouterParams {
    RouterConfig cfg;
    int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1;
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

inline RouterParams init_router(ParamStore& store, const RouterConfig& cfg, Rng& rng,
                                const std::string& prefix = "router") {
    if (cfg.in_channels < 1 || cfg.attn_dim < 1 || cfg.agg_hidden < 1 || cfg.n_experts < 1)
        throw InvalidConfig("init_router: bad dimensions");
    auto mat = [&](const std::string& name, int rows, int cols) {
        double bound = std::sqrt(6.0 / (rows + cols));
        std::vector<double> v(static_cast<std::size_t>(rows) * cols);
        for (double& x : v) x = uniform(rng, -bound, bound);
        return store.add(prefix + "." + name, {rows, cols}, std::move(v));
    };
    auto vec = [&](const std::string& name, int n) {
        return store.add_zeros(prefix + "." + name, {n});
    };
    RouterParams p;
    p.cfg = cfg;
    p.wq = mat("wq", cfg.attn_dim, cfg.in_channels);
    p.bq = vec("bq", cfg.attn_dim);
    p.wk = mat("wk", cfg.attn_dim, cfg.in_channels);
    p.bk = vec("bk", cfg.attn_dim);
    p.wv = mat("wv", cfg.attn_dim, cfg.in_channels);
    p.bv = vec("bv", cfg.attn_dim);
    p.w1 = mat("w1", cfg.agg_hidden, cfg.attn_dim);
    p.b1 = vec("b1", cfg.agg_hidden);
    p.w2 = mat("w2", cfg.n_experts, cfg.agg_hidden);
    p.b2 = vec("b2", cfg.n_experts);
    return p;
}

/// Single-head attention over the token matrix [in_channels, T], then a
/// two-layer per-token head whose scores are mean-pooled into expert logits.
inline int attention_logits(ad::Tape& t, const ParamStore& store, const RouterParams& p,
                            int tokens) {
    const auto& dims = t.val(tokens).dims;
    if (dims.size() != 2 || dims[0] != p.cfg.in_channels)
        throw InvalidInput("attention_logits: token matrix does not match router channels");
    int wq = ad::param(t, store, p.wq), bq = ad::param(t, store, p.bq);
    int wk = ad::param(t, store, p.wk), bk = ad::param(t, store, p.bk);
    int wv = ad::param(t, store, p.wv), bv = ad::param(t, store, p.bv);
    int q = ad::add_bias_rows(t, ad::matmul(t, wq, tokens), bq);
    int k = ad::add_bias_rows(t, ad::matmul(t, wk, tokens), bk);
    int v = ad::add_bias_rows(t, ad::matmul(t, wv, tokens), bv);
    int scores = ad::scale(t, ad::matmul(t, q, k, true, false), 1.0 / std::sqrt(p.cfg.attn_dim));
    int attn = ad::softmax_rows(t, scores);
    int mixed = ad::matmul(t, v, attn, false, true);  // [d, T]
    int w1 = ad::param(t, store, p.w1), b1 = ad::param(t, store, p.b1);
    int w2 = ad::param(t, store, p.w2), b2 = ad::param(t, store, p.b2);
    int hidden = ad::silu(t, ad::add_bias_rows(t, ad::matmul(t, w1, mixed), b1));
    int per_token = ad::add_bias_rows(t, ad::matmul(t, w2, hidden), b2);
    return ad::mean_cols(t, per_token);  // [n_experts]
}

/// Amplitude energy map of a latent stack: sqrt of the channel-mean power
/// spectrum, centered.
inline Field2D energy_map(const LatentTensor& z) {
    if (!z.finite()) throw InvalidInput("energy_map: non-finite input");
    Field2D a = mean_power_spectrum(z);
    for (double& x : a.v) x = std::sqrt(x);
    return a;
}

inline std::vector<double> spectral_attention(const Field2D& amplitude, const ParamStore& store,
                                              const RouterParams& p) {
    ad::Tape t;
    int a = ad::input_field(t, amplitude);
    int tokens = ad::reshape(t, a, {1, amplitude.h * amplitude.w});
    int g = attention_logits(t, store, p, tokens);
    return t.val(g).re;
}

struct RouterDecision {
    std::vector<int> selected;   // ascending expert indices, |selected| = top_k
    std::vector<double> alpha;   // softmax over the selected logits, aligned
    std::vector<double> logits;  // all n_experts logits
};

/// Deterministic top-k selection: largest logits win, ties prefer the lower
/// expert index. The returned indices are sorted ascending.
inline std::vector<int> top_k_indices(const std::vector<double>& logits, int top_k) {
    if (top_k < 1 || top_k > static_cast<int>(logits.size()))
        throw InvalidConfig("gate: top_k out of range");
    std::vector<int> order(logits.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (logits[a] != logits[b]) return logits[a] > logits[b];
        return a < b;
    });
    std::vector<int> sel(order.begin(), order.begin() + top_k);
    std::sort(sel.begin(), sel.end());
    return sel;
}

inline RouterDecision gate(const std::vector<double>& logits, int top_k) {
    RouterDecision d;
    d.logits = logits;
    d.selected = top_k_indices(logits, top_k);
    double mx = -1e300;
    for (int e : d.selected) mx = std::max(mx, logits[e]);
    double sum = 0.0;
    d.alpha.resize(d.selected.size());
    for (std::size_t i = 0; i < d.selected.size(); ++i) {
        d.alpha[i] = std::exp(logits[d.selected[i]] - mx);
        sum += d.alpha[i];
    }
    for (double& a : d.alpha) a /= sum;
    return d;
}

/// Tape variant: the discrete selection reads current logit values (no
/// gradient through the choice) while alpha keeps gradients flowing into the
/// selected logits.
struct GateNodes {
    std::vector<int> selected;
    int alpha = -1;        // [top_k]
    int dense_alpha = -1;  // [n_experts], zeros off the selected set
};

inline GateNodes gate_on_tape(ad::Tape& t, int logits, int top_k) {
    int n_experts = static_cast<int>(t.val(logits).re.size());
    GateNodes g;
    g.selected = top_k_indices(t.val(logits).re, top_k);
    int picked = ad::gather_vec(t, logits, g.selected);
    g.alpha = ad::softmax_vec(t, picked);
    g.dense_alpha = ad::scatter_vec(t, g.alpha, g.selected, n_experts);
    return g;
}

inline RouterDecision spectral_gate(const LatentTensor& z, const ParamStore& store,
                                    const RouterParams& p, int top_k) {
    if (p.cfg.in_channels != 1)
        throw InvalidInput("spectral_gate: spectral router expects a 1-channel token feature");
    return gate(spectral_attention(energy_map(z), store, p), top_k);
}

/// Ablation baseline: identical attention pipeline over raw spatial tokens—
/// no transform, no energy map.
inline RouterDecision spatial_gate(const LatentTensor& z, const ParamStore& store,
                                   const RouterParams& p, int top_k) {
    if (p.cfg.in_channels != z.c)
        throw InvalidInput("spatial_gate: router channels do not match the latent stack");
    ad::Tape t;
    int zi = ad::input_latent(t, z);
    int tokens = ad::reshape(t, zi, {z.c, z.h * z.w});
    int g = attention_logits(t, store, p, tokens);
    return gate(t.val(g).re, top_k);
}

}  // namespace spamoe
