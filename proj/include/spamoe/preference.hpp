#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "spamoe/tensor.hpp"

namespace spamoe {

inline constexpr double kDefaultAffinitySharpness = 10.0;

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Per-expert frequency preference. The preference values live in [0,1]
/// through a logistic reparameterization of unconstrained raw parameters, so
/// optimizers never need projection. Initialization spreads experts evenly
/// over [0,1] (clamped away from the logistic asymptotes).
struct FrequencyPreference {
    std::vector<double> raw;
    double sharpness = kDefaultAffinitySharpness;

    static FrequencyPreference evenly_spaced(int n_experts,
                                             double sharpness = kDefaultAffinitySharpness) {
        if (n_experts < 1) throw InvalidInput("FrequencyPreference: need at least one expert");
        FrequencyPreference p;
        p.sharpness = sharpness;
        p.raw.resize(n_experts);
        for (int e = 0; e < n_experts; ++e) {
            double target = n_experts == 1 ? 0.5 : static_cast<double>(e) / (n_experts - 1);
            target = std::min(0.999, std::max(0.001, target));
            p.raw[e] = logit(target);
        }
        return p;
    }

    std::vector<double> values() const {
        std::vector<double> f(raw.size());
        for (std::size_t e = 0; e < raw.size(); ++e) f[e] = logistic(raw[e]);
        return f;
    }
};

/// Row-softmax of the negated squared distances between preference values and
/// band centers. Each row is a probability vector over the K bands.
inline std::vector<std::vector<double>> band_affinity_values(const std::vector<double>& prefs,
                                                             const std::vector<double>& centers,
                                                             double sharpness) {
    if (centers.size() < 2) throw InvalidInput("band_affinity: need at least 2 bands");
    if (!(sharpness > 0.0)) throw InvalidInput("band_affinity: sharpness must be > 0");
    std::vector<std::vector<double>> pi(prefs.size(), std::vector<double>(centers.size()));
    for (std::size_t e = 0; e < prefs.size(); ++e) {
        double best = -1e300;
        std::vector<double> score(centers.size());
        for (std::size_t k = 0; k < centers.size(); ++k) {
            double d = prefs[e] - centers[k];
            score[k] = -sharpness * d * d;
            best = std::max(best, score[k]);
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < centers.size(); ++k) {
            pi[e][k] = std::exp(score[k] - best);
            sum += pi[e][k];
        }
        for (double& x : pi[e]) x /= sum;
    }
    return pi;
}

inline std::vector<std::vector<double>> band_affinity(const FrequencyPreference& pref,
                                                      const std::vector<double>& centers) {
    return band_affinity_values(pref.values(), centers, pref.sharpness);
}

/// Convex band mixture feeding one expert.
inline LatentTensor mix_bands(const std::vector<LatentTensor>& bands,
                              const std::vector<double>& weights) {
    if (bands.empty() || bands.size() != weights.size())
        throw InvalidInput("mix_bands: band/weight count mismatch");
    LatentTensor out(bands[0].c, bands[0].h, bands[0].w);
    for (std::size_t k = 0; k < bands.size(); ++k) {
        if (bands[k].c != out.c || bands[k].h != out.h || bands[k].w != out.w)
            throw InvalidInput("mix_bands: band shape mismatch");
        double wk = weights[k];
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += wk * bands[k].v[i];
    }
    return out;
}

/// Gradient of sum_{e,k} upstream[e][k] * pi[e][k] with respect to the raw
/// preference parameters: chain rule through the row softmax, the quadratic
/// affinity score, and the logistic map.
inline std::vector<double> affinity_gradient(const FrequencyPreference& pref,
                                             const std::vector<double>& centers,
                                             const std::vector<std::vector<double>>& upstream) {
    if (upstream.size() != pref.raw.size())
        throw InvalidInput("affinity_gradient: upstream rows mismatch");
    std::vector<double> f = pref.values();
    auto pi = band_affinity_values(f, centers, pref.sharpness);
    std::vector<double> grad(pref.raw.size(), 0.0);
    for (std::size_t e = 0; e < pref.raw.size(); ++e) {
        if (upstream[e].size() != centers.size())
            throw InvalidInput("affinity_gradient: upstream cols mismatch");
        // d(sum u.pi)/ds_k = pi_k * (u_k - sum_j u_j pi_j)
        double mixed = 0.0;
        for (std::size_t k = 0; k < centers.size(); ++k) mixed += upstream[e][k] * pi[e][k];
        double df = 0.0;
        for (std::size_t k = 0; k < centers.size(); ++k) {
            double ds = pi[e][k] * (upstream[e][k] - mixed);
            df += ds * (-2.0 * pref.sharpness * (f[e] - centers[k]));
        }
        grad[e] = df * f[e] * (1.0 - f[e]);
    }
    return grad;
}

}  // namespace spamoe
