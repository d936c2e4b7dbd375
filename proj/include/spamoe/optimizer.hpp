#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "spamoe/autodiff.hpp"
#include "spamoe/common.hpp"

namespace spamoe {

/// Adaptive-moment optimizer with decoupled weight decay: the decay term
/// multiplies the weights directly (scaled by lr) instead of entering the
/// moment estimates.
struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long steps = 0;
    std::vector<std::vector<double>> m1, m2;

    explicit AdamW(const ParamStore& store) {
        for (const auto& e : store.entries) {
            m1.emplace_back(e.value.size(), 0.0);
            m2.emplace_back(e.value.size(), 0.0);
        }
    }

    void step(ParamStore& store, double lr, double weight_decay) {
        if (store.entries.size() != m1.size())
            throw InvalidState("AdamW: store layout changed after construction");
        ++steps;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
        for (std::size_t p = 0; p < store.entries.size(); ++p) {
            auto& e = store.entries[p];
            for (std::size_t i = 0; i < e.value.size(); ++i) {
                double g = e.grad[i];
                if (!std::isfinite(g))
                    throw NanGradient("non-finite gradient in parameter " + e.name);
                m1[p][i] = beta1 * m1[p][i] + (1.0 - beta1) * g;
                m2[p][i] = beta2 * m2[p][i] + (1.0 - beta2) * g * g;
                double mhat = m1[p][i] / bc1;
                double vhat = m2[p][i] / bc2;
                e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
                e.value[i] -= lr * weight_decay * e.value[i];
            }
        }
    }
};

}  // namespace spamoe
