#pragma once

#include <cmath>
#include <numbers>

#include "spamoe/common.hpp"

namespace spamoe {

/// Linear warmup into cosine annealing with warm restarts: cycle i has
/// length T0 * t_mult^i and peak base_lr * restart_decay^i.
struct ScheduleConfig {
    double base_lr = 1e-4;
    int warmup_epochs = 5;
    int t0 = 10;
    int t_mult = 2;
    double restart_decay = 0.3;
};

inline void validate(const ScheduleConfig& s) {
    if (s.warmup_epochs < 0 || s.t0 < 1 || s.t_mult < 1)
        throw InvalidConfig("schedule: warmup >= 0, t0 >= 1, t_mult >= 1 required");
    if (!(s.restart_decay > 0.0 && s.restart_decay <= 1.0))
        throw InvalidConfig("schedule: restart decay must lie in (0,1]");
    if (!(s.base_lr > 0.0)) throw InvalidConfig("schedule: base_lr must be positive");
}

inline double lr_at(long epoch, const ScheduleConfig& s) {
    validate(s);
    if (epoch < 0) throw InvalidInput("lr_at: negative epoch");
    if (epoch < s.warmup_epochs)
        return s.base_lr * static_cast<double>(epoch + 1) / s.warmup_epochs;
    long t = epoch - s.warmup_epochs;
    long len = s.t0;
    double peak = s.base_lr;
    while (t >= len) {
        t -= len;
        len *= s.t_mult;
        peak *= s.restart_decay;
    }
    return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / len));
}

}  // namespace spamoe
