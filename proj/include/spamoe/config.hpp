#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spamoe/train.hpp"

namespace spamoe {

/// Key-value run configuration: every knob of the model, data, and
/// optimization sections under one flat namespace. Files are plain
/// `key = value` lines, '#' starts a comment, unknown keys are rejected.
struct RunConfig {
    TrainConfig train;
    double lr = 1e-4;  // kept beside the schedule so flags can override it
    int epochs = -1;   // when set, wins over steps: steps = epochs * ceil(samples/batch)

    RunConfig() {
        train.schedule.base_lr = lr;
        train.weight_decay = 1e-4;
    }
};

namespace configdetail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

inline std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

}  // namespace configdetail

inline void apply_config_key(RunConfig& c, const std::string& key, const std::string& value) {
    using configdetail::parse_list;
    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };
    auto as_u64 = [&] { return static_cast<std::uint64_t>(std::stoull(value)); };

    static const std::map<std::string, std::function<void(RunConfig&, const std::string&)>>
        handlers = {
            // model
            {"channels", [](RunConfig& r, const std::string& v) { r.train.model.latent_channels = std::stoi(v); }},
            {"bands", [](RunConfig& r, const std::string& v) { r.train.model.bands = std::stoi(v); }},
            {"band_gamma", [](RunConfig& r, const std::string& v) { r.train.model.band_sharpness = std::stod(v); }},
            {"band_kind",
             [](RunConfig& r, const std::string& v) {
                 if (v == "soft")
                     r.train.model.band_kind = BandKind::soft;
                 else if (v == "hard")
                     r.train.model.band_kind = BandKind::hard;
                 else
                     throw InvalidConfig("band_kind must be soft or hard");
             }},
            {"eta", [](RunConfig& r, const std::string& v) { r.train.model.affinity_sharpness = std::stod(v); }},
            {"top_k", [](RunConfig& r, const std::string& v) { r.train.model.top_k = std::stoi(v); }},
            {"attn_dim", [](RunConfig& r, const std::string& v) { r.train.model.attn_dim = std::stoi(v); }},
            {"agg_hidden", [](RunConfig& r, const std::string& v) { r.train.model.agg_hidden = std::stoi(v); }},
            {"fno_layers", [](RunConfig& r, const std::string& v) { r.train.model.fno.layers = std::stoi(v); }},
            {"fno_modes_h", [](RunConfig& r, const std::string& v) { r.train.model.fno.modes_h = std::stoi(v); }},
            {"fno_modes_w", [](RunConfig& r, const std::string& v) { r.train.model.fno.modes_w = std::stoi(v); }},
            {"mno_layers", [](RunConfig& r, const std::string& v) { r.train.model.mno.layers = std::stoi(v); }},
            {"mno_kernel", [](RunConfig& r, const std::string& v) { r.train.model.mno.kernel = std::stoi(v); }},
            {"mno_scales",
             [](RunConfig& r, const std::string& v) { r.train.model.mno.scale_factors = configdetail::parse_list(v); }},
            {"lno_layers", [](RunConfig& r, const std::string& v) { r.train.model.lno.layers = std::stoi(v); }},
            {"lno_radius", [](RunConfig& r, const std::string& v) { r.train.model.lno.radius = std::stoi(v); }},
            {"enc_patch_t", [](RunConfig& r, const std::string& v) { r.train.model.encoder.patch_t = std::stoi(v); }},
            {"enc_patch_r", [](RunConfig& r, const std::string& v) { r.train.model.encoder.patch_r = std::stoi(v); }},
            {"enc_token_dim", [](RunConfig& r, const std::string& v) { r.train.model.encoder.token_dim = std::stoi(v); }},
            {"enc_mixing_layers",
             [](RunConfig& r, const std::string& v) { r.train.model.encoder.mixing_layers = std::stoi(v); }},
            {"enc_stride_h",
             [](RunConfig& r, const std::string& v) { r.train.model.encoder.head_stride_h = std::stoi(v); }},
            {"enc_stride_w",
             [](RunConfig& r, const std::string& v) { r.train.model.encoder.head_stride_w = std::stoi(v); }},
            {"r_split", [](RunConfig& r, const std::string& v) { r.train.model.split_radius = std::stod(v); }},
            {"eps", [](RunConfig& r, const std::string& v) { r.train.model.eps = std::stod(v); }},
            {"seed", [](RunConfig& r, const std::string& v) { r.train.model.seed = std::stoull(v); }},
            // data
            {"data_kind",
             [](RunConfig& r, const std::string& v) { r.train.data.kind = field_kind_from_string(v); }},
            {"samples", [](RunConfig& r, const std::string& v) { r.train.data.samples = std::stoi(v); }},
            {"height", [](RunConfig& r, const std::string& v) { r.train.data.h = std::stoi(v); }},
            {"width", [](RunConfig& r, const std::string& v) { r.train.data.w = std::stoi(v); }},
            {"data_layers", [](RunConfig& r, const std::string& v) { r.train.data.layers = std::stoi(v); }},
            {"fault_throw", [](RunConfig& r, const std::string& v) { r.train.data.fault_throw = std::stod(v); }},
            {"curvature", [](RunConfig& r, const std::string& v) { r.train.data.curvature = std::stod(v); }},
            {"slope", [](RunConfig& r, const std::string& v) { r.train.data.slope = std::stod(v); }},
            {"observe",
             [](RunConfig& r, const std::string& v) { r.train.data.observe = observe_mode_from_string(v); }},
            {"data_seed", [](RunConfig& r, const std::string& v) { r.train.data.seed = std::stoull(v); }},
            // optimization
            {"lr",
             [](RunConfig& r, const std::string& v) {
                 r.lr = std::stod(v);
                 r.train.schedule.base_lr = r.lr;
             }},
            {"weight_decay", [](RunConfig& r, const std::string& v) { r.train.weight_decay = std::stod(v); }},
            {"batch", [](RunConfig& r, const std::string& v) { r.train.batch = std::stoi(v); }},
            {"steps", [](RunConfig& r, const std::string& v) { r.train.steps = std::stoi(v); }},
            {"epochs", [](RunConfig& r, const std::string& v) { r.epochs = std::stoi(v); }},
            {"warmup", [](RunConfig& r, const std::string& v) { r.train.schedule.warmup_epochs = std::stoi(v); }},
            {"t0", [](RunConfig& r, const std::string& v) { r.train.schedule.t0 = std::stoi(v); }},
            {"t_mult", [](RunConfig& r, const std::string& v) { r.train.schedule.t_mult = std::stoi(v); }},
            {"scheduler_gamma",
             [](RunConfig& r, const std::string& v) { r.train.schedule.restart_decay = std::stod(v); }},
            {"lambda_grad", [](RunConfig& r, const std::string& v) { r.train.weights.grad_l1 = std::stod(v); }},
            {"lambda_freq", [](RunConfig& r, const std::string& v) { r.train.weights.fourier_l1 = std::stod(v); }},
            {"lambda_ce", [](RunConfig& r, const std::string& v) { r.train.weights.load_balance = std::stod(v); }},
            {"lambda_l1", [](RunConfig& r, const std::string& v) { r.train.weights.router_l1 = std::stod(v); }},
            {"lambda_l2", [](RunConfig& r, const std::string& v) { r.train.weights.router_l2 = std::stod(v); }},
            {"eval_samples", [](RunConfig& r, const std::string& v) { r.train.eval_samples = std::stoi(v); }},
        };
    (void)as_int;
    (void)as_double;
    (void)as_u64;
    auto it = handlers.find(key);
    if (it == handlers.end()) throw InvalidConfig("unknown configuration key: " + key);
    try {
        it->second(c, value);
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw InvalidConfig("bad value for key " + key + ": " + value);
    }
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError(path + ": cannot open config");
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = configdetail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidConfig(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = configdetail::trim(line.substr(0, eq));
        std::string value = configdetail::trim(line.substr(eq + 1));
        apply_config_key(cfg, key, value);
    }
    return cfg;
}

/// Resolves the epochs-vs-steps choice after all overrides landed.
inline void finalize_run_config(RunConfig& cfg) {
    if (cfg.epochs >= 0) {
        int steps_per_epoch = (cfg.train.data.samples + cfg.train.batch - 1) / cfg.train.batch;
        cfg.train.steps = cfg.epochs * steps_per_epoch;
    }
    cfg.train.schedule.base_lr = cfg.lr;
}

}  // namespace spamoe
