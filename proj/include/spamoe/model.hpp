#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "spamoe/autodiff.hpp"
#include "spamoe/bands.hpp"
#include "spamoe/encoder.hpp"
#include "spamoe/experts.hpp"
#include "spamoe/preference.hpp"
#include "spamoe/router.hpp"
#include "spamoe/spectral.hpp"

namespace spamoe {

struct SpamoeConfig {
    int latent_channels = 8;
    int out_h = 70;
    int out_w = 70;

    int bands = 3;
    double band_sharpness = 20.0;
    BandKind band_kind = BandKind::soft;
    bool normalized_masks = false;

    double affinity_sharpness = 10.0;
    int top_k = 2;

    int attn_dim = 16;
    int agg_hidden = 32;

    FnoConfig fno;
    MnoConfig mno;
    LnoConfig lno;
    EncoderConfig encoder;

    double split_radius = kDefaultSplitRadius;
    double eps = kDefaultEps;
    std::uint64_t seed = 0;

    static constexpr int n_experts = 3;  // one of each operator family
};

inline void to_json(nlohmann::json& j, const SpamoeConfig& c) {
    j = nlohmann::json{
        {"latent_channels", c.latent_channels},
        {"out_h", c.out_h},
        {"out_w", c.out_w},
        {"bands", c.bands},
        {"band_sharpness", c.band_sharpness},
        {"band_kind", c.band_kind == BandKind::soft ? "soft" : "hard"},
        {"normalized_masks", c.normalized_masks},
        {"affinity_sharpness", c.affinity_sharpness},
        {"top_k", c.top_k},
        {"attn_dim", c.attn_dim},
        {"agg_hidden", c.agg_hidden},
        {"fno", {{"layers", c.fno.layers}, {"modes_h", c.fno.modes_h}, {"modes_w", c.fno.modes_w}}},
        {"mno",
         {{"layers", c.mno.layers}, {"kernel", c.mno.kernel}, {"scale_factors", c.mno.scale_factors}}},
        {"lno", {{"layers", c.lno.layers}, {"radius", c.lno.radius}}},
        {"encoder",
         {{"patch_t", c.encoder.patch_t},
          {"patch_r", c.encoder.patch_r},
          {"token_dim", c.encoder.token_dim},
          {"mixing_layers", c.encoder.mixing_layers},
          {"head_stride_h", c.encoder.head_stride_h},
          {"head_stride_w", c.encoder.head_stride_w}}},
        {"split_radius", c.split_radius},
        {"eps", c.eps},
        {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SpamoeConfig& c) {
    j.at("latent_channels").get_to(c.latent_channels);
    j.at("out_h").get_to(c.out_h);
    j.at("out_w").get_to(c.out_w);
    j.at("bands").get_to(c.bands);
    j.at("band_sharpness").get_to(c.band_sharpness);
    c.band_kind = j.at("band_kind").get<std::string>() == "hard" ? BandKind::hard : BandKind::soft;
    j.at("normalized_masks").get_to(c.normalized_masks);
    j.at("affinity_sharpness").get_to(c.affinity_sharpness);
    j.at("top_k").get_to(c.top_k);
    j.at("attn_dim").get_to(c.attn_dim);
    j.at("agg_hidden").get_to(c.agg_hidden);
    j.at("fno").at("layers").get_to(c.fno.layers);
    j.at("fno").at("modes_h").get_to(c.fno.modes_h);
    j.at("fno").at("modes_w").get_to(c.fno.modes_w);
    j.at("mno").at("layers").get_to(c.mno.layers);
    j.at("mno").at("kernel").get_to(c.mno.kernel);
    j.at("mno").at("scale_factors").get_to(c.mno.scale_factors);
    j.at("lno").at("layers").get_to(c.lno.layers);
    j.at("lno").at("radius").get_to(c.lno.radius);
    j.at("encoder").at("patch_t").get_to(c.encoder.patch_t);
    j.at("encoder").at("patch_r").get_to(c.encoder.patch_r);
    j.at("encoder").at("token_dim").get_to(c.encoder.token_dim);
    j.at("encoder").at("mixing_layers").get_to(c.encoder.mixing_layers);
    j.at("encoder").at("head_stride_h").get_to(c.encoder.head_stride_h);
    j.at("encoder").at("head_stride_w").get_to(c.encoder.head_stride_w);
    j.at("split_radius").get_to(c.split_radius);
    j.at("eps").get_to(c.eps);
    j.at("seed").get_to(c.seed);
}

struct SpamoeModel {
    SpamoeConfig cfg;
    ParamStore store;
    EncoderProxyParams encoder;
    int pref_raw = -1;  // raw frequency-preference parameters, one per expert
    RouterParams router;
    FnoParams fno;
    MnoParams mno;
    LnoParams lno;
    ReadoutParams readout;
    std::shared_ptr<const BandMaskSet> masks;
    RadialGrid grid;

    FrequencyPreference preference() const {
        FrequencyPreference p;
        p.raw = store.at(pref_raw).value;
        p.sharpness = cfg.affinity_sharpness;
        return p;
    }
};

inline SpamoeModel build_model(SpamoeConfig cfg) {
    if (cfg.top_k < 1 || cfg.top_k > SpamoeConfig::n_experts)
        throw InvalidConfig("build_model: top_k out of range");
    if (cfg.bands < 2) throw InvalidConfig("build_model: need at least 2 bands");
    // derived shape fields: the submodule configs always follow the model
    cfg.encoder.out_channels = cfg.latent_channels;
    cfg.encoder.out_h = cfg.out_h;
    cfg.encoder.out_w = cfg.out_w;
    cfg.fno.channels = cfg.latent_channels;
    cfg.mno.channels = cfg.latent_channels;
    cfg.lno.channels = cfg.latent_channels;

    SpamoeModel m;
    m.cfg = cfg;
    Rng rng(cfg.seed);
    m.encoder = init_encoder(m.store, cfg.encoder, rng);
    FrequencyPreference pref =
        FrequencyPreference::evenly_spaced(SpamoeConfig::n_experts, cfg.affinity_sharpness);
    m.pref_raw = m.store.add("preference.raw", {SpamoeConfig::n_experts}, pref.raw);
    RouterConfig rc;
    rc.in_channels = 1;
    rc.attn_dim = cfg.attn_dim;
    rc.agg_hidden = cfg.agg_hidden;
    rc.n_experts = SpamoeConfig::n_experts;
    m.router = init_router(m.store, rc, rng);
    m.fno = init_fno(m.store, cfg.fno, rng);
    m.mno = init_mno(m.store, cfg.mno, rng);
    m.lno = init_lno(m.store, cfg.lno, rng);
    m.readout = init_readout(m.store, cfg.latent_channels, rng);
    m.masks = cfg.band_kind == BandKind::soft && !cfg.normalized_masks
                  ? cached_band_masks(cfg.out_h, cfg.out_w, cfg.bands, cfg.band_sharpness,
                                      BandKind::soft)
              : cfg.band_kind == BandKind::hard
                  ? cached_band_masks(cfg.out_h, cfg.out_w, cfg.bands, cfg.band_sharpness,
                                      BandKind::hard)
                  : std::make_shared<const BandMaskSet>(gaussian_band_masks(
                        cfg.out_h, cfg.out_w, cfg.bands, cfg.band_sharpness, true));
    m.grid = radial_grid(cfg.out_h, cfg.out_w, cfg.split_radius);
    return m;
}

struct ForwardNodes {
    int y_hat = -1;   // [h, w]
    int logits = -1;  // [n_experts]
    GateNodes gates;
};

/// Full pipeline on the tape: reshape -> encode -> band decomposition ->
/// preference mixing -> spectral-energy routing -> selected expert forwards
/// -> gated fusion -> shared readout.
inline ForwardNodes model_forward(ad::Tape& t, const SpamoeModel& m, const Observation& x) {
    ForwardNodes out;
    Field2D plane = reshape_shots(x);
    int plane_id = ad::input_field(t, plane);
    int z = proxy_encode_tape(t, m.store, m.encoder, plane_id);
    int zspec = ad::dft2(t, z);

    // band features z_k = inverse(spectrum * M_k)
    std::vector<int> bands;
    for (int b = 0; b < m.masks->bands(); ++b)
        bands.push_back(ad::idft2_real(t, ad::cmask(t, zspec, m.masks->masks[b])));

    // adaptive frequency-preference mixing weights
    int raw = ad::param(t, m.store, m.pref_raw);
    int prefs = ad::logistic_op(t, raw);
    int scores = ad::affinity_scores(t, prefs, m.masks->centers, m.cfg.affinity_sharpness);
    int mixing = ad::softmax_rows(t, scores);  // [n_experts, K]
    int mixing_flat =
        ad::reshape(t, mixing, {SpamoeConfig::n_experts * m.masks->bands()});

    // spectral-energy attention router
    int amplitude = ad::energy_map_op(t, zspec);
    int tokens = ad::reshape(t, amplitude, {1, m.cfg.out_h * m.cfg.out_w});
    out.logits = attention_logits(t, m.store, m.router, tokens);
    out.gates = gate_on_tape(t, out.logits, m.cfg.top_k);

    // selected experts run on their own band mixtures
    std::vector<int> expert_outputs;
    for (int e : out.gates.selected) {
        std::vector<int> row(m.masks->bands());
        for (int k = 0; k < m.masks->bands(); ++k) row[k] = e * m.masks->bands() + k;
        int pi_row = ad::gather_vec(t, mixing_flat, row);
        int mixed = ad::lincomb(t, bands, pi_row);
        int y = -1;
        switch (e) {
            case 0: y = fno_forward_tape(t, m.store, m.fno, mixed); break;
            case 1: y = mno_forward_tape(t, m.store, m.mno, mixed); break;
            default: y = lno_forward_tape(t, m.store, m.lno, mixed); break;
        }
        expert_outputs.push_back(y);
    }
    int fused = ad::lincomb(t, expert_outputs, out.gates.alpha);
    int field = ad::conv2d(t, fused, ad::param(t, m.store, m.readout.w),
                           ad::param(t, m.store, m.readout.b));
    out.y_hat = ad::reshape(t, field, {m.cfg.out_h, m.cfg.out_w});
    return out;
}

/// Inference-style entry point: runs the tape forward once and returns the
/// prediction together with the tape (for a subsequent loss + backward) and
/// the routing decision taken.
inline std::pair<Field2D, RouterDecision> forward_with_tape(ad::Tape& t, const SpamoeModel& m,
                                                            const Observation& x,
                                                            ForwardNodes* nodes = nullptr) {
    ForwardNodes fn = model_forward(t, m, x);
    RouterDecision d;
    d.logits = t.val(fn.logits).re;
    d.selected = fn.gates.selected;
    d.alpha = t.val(fn.gates.alpha).re;
    if (nodes) *nodes = fn;
    return {ad::to_field(t.val(fn.y_hat)), d};
}

inline Field2D predict(const SpamoeModel& m, const Observation& x, RouterDecision* decision = nullptr) {
    ad::Tape t;
    auto [y, d] = forward_with_tape(t, m, x);
    if (decision) *decision = d;
    return y;
}

// ---- checkpointing: JSON manifest + raw little-endian f64 container ----

inline void save_checkpoint(const SpamoeModel& m, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = 1;
    manifest["config"] = m.cfg;
    nlohmann::json params = nlohmann::json::array();
    for (const auto& e : m.store.entries)
        params.push_back({{"name", e.name}, {"dims", e.dims}});
    manifest["params"] = params;
    {
        std::ofstream os(fs::path(dir) / "manifest.json");
        if (!os) throw IoError(dir + ": cannot write manifest");
        os << manifest.dump(2) << "\n";
    }
    std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bin) throw IoError(dir + ": cannot write params.bin");
    for (const auto& e : m.store.entries)
        bin.write(reinterpret_cast<const char*>(e.value.data()),
                  static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    if (!bin) throw IoError(dir + ": write failed");
}

inline SpamoeModel load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw IoError(dir + ": cannot open manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(is, nullptr, /*allow_exceptions=*/true);
    if (manifest.at("format").get<int>() != 1) throw IoError(dir + ": unsupported checkpoint format");
    SpamoeConfig cfg = manifest.at("config").get<SpamoeConfig>();
    SpamoeModel m = build_model(cfg);
    const auto& params = manifest.at("params");
    if (params.size() != m.store.entries.size())
        throw IoError(dir + ": parameter table does not match the configuration");
    std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bin) throw IoError(dir + ": cannot open params.bin");
    for (std::size_t i = 0; i < m.store.entries.size(); ++i) {
        auto& e = m.store.entries[i];
        if (params[i].at("name").get<std::string>() != e.name)
            throw IoError(dir + ": parameter name mismatch at " + e.name);
        if (params[i].at("dims").get<std::vector<int>>() != e.dims)
            throw IoError(dir + ": parameter dims mismatch at " + e.name);
        bin.read(reinterpret_cast<char*>(e.value.data()),
                 static_cast<std::streamsize>(e.value.size() * sizeof(double)));
        if (!bin) throw IoError(dir + ": params.bin truncated at " + e.name);
    }
    return m;
}

}  // namespace spamoe
